#include "waveforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "waveforge/rng.hpp"

namespace waveforge {
namespace eval {

namespace {

constexpr double kCovFloor = 1e-6;
constexpr double kLog2Pi = 1.8378770664093453;

struct CholeskyFactor {
    std::vector<double> l; // lower triangular, row-major d x d
    double log_det = 0.0;  // of the covariance
};

CholeskyFactor cholesky(const std::vector<double>& cov, std::int64_t d) {
    CholeskyFactor f;
    f.l.assign(static_cast<std::size_t>(d * d), 0.0);
    for (std::int64_t i = 0; i < d; ++i) {
        for (std::int64_t j = 0; j <= i; ++j) {
            double s = cov[static_cast<std::size_t>(i * d + j)];
            for (std::int64_t k = 0; k < j; ++k) {
                s -= f.l[static_cast<std::size_t>(i * d + k)] *
                     f.l[static_cast<std::size_t>(j * d + k)];
            }
            if (i == j) {
                if (s <= 0.0) {
                    throw NumericError("gmm: covariance lost positive definiteness");
                }
                f.l[static_cast<std::size_t>(i * d + i)] = std::sqrt(s);
                f.log_det += 2.0 * std::log(f.l[static_cast<std::size_t>(i * d + i)]);
            } else {
                f.l[static_cast<std::size_t>(i * d + j)] =
                    s / f.l[static_cast<std::size_t>(j * d + j)];
            }
        }
    }
    return f;
}

// Per-component helpers for the log density.
struct ComponentDensity {
    const GmmModel* model;
    std::vector<CholeskyFactor> chol;             // full covariance only
    std::vector<double> log_norm;                 // -(d/2)log(2pi) - 0.5 log|S|
    std::vector<std::vector<double>> inv_var;     // diagonal only

    explicit ComponentDensity(const GmmModel& m) : model(&m) {
        const std::int64_t k = m.components();
        const std::int64_t d = m.dim;
        log_norm.resize(static_cast<std::size_t>(k));
        if (m.cov_type == CovType::Full) {
            chol.reserve(static_cast<std::size_t>(k));
            for (std::int64_t c = 0; c < k; ++c) {
                chol.push_back(cholesky(m.covs[static_cast<std::size_t>(c)], d));
                log_norm[static_cast<std::size_t>(c)] =
                    -0.5 * (static_cast<double>(d) * kLog2Pi + chol.back().log_det);
            }
        } else {
            inv_var.resize(static_cast<std::size_t>(k));
            for (std::int64_t c = 0; c < k; ++c) {
                const auto& v = m.covs[static_cast<std::size_t>(c)];
                double log_det = 0.0;
                auto& iv = inv_var[static_cast<std::size_t>(c)];
                iv.resize(static_cast<std::size_t>(d));
                for (std::int64_t j = 0; j < d; ++j) {
                    log_det += std::log(v[static_cast<std::size_t>(j)]);
                    iv[static_cast<std::size_t>(j)] = 1.0 / v[static_cast<std::size_t>(j)];
                }
                log_norm[static_cast<std::size_t>(c)] =
                    -0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
            }
        }
    }

    double log_density(std::int64_t c, const std::vector<double>& x) const {
        const std::int64_t d = model->dim;
        const auto& mu = model->means[static_cast<std::size_t>(c)];
        if (model->cov_type == CovType::Diagonal) {
            const auto& iv = inv_var[static_cast<std::size_t>(c)];
            double q = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                const double t = x[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)];
                q += t * t * iv[static_cast<std::size_t>(j)];
            }
            return log_norm[static_cast<std::size_t>(c)] - 0.5 * q;
        }
        // Solve L y = (x - mu); quadratic form is |y|^2.
        const auto& l = chol[static_cast<std::size_t>(c)].l;
        std::vector<double> y(static_cast<std::size_t>(d));
        for (std::int64_t i = 0; i < d; ++i) {
            double s = x[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)];
            for (std::int64_t k = 0; k < i; ++k) {
                s -= l[static_cast<std::size_t>(i * d + k)] * y[static_cast<std::size_t>(k)];
            }
            y[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i * d + i)];
        }
        double q = 0.0;
        for (const double v : y) {
            q += v * v;
        }
        return log_norm[static_cast<std::size_t>(c)] - 0.5 * q;
    }
};

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) {
        return m;
    }
    double s = 0.0;
    for (const double x : v) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

void validate_samples(const std::vector<std::vector<double>>& samples, const char* what) {
    if (samples.empty()) {
        throw ValueError(std::string(what) + ": empty sample set");
    }
    const std::size_t d = samples.front().size();
    if (d == 0) {
        throw ValueError(std::string(what) + ": zero-dimensional samples");
    }
    for (const auto& s : samples) {
        if (s.size() != d) {
            throw ShapeError(std::string(what) + ": ragged sample dimensions");
        }
    }
}

std::int64_t free_parameters(const GmmModel& m) {
    const std::int64_t k = m.components();
    const std::int64_t d = m.dim;
    const std::int64_t cov_params =
        m.cov_type == CovType::Diagonal ? k * d : k * d * (d + 1) / 2;
    return (k - 1) + k * d + cov_params;
}

} // namespace

GmmFit gmm_fit_em(const std::vector<std::vector<double>>& samples, int k, std::uint64_t seed,
                  CovType cov_type, int max_iter, double tol) {
    validate_samples(samples, "gmm_fit_em");
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    const std::int64_t d = static_cast<std::int64_t>(samples.front().size());
    if (k < 1) {
        throw ValueError("gmm_fit_em: k must be >= 1");
    }
    if (n <= k) {
        throw ValueError("gmm_fit_em: need more samples than components (" + std::to_string(n) +
                         " <= " + std::to_string(k) + ")");
    }
    // Degenerate data cannot identify any mixture.
    {
        bool all_equal = true;
        for (std::int64_t i = 1; i < n && all_equal; ++i) {
            all_equal = samples[static_cast<std::size_t>(i)] == samples.front();
        }
        if (all_equal) {
            throw ValueError("gmm_fit_em: all samples identical; mixture is degenerate");
        }
    }

    Rng rng(seed);

    // k-means++ seeding.
    std::vector<std::int64_t> centers;
    centers.push_back(rng.uniform_int(n));
    std::vector<double> dist2(static_cast<std::size_t>(n), 0.0);
    auto sqdist = [&](std::int64_t a, std::int64_t b) {
        const auto& xa = samples[static_cast<std::size_t>(a)];
        const auto& xb = samples[static_cast<std::size_t>(b)];
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double t = xa[static_cast<std::size_t>(j)] - xb[static_cast<std::size_t>(j)];
            s += t * t;
        }
        return s;
    };
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            double best = sqdist(i, centers.front());
            for (std::size_t c = 1; c < centers.size(); ++c) {
                best = std::min(best, sqdist(i, centers[c]));
            }
            dist2[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        if (total <= 0.0) {
            // Fewer distinct points than components; reuse an arbitrary one.
            centers.push_back(rng.uniform_int(n));
            continue;
        }
        double r = rng.uniform() * total;
        std::int64_t pick = n - 1;
        for (std::int64_t i = 0; i < n; ++i) {
            r -= dist2[static_cast<std::size_t>(i)];
            if (r <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pick);
    }

    GmmModel model;
    model.cov_type = cov_type;
    model.dim = d;
    model.weights.assign(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
    model.means.resize(static_cast<std::size_t>(k));
    model.covs.resize(static_cast<std::size_t>(k));

    // Global variance as the initial spread of every component.
    std::vector<double> gmean(static_cast<std::size_t>(d), 0.0);
    for (const auto& s : samples) {
        for (std::int64_t j = 0; j < d; ++j) {
            gmean[static_cast<std::size_t>(j)] += s[static_cast<std::size_t>(j)];
        }
    }
    for (auto& v : gmean) {
        v /= static_cast<double>(n);
    }
    std::vector<double> gvar(static_cast<std::size_t>(d), 0.0);
    for (const auto& s : samples) {
        for (std::int64_t j = 0; j < d; ++j) {
            const double t = s[static_cast<std::size_t>(j)] - gmean[static_cast<std::size_t>(j)];
            gvar[static_cast<std::size_t>(j)] += t * t;
        }
    }
    for (auto& v : gvar) {
        v = std::max(v / static_cast<double>(n), kCovFloor);
    }

    for (int c = 0; c < k; ++c) {
        model.means[static_cast<std::size_t>(c)] =
            samples[static_cast<std::size_t>(centers[static_cast<std::size_t>(c)])];
        if (cov_type == CovType::Diagonal) {
            model.covs[static_cast<std::size_t>(c)] = gvar;
        } else {
            std::vector<double> cov(static_cast<std::size_t>(d * d), 0.0);
            for (std::int64_t j = 0; j < d; ++j) {
                cov[static_cast<std::size_t>(j * d + j)] = gvar[static_cast<std::size_t>(j)];
            }
            model.covs[static_cast<std::size_t>(c)] = std::move(cov);
        }
    }

    GmmFit fit;
    std::vector<std::vector<double>> resp(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(k)));
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iter; ++iter) {
        // E step.
        ComponentDensity density(model);
        double ll = 0.0;
        std::vector<double> logp(static_cast<std::size_t>(k));
        for (std::int64_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c) {
                logp[static_cast<std::size_t>(c)] =
                    std::log(model.weights[static_cast<std::size_t>(c)]) +
                    density.log_density(c, samples[static_cast<std::size_t>(i)]);
            }
            const double lse = log_sum_exp(logp);
            ll += lse;
            for (int c = 0; c < k; ++c) {
                resp[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
                    std::exp(logp[static_cast<std::size_t>(c)] - lse);
            }
        }
        const double mean_ll = ll / static_cast<double>(n);
        if (!std::isfinite(mean_ll)) {
            throw NumericError("gmm_fit_em: non-finite log-likelihood");
        }
        if (!fit.ll_trace.empty() &&
            mean_ll < fit.ll_trace.back() - 1e-9 * (1.0 + std::abs(fit.ll_trace.back()))) {
            throw NumericError("gmm_fit_em: log-likelihood decreased across an EM iteration");
        }
        fit.ll_trace.push_back(mean_ll);
        fit.iterations = iter + 1;
        if (iter > 0 && std::abs(mean_ll - prev_ll) < tol * (1.0 + std::abs(prev_ll))) {
            fit.converged = true;
            break;
        }
        prev_ll = mean_ll;

        // M step.
        for (int c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                nk += resp[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            }
            nk = std::max(nk, 1e-12);
            model.weights[static_cast<std::size_t>(c)] = nk / static_cast<double>(n);
            auto& mu = model.means[static_cast<std::size_t>(c)];
            std::fill(mu.begin(), mu.end(), 0.0);
            for (std::int64_t i = 0; i < n; ++i) {
                const double r = resp[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                const auto& x = samples[static_cast<std::size_t>(i)];
                for (std::int64_t j = 0; j < d; ++j) {
                    mu[static_cast<std::size_t>(j)] += r * x[static_cast<std::size_t>(j)];
                }
            }
            for (auto& v : mu) {
                v /= nk;
            }
            if (cov_type == CovType::Diagonal) {
                auto& var = model.covs[static_cast<std::size_t>(c)];
                std::fill(var.begin(), var.end(), 0.0);
                for (std::int64_t i = 0; i < n; ++i) {
                    const double r =
                        resp[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                    const auto& x = samples[static_cast<std::size_t>(i)];
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double t =
                            x[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)];
                        var[static_cast<std::size_t>(j)] += r * t * t;
                    }
                }
                for (auto& v : var) {
                    v = std::max(v / nk, kCovFloor);
                }
            } else {
                auto& cov = model.covs[static_cast<std::size_t>(c)];
                std::fill(cov.begin(), cov.end(), 0.0);
                std::vector<double> diff(static_cast<std::size_t>(d));
                for (std::int64_t i = 0; i < n; ++i) {
                    const double r =
                        resp[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
                    const auto& x = samples[static_cast<std::size_t>(i)];
                    for (std::int64_t j = 0; j < d; ++j) {
                        diff[static_cast<std::size_t>(j)] =
                            x[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)];
                    }
                    for (std::int64_t a = 0; a < d; ++a) {
                        const double ra = r * diff[static_cast<std::size_t>(a)];
                        for (std::int64_t b = 0; b <= a; ++b) {
                            cov[static_cast<std::size_t>(a * d + b)] +=
                                ra * diff[static_cast<std::size_t>(b)];
                        }
                    }
                }
                for (std::int64_t a = 0; a < d; ++a) {
                    for (std::int64_t b = 0; b <= a; ++b) {
                        double v = cov[static_cast<std::size_t>(a * d + b)] / nk;
                        if (a == b) {
                            v = std::max(v, kCovFloor);
                        }
                        cov[static_cast<std::size_t>(a * d + b)] = v;
                        cov[static_cast<std::size_t>(b * d + a)] = v;
                    }
                }
            }
        }
    }
    fit.model = std::move(model);
    return fit;
}

double gmm_log_likelihood(const GmmModel& model, const std::vector<std::vector<double>>& samples) {
    validate_samples(samples, "gmm_log_likelihood");
    if (static_cast<std::int64_t>(samples.front().size()) != model.dim) {
        throw ShapeError("gmm_log_likelihood: sample dimension " +
                         std::to_string(samples.front().size()) + " does not match model dim " +
                         std::to_string(model.dim));
    }
    ComponentDensity density(model);
    const std::int64_t k = model.components();
    std::vector<double> logp(static_cast<std::size_t>(k));
    double total = 0.0;
    for (const auto& x : samples) {
        for (std::int64_t c = 0; c < k; ++c) {
            logp[static_cast<std::size_t>(c)] =
                std::log(model.weights[static_cast<std::size_t>(c)]) + density.log_density(c, x);
        }
        total += log_sum_exp(logp);
    }
    return total / static_cast<double>(samples.size());
}

double gmm_bic(const GmmModel& model, const std::vector<std::vector<double>>& samples) {
    const double n = static_cast<double>(samples.size());
    const double total_ll = gmm_log_likelihood(model, samples) * n;
    return static_cast<double>(free_parameters(model)) * std::log(n) - 2.0 * total_ll;
}

GmmSelection gmm_select_k(const std::vector<std::vector<double>>& samples, int k_min, int k_max,
                          std::uint64_t seed, CovType cov_type) {
    if (k_min < 1 || k_max < k_min) {
        throw ValueError("gmm_select_k: empty or invalid component range");
    }
    if (static_cast<std::size_t>(k_max) >= samples.size()) {
        throw ValueError("gmm_select_k: k_max must be below the sample count");
    }
    GmmSelection best;
    double best_bic = std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        // Shared schedule: the seed for each K is fixed by (seed, K) alone.
        GmmFit fit = gmm_fit_em(samples, k, seed + static_cast<std::uint64_t>(k), cov_type);
        const double bic = gmm_bic(fit.model, samples);
        best.bic_by_k.emplace_back(k, bic);
        if (best.k == 0 || bic < best_bic) {
            best.k = k;
            best.fit = std::move(fit);
            best_bic = bic;
        }
    }
    return best;
}

std::vector<std::vector<double>> gmm_sample(const GmmModel& model, std::int64_t n,
                                            std::uint64_t seed) {
    if (n < 1) {
        throw ValueError("gmm_sample: n must be >= 1");
    }
    Rng rng(seed);
    const std::int64_t d = model.dim;
    std::vector<CholeskyFactor> chol;
    if (model.cov_type == CovType::Full) {
        for (const auto& cov : model.covs) {
            chol.push_back(cholesky(cov, d));
        }
    }
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double r = rng.uniform();
        std::size_t c = 0;
        for (; c + 1 < model.weights.size(); ++c) {
            if (r < model.weights[c]) {
                break;
            }
            r -= model.weights[c];
        }
        std::vector<double> x(static_cast<std::size_t>(d));
        if (model.cov_type == CovType::Diagonal) {
            for (std::int64_t j = 0; j < d; ++j) {
                x[static_cast<std::size_t>(j)] =
                    model.means[c][static_cast<std::size_t>(j)] +
                    std::sqrt(model.covs[c][static_cast<std::size_t>(j)]) * rng.normal();
            }
        } else {
            std::vector<double> z(static_cast<std::size_t>(d));
            for (auto& v : z) {
                v = rng.normal();
            }
            const auto& l = chol[c].l;
            for (std::int64_t a = 0; a < d; ++a) {
                double s = model.means[c][static_cast<std::size_t>(a)];
                for (std::int64_t b = 0; b <= a; ++b) {
                    s += l[static_cast<std::size_t>(a * d + b)] * z[static_cast<std::size_t>(b)];
                }
                x[static_cast<std::size_t>(a)] = s;
            }
        }
        out.push_back(std::move(x));
    }
    return out;
}

// ---- spectra --------------------------------------------------------------------

std::vector<double> one_sided_energy(const std::vector<double>& signal) {
    const std::int64_t t = static_cast<std::int64_t>(signal.size());
    if (t < 2) {
        throw ValueError("one_sided_energy: signal too short");
    }
    const std::int64_t half = t / 2;
    std::vector<double> energy(static_cast<std::size_t>(half + 1), 0.0);
    const double w0 = 2.0 * std::numbers::pi / static_cast<double>(t);
    for (std::int64_t k = 0; k <= half; ++k) {
        double re = 0.0;
        double im = 0.0;
        for (std::int64_t i = 0; i < t; ++i) {
            const double a = w0 * static_cast<double>(k) * static_cast<double>(i);
            re += signal[static_cast<std::size_t>(i)] * std::cos(a);
            im -= signal[static_cast<std::size_t>(i)] * std::sin(a);
        }
        const bool shared = k == 0 || 2 * k == t;
        energy[static_cast<std::size_t>(k)] = (shared ? 1.0 : 2.0) * (re * re + im * im);
    }
    return energy;
}

double spectral_artifact_ratio(const std::vector<std::vector<double>>& samples,
                               const std::vector<int>& band_bins) {
    validate_samples(samples, "spectral_artifact_ratio");
    const std::int64_t t = static_cast<std::int64_t>(samples.front().size());
    const std::int64_t half = t / 2;
    for (const int b : band_bins) {
        if (b < 1 || b > half) {
            throw ValueError("spectral_artifact_ratio: band bin " + std::to_string(b) +
                             " outside [1, " + std::to_string(half) + "]");
        }
    }
    double total_ratio = 0.0;
    for (const auto& s : samples) {
        const auto energy = one_sided_energy(s);
        double total = 0.0;
        for (std::int64_t k = 1; k <= half; ++k) {
            total += energy[static_cast<std::size_t>(k)];
        }
        double in_band = 0.0;
        for (const int b : band_bins) {
            in_band += energy[static_cast<std::size_t>(b)];
        }
        total_ratio += total > 0.0 ? (total - in_band) / total : 0.0;
    }
    return total_ratio / static_cast<double>(samples.size());
}

int dominant_bin(const std::vector<double>& signal) {
    const auto energy = one_sided_energy(signal);
    int best = 1;
    for (std::size_t k = 2; k < energy.size(); ++k) {
        if (energy[k] > energy[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

double fitted_amplitude(const std::vector<double>& signal, int bin) {
    const std::int64_t t = static_cast<std::int64_t>(signal.size());
    if (bin < 1 || 2 * bin > t) {
        throw ValueError("fitted_amplitude: bin out of range");
    }
    const double w0 = 2.0 * std::numbers::pi / static_cast<double>(t);
    double re = 0.0;
    double im = 0.0;
    for (std::int64_t i = 0; i < t; ++i) {
        const double a = w0 * static_cast<double>(bin) * static_cast<double>(i);
        re += signal[static_cast<std::size_t>(i)] * std::cos(a);
        im -= signal[static_cast<std::size_t>(i)] * std::sin(a);
    }
    const double mag = std::sqrt(re * re + im * im);
    const bool nyquist = 2 * bin == t;
    return (nyquist ? 1.0 : 2.0) * mag / static_cast<double>(t);
}

// ---- sample statistics -------------------------------------------------------------

std::vector<double> averaged_waveform(const std::vector<std::vector<double>>& samples) {
    validate_samples(samples, "averaged_waveform");
    std::vector<double> mean(samples.front().size(), 0.0);
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean[i] += s[i];
        }
    }
    for (auto& v : mean) {
        v /= static_cast<double>(samples.size());
    }
    return mean;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ShapeError("roc_auc: scores and labels must be equal-length and non-empty");
    }
    std::int64_t n_pos = 0;
    for (const int l : labels) {
        if (l != 0 && l != 1) {
            throw ValueError("roc_auc: labels must be 0 or 1");
        }
        n_pos += l;
    }
    const std::int64_t n = static_cast<std::int64_t>(scores.size());
    const std::int64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw ValueError("roc_auc: both classes must be present");
    }
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
    });
    // Average ranks over tie groups, then Mann-Whitney U.
    std::vector<double> rank(static_cast<std::size_t>(n));
    std::int64_t i = 0;
    while (i < n) {
        std::int64_t j = i;
        while (j + 1 < n && scores[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])] ==
                                scores[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]) {
            ++j;
        }
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::int64_t q = i; q <= j; ++q) {
            rank[static_cast<std::size_t>(order[static_cast<std::size_t>(q)])] = avg;
        }
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (std::int64_t idx = 0; idx < n; ++idx) {
        if (labels[static_cast<std::size_t>(idx)] == 1) {
            rank_sum_pos += rank[static_cast<std::size_t>(idx)];
        }
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

// Regularized incomplete beta by Lentz's continued fraction.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-14;
    constexpr double kTiny = 1e-30;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            break;
        }
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace

TTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw ValueError("welch_t_test: each sample needs >= 2 observations");
    }
    auto moments = [](const std::vector<double>& v) {
        double m = 0.0;
        for (const double x : v) {
            m += x;
        }
        m /= static_cast<double>(v.size());
        double s2 = 0.0;
        for (const double x : v) {
            s2 += (x - m) * (x - m);
        }
        s2 /= static_cast<double>(v.size() - 1);
        return std::pair<double, double>{m, s2};
    };
    const auto [m1, v1] = moments(a);
    const auto [m2, v2] = moments(b);
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    const double se2 = v1 / n1 + v2 / n2;
    TTest r;
    if (se2 <= 0.0) {
        r.t = m1 == m2 ? 0.0 : std::numeric_limits<double>::infinity();
        r.df = n1 + n2 - 2.0;
        r.p = m1 == m2 ? 1.0 : 0.0;
        return r;
    }
    r.t = (m1 - m2) / std::sqrt(se2);
    r.df = se2 * se2 /
           (v1 * v1 / (n1 * n1 * (n1 - 1.0)) + v2 * v2 / (n2 * n2 * (n2 - 1.0)));
    r.p = reg_inc_beta(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
    return r;
}

// ---- reporting ------------------------------------------------------------------------

std::string QualityReport::to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "metric,value\n";
    os << "ll_real," << ll_real << "\n";
    os << "ll_gen," << ll_gen << "\n";
    os << "ll_gmm," << ll_gmm << "\n";
    os << "dist_real_gmm," << dist_real_gmm << "\n";
    os << "dist_gen_gmm," << dist_gen_gmm << "\n";
    os << "real_gen_gap," << real_gen_gap << "\n";
    os << "artifact_ratio_real," << artifact_ratio_real << "\n";
    os << "artifact_ratio_gen," << artifact_ratio_gen << "\n";
    os << "k_per_channel,";
    for (std::size_t i = 0; i < k_per_channel.size(); ++i) {
        os << (i ? ";" : "") << k_per_channel[i];
    }
    os << "\n";
    return os.str();
}

std::string QualityReport::to_text() const {
    std::ostringstream os;
    os.precision(6);
    os << "sample quality report\n";
    os << "  mixture components per channel:";
    for (const auto k : k_per_channel) {
        os << ' ' << k;
    }
    os << "\n";
    os << "  mean log-likelihood  real: " << ll_real << "  generated: " << ll_gen
       << "  mixture draws: " << ll_gmm << "\n";
    os << "  distance real~gmm: " << dist_real_gmm << "  gen~gmm: " << dist_gen_gmm
       << "  |real-gen|: " << real_gen_gap << "\n";
    os << "  spectral artifact ratio  real: " << artifact_ratio_real
       << "  generated: " << artifact_ratio_gen << "\n";
    return os.str();
}

} // namespace eval
} // namespace waveforge
