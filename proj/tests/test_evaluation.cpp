#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "waveforge/evaluation.hpp"
#include "waveforge/rng.hpp"

using namespace waveforge;
using namespace waveforge::eval;

namespace {

std::vector<std::vector<double>> gaussian_blobs(const std::vector<std::vector<double>>& centers,
                                                std::int64_t per_center, double stddev,
                                                std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> out;
    for (const auto& c : centers) {
        for (std::int64_t i = 0; i < per_center; ++i) {
            std::vector<double> x(c.size());
            for (std::size_t j = 0; j < c.size(); ++j) {
                x[j] = c[j] + rng.normal(0.0, stddev);
            }
            out.push_back(std::move(x));
        }
    }
    return out;
}

} // namespace

TEST_CASE("single-component fit recovers mean and variance") {
    Rng rng(3);
    std::vector<std::vector<double>> samples;
    for (int i = 0; i < 400; ++i) {
        samples.push_back({1.5 + 0.5 * rng.normal(), -2.0 + 2.0 * rng.normal()});
    }
    const auto fit = gmm_fit_em(samples, 1, 7);
    REQUIRE(fit.model.components() == 1);
    CHECK(fit.model.weights[0] == doctest::Approx(1.0));
    CHECK(fit.model.means[0][0] == doctest::Approx(1.5).epsilon(0.1));
    CHECK(fit.model.means[0][1] == doctest::Approx(-2.0).epsilon(0.1));
    CHECK(fit.model.covs[0][0] == doctest::Approx(0.25).epsilon(0.15));
    CHECK(fit.model.covs[0][1] == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("two separated clusters are recovered") {
    const auto samples = gaussian_blobs({{-4.0, 0.0}, {4.0, 1.0}}, 200, 0.3, 5);
    const auto fit = gmm_fit_em(samples, 2, 11);
    const auto& m = fit.model.means;
    const bool order_a = std::abs(m[0][0] + 4.0) < 0.1 && std::abs(m[1][0] - 4.0) < 0.1;
    const bool order_b = std::abs(m[0][0] - 4.0) < 0.1 && std::abs(m[1][0] + 4.0) < 0.1;
    CHECK((order_a || order_b));
}

TEST_CASE("EM log-likelihood trace is non-decreasing") {
    const auto samples = gaussian_blobs({{0.0, 0.0}, {3.0, 3.0}, {-3.0, 2.0}}, 120, 0.5, 9);
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const auto fit = gmm_fit_em(samples, 3, seed);
        for (std::size_t i = 1; i < fit.ll_trace.size(); ++i) {
            CHECK(fit.ll_trace[i] >=
                  fit.ll_trace[i - 1] - 1e-9 * (1.0 + std::abs(fit.ll_trace[i - 1])));
        }
    }
}

TEST_CASE("degenerate inputs are rejected") {
    std::vector<std::vector<double>> identical(20, std::vector<double>{1.0, 2.0});
    CHECK_THROWS_AS(gmm_fit_em(identical, 2, 1), ValueError);
    std::vector<std::vector<double>> few = {{0.0}, {1.0}};
    CHECK_THROWS_AS(gmm_fit_em(few, 2, 1), ValueError);
}

TEST_CASE("log likelihood matches the closed form and a direct summation") {
    // Standard normal in one dimension at x = 0.
    GmmModel std_normal;
    std_normal.cov_type = CovType::Diagonal;
    std_normal.dim = 1;
    std_normal.weights = {1.0};
    std_normal.means = {{0.0}};
    std_normal.covs = {{1.0}};
    const double ll = gmm_log_likelihood(std_normal, {{0.0}});
    CHECK(ll == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK(ll == doctest::Approx(-0.91894).epsilon(1e-4));

    // Direct density summation oracle on a 2-component mixture.
    GmmModel mix;
    mix.cov_type = CovType::Diagonal;
    mix.dim = 2;
    mix.weights = {0.3, 0.7};
    mix.means = {{0.0, 1.0}, {2.0, -1.0}};
    mix.covs = {{1.0, 0.5}, {2.0, 1.5}};
    Rng rng(13);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 10; ++i) {
        pts.push_back({rng.normal(), rng.normal()});
    }
    auto direct_density = [&](const std::vector<double>& x) {
        double p = 0.0;
        for (std::size_t c = 0; c < mix.weights.size(); ++c) {
            double q = 1.0;
            for (std::size_t j = 0; j < 2; ++j) {
                const double v = mix.covs[c][j];
                const double d = x[j] - mix.means[c][j];
                q *= std::exp(-0.5 * d * d / v) / std::sqrt(2.0 * std::numbers::pi * v);
            }
            p += mix.weights[c] * q;
        }
        return p;
    };
    double direct = 0.0;
    for (const auto& x : pts) {
        direct += std::log(direct_density(x));
    }
    direct /= static_cast<double>(pts.size());
    CHECK(gmm_log_likelihood(mix, pts) == doctest::Approx(direct).epsilon(1e-10));

    // Splitting a component into two identical halves leaves the value
    // unchanged.
    GmmModel split = mix;
    split.weights = {0.3, 0.35, 0.35};
    split.means.push_back(split.means[1]);
    split.covs.push_back(split.covs[1]);
    CHECK(gmm_log_likelihood(split, pts) ==
          doctest::Approx(gmm_log_likelihood(mix, pts)).epsilon(1e-12));

    CHECK_THROWS_AS(gmm_log_likelihood(mix, {{1.0}}), ShapeError);
}

TEST_CASE("full covariance density agrees with diagonal on diagonal input") {
    GmmModel diag;
    diag.cov_type = CovType::Diagonal;
    diag.dim = 2;
    diag.weights = {1.0};
    diag.means = {{0.5, -0.5}};
    diag.covs = {{2.0, 0.7}};
    GmmModel full = diag;
    full.cov_type = CovType::Full;
    full.covs = {{2.0, 0.0, 0.0, 0.7}};
    Rng rng(17);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 6; ++i) {
        pts.push_back({rng.normal(), rng.normal()});
    }
    CHECK(gmm_log_likelihood(full, pts) ==
          doctest::Approx(gmm_log_likelihood(diag, pts)).epsilon(1e-12));
}

TEST_CASE("BIC selects the generating component count") {
    // Single Gaussian: K* = 1 in at least 90% of seeds.
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        std::vector<std::vector<double>> samples;
        for (int i = 0; i < 150; ++i) {
            samples.push_back({rng.normal(), rng.normal()});
        }
        const auto sel = gmm_select_k(samples, 1, 4, seed);
        // argmin property: the winner's BIC is minimal over the range.
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [k, bic] : sel.bic_by_k) {
            best = std::min(best, bic);
        }
        for (const auto& [k, bic] : sel.bic_by_k) {
            if (k == sel.k) {
                CHECK(bic == doctest::Approx(best));
            }
        }
        hits += sel.k == 1 ? 1 : 0;
    }
    CHECK(hits >= 18);

    // Three well-separated clusters: K* = 3.
    hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto samples =
            gaussian_blobs({{-6.0, 0.0}, {0.0, 6.0}, {6.0, 0.0}}, 80, 0.6, 200 + seed);
        const auto sel = gmm_select_k(samples, 1, 5, seed);
        hits += sel.k == 3 ? 1 : 0;
    }
    CHECK(hits >= 18);
}

TEST_CASE("selection is deterministic in data and seed") {
    const auto samples = gaussian_blobs({{-3.0, 1.0}, {3.0, -1.0}}, 100, 0.5, 31);
    const auto a = gmm_select_k(samples, 1, 4, 9);
    const auto b = gmm_select_k(samples, 1, 4, 9);
    CHECK(a.k == b.k);
    CHECK(a.fit.model.means == b.fit.model.means);
}

TEST_CASE("gmm sampling reproduces the mixture statistics") {
    GmmModel mix;
    mix.cov_type = CovType::Diagonal;
    mix.dim = 1;
    mix.weights = {0.5, 0.5};
    mix.means = {{-2.0}, {2.0}};
    mix.covs = {{0.25}, {0.25}};
    const auto draws = gmm_sample(mix, 4000, 3);
    double mean = 0.0;
    for (const auto& x : draws) {
        mean += x[0];
    }
    mean /= 4000.0;
    CHECK(std::abs(mean) < 0.1);
    const double ll = gmm_log_likelihood(mix, draws);
    CHECK(ll > -2.0);
    CHECK(ll < 0.0);
}

TEST_CASE("spectral artifact ratio") {
    constexpr std::int64_t kT = 64;
    std::vector<double> tone(kT);
    for (std::int64_t t = 0; t < kT; ++t) {
        tone[static_cast<std::size_t>(t)] =
            std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / 64.0);
    }
    CHECK(spectral_artifact_ratio({tone}, {5}) < 1e-20);

    // White noise spreads energy evenly: excluding one bin keeps roughly
    // 1 - 1/31 of it.
    Rng rng(23);
    std::vector<std::vector<double>> noise(256, std::vector<double>(kT));
    for (auto& s : noise) {
        for (auto& v : s) {
            v = rng.normal();
        }
    }
    const double ratio = spectral_artifact_ratio(noise, {5});
    CHECK(ratio == doctest::Approx(1.0 - 1.0 / 31.0).epsilon(0.01));

    // Sinusoid plus an alternating-sign ripple of equal power: half the
    // energy sits outside the signal bin.
    std::vector<double> two_tone(kT);
    const double ripple = 1.0 / std::sqrt(2.0); // power of a unit sine
    for (std::int64_t t = 0; t < kT; ++t) {
        two_tone[static_cast<std::size_t>(t)] =
            tone[static_cast<std::size_t>(t)] + ripple * (t % 2 == 0 ? 1.0 : -1.0);
    }
    CHECK(spectral_artifact_ratio({two_tone}, {5}) == doctest::Approx(0.5).epsilon(1e-9));

    CHECK(dominant_bin(tone) == 5);
    CHECK(fitted_amplitude(tone, 5) == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(spectral_artifact_ratio({tone}, {0}), ValueError);
    CHECK_THROWS_AS(spectral_artifact_ratio({tone}, {33}), ValueError);
}

TEST_CASE("spectral artifact ratio stays within the unit interval") {
    Rng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::vector<double>> batch(4, std::vector<double>(64));
        for (auto& s : batch) {
            for (auto& v : s) {
                v = rng.normal(0.0, 1.0 + rep);
            }
        }
        const double r = spectral_artifact_ratio(batch, {3, 4, 5});
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("averaged waveform is the pointwise mean") {
    const std::vector<std::vector<double>> samples = {{1, 2, 3}, {3, 2, 1}};
    const auto avg = averaged_waveform(samples);
    CHECK(avg == std::vector<double>{2, 2, 2});
}

TEST_CASE("roc auc analytic and oracle cases") {
    CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(0.0));

    // Brute-force pair counting on 20 points (ties count half).
    Rng rng(37);
    std::vector<double> scores(20);
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < 20; ++i) {
        scores[i] = std::round(rng.normal() * 4.0) / 4.0; // provoke ties
        labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    double pairs = 0.0;
    double wins = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        for (std::size_t j = 0; j < 20; ++j) {
            if (labels[i] == 1 && labels[j] == 0) {
                pairs += 1.0;
                if (scores[i] > scores[j]) {
                    wins += 1.0;
                } else if (scores[i] == scores[j]) {
                    wins += 0.5;
                }
            }
        }
    }
    CHECK(roc_auc(scores, labels) == doctest::Approx(wins / pairs).epsilon(1e-12));

    // Negating tie-free scores mirrors the statistic.
    std::vector<double> unique_scores(20);
    for (std::size_t i = 0; i < 20; ++i) {
        unique_scores[i] = rng.normal() + static_cast<double>(i) * 1e-6;
    }
    std::vector<double> negated(20);
    for (std::size_t i = 0; i < 20; ++i) {
        negated[i] = -unique_scores[i];
    }
    CHECK(roc_auc(negated, labels) ==
          doctest::Approx(1.0 - roc_auc(unique_scores, labels)).epsilon(1e-12));

    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), ValueError);
}

TEST_CASE("welch t test distinguishes shifted samples") {
    Rng rng(41);
    std::vector<double> a(60);
    std::vector<double> b(60);
    std::vector<double> c(60);
    for (std::size_t i = 0; i < 60; ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal() + 1.5;
        c[i] = rng.normal();
    }
    CHECK(welch_t_test(a, b).p < 1e-6);
    CHECK(welch_t_test(a, c).p > 0.05);
}

TEST_CASE("quality report serializes to parsable CSV") {
    QualityReport report;
    report.k_per_channel = {3};
    report.ll_real = -66.07;
    report.ll_gen = -54.48;
    report.ll_gmm = -60.0;
    report.dist_real_gmm = 6.07;
    report.dist_gen_gmm = 5.52;
    report.real_gen_gap = 11.59;
    report.artifact_ratio_real = 0.9;
    report.artifact_ratio_gen = 0.4;
    const std::string csv = report.to_csv();
    CHECK(csv.find("metric,value") == 0);
    CHECK(csv.find("dist_real_gmm,6.07") != std::string::npos);
    CHECK(report.to_text().find("sample quality report") != std::string::npos);
}
