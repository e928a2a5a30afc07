#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "waveforge/error.hpp"

namespace waveforge {
namespace eval {

// ---- Gaussian mixture models ----------------------------------------------------

enum class CovType { Diagonal, Full };

struct GmmModel {
    CovType cov_type = CovType::Diagonal;
    std::int64_t dim = 0;
    std::vector<double> weights;            // K, positive, sums to 1
    std::vector<std::vector<double>> means; // K x d
    // Diagonal: K x d variances. Full: K x (d*d) row-major covariance.
    std::vector<std::vector<double>> covs;

    std::int64_t components() const { return static_cast<std::int64_t>(weights.size()); }
};

struct GmmFit {
    GmmModel model;
    std::vector<double> ll_trace; // mean log-likelihood after every EM iteration
    bool converged = false;
    int iterations = 0;
};

// EM with k-means++ style seeding, covariance floor 1e-6, convergence on
// relative log-likelihood change < tol. Log-likelihood is asserted
// non-decreasing across iterations.
GmmFit gmm_fit_em(const std::vector<std::vector<double>>& samples, int k, std::uint64_t seed,
                  CovType cov_type = CovType::Diagonal, int max_iter = 500, double tol = 1e-7);

// Mean over samples of log p(x) under the mixture (log-sum-exp stabilized).
double gmm_log_likelihood(const GmmModel& model, const std::vector<std::vector<double>>& samples);

// p * ln(n) - 2 * ln(L_hat) with p counting free parameters.
double gmm_bic(const GmmModel& model, const std::vector<std::vector<double>>& samples);

struct GmmSelection {
    int k = 0;
    GmmFit fit;
    std::vector<std::pair<int, double>> bic_by_k;
};

// Fits every K in [k_min, k_max] under a shared seed schedule and returns the
// BIC argmin (ties resolved toward the smaller K).
GmmSelection gmm_select_k(const std::vector<std::vector<double>>& samples, int k_min, int k_max,
                          std::uint64_t seed, CovType cov_type = CovType::Diagonal);

std::vector<std::vector<double>> gmm_sample(const GmmModel& model, std::int64_t n,
                                            std::uint64_t seed);

// ---- spectra ------------------------------------------------------------------------

// One-sided spectral energies of a real signal: index k in [0, T/2]; interior
// bins carry twice |X_k|^2 so the energies add up Parseval-style.
std::vector<double> one_sided_energy(const std::vector<double>& signal);

// Fraction of non-DC spectral energy outside the signal band, averaged over
// the batch. Band bins must lie in [1, T/2].
double spectral_artifact_ratio(const std::vector<std::vector<double>>& samples,
                               const std::vector<int>& band_bins);

// Arg-max energy bin over [1, T/2].
int dominant_bin(const std::vector<double>& signal);

// Amplitude of the sinusoid component at `bin` (least-squares fit).
double fitted_amplitude(const std::vector<double>& signal, int bin);

// ---- sample statistics ------------------------------------------------------------

std::vector<double> averaged_waveform(const std::vector<std::vector<double>>& samples);

// Rank-based AUC (Mann-Whitney U), ties averaged. Labels are 0/1 and both
// classes must be present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct TTest {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0; // two-sided
};

TTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// ---- reporting ---------------------------------------------------------------------

struct QualityReport {
    std::vector<std::int64_t> k_per_channel;
    double ll_real = 0.0;     // real samples under the real-fitted mixture
    double ll_gen = 0.0;      // generated samples under the same mixture
    double ll_gmm = 0.0;      // samples drawn from the mixture itself
    double dist_real_gmm = 0.0;
    double dist_gen_gmm = 0.0;
    double real_gen_gap = 0.0;
    double artifact_ratio_real = 0.0;
    double artifact_ratio_gen = 0.0;
    std::vector<double> avg_real;
    std::vector<double> avg_gen;

    std::string to_csv() const;
    std::string to_text() const;
};

} // namespace eval
} // namespace waveforge
