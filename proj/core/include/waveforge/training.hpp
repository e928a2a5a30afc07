#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "waveforge/dataset.hpp"
#include "waveforge/models.hpp"

namespace waveforge {
namespace training {

struct TrainConfig {
    double lambda_gp = 10.0;
    // Critic updates : generator updates per training round.
    std::pair<int, int> ratio_d_to_g = {1, 5};
    double learning_rate = 1e-4;
    std::pair<double, double> adam_betas = {0.0, 0.9};
    std::int64_t batch_size = 32;
    std::int64_t max_steps = 0; // rounds
    std::uint64_t seed = 0;
    std::int64_t latent_dim = 120;
    bool class_conditioned = false;
    std::int64_t eval_every = 50; // rounds between log/AUC evaluations
};

void validate(const TrainConfig& cfg);

// ---- losses ------------------------------------------------------------------

// mean(d_real) - mean(d_fake).
Tensor wasserstein_estimate(const Tensor& d_real, const Tensor& d_fake);

// Mean over the batch of (|grad_x D(x_hat)|_2 - 1)^2 where x_hat mixes real
// and fake samples with one uniform epsilon per sample. The result stays
// differentiable w.r.t. the critic parameters.
Tensor gradient_penalty(const std::function<Tensor(const Tensor&)>& critic, const Tensor& x_real,
                        const Tensor& x_fake, Rng& rng);

// mean(d_fake) - mean(d_real) + lambda * gp (the quantity the critic
// minimizes; its negation less the penalty estimates the Wasserstein
// distance).
Tensor loss_discriminator(const Tensor& d_real, const Tensor& d_fake, const Tensor& gp,
                          double lambda);

// -mean(d_fake), minimized by the generator.
Tensor loss_generator(const Tensor& d_fake);

// -mean(d_fake) + cross_entropy(fake logits, fake labels).
Tensor loss_generator_cc(const Tensor& d_fake, const Tensor& class_logits_fake,
                         const std::vector<std::int64_t>& y_fake);

// Cross-entropy on the real batch plus cross-entropy on the fake batch.
Tensor loss_classifier(const Tensor& class_logits_real, const std::vector<std::int64_t>& y_real,
                       const Tensor& class_logits_fake, const std::vector<std::int64_t>& y_fake);

// ---- optimizer -----------------------------------------------------------------

class Adam {
  public:
    Adam(std::vector<Tensor> params, double lr, std::pair<double, double> betas,
         double eps = 1e-8);

    // Applies one update from the accumulated .grad() slots, then clears them.
    // Throws NumericError on a non-finite gradient.
    void step();
    void zero_grad();
    std::int64_t steps_taken() const { return t_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

// ---- training loop ----------------------------------------------------------------

struct LogRow {
    std::int64_t step = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    std::optional<double> loss_c;
    double wasserstein = 0.0;
    double gp = 0.0;
    std::optional<double> auc;
};

std::string log_csv_header();
std::string to_csv(const LogRow& row);

struct Snapshot {
    std::vector<std::pair<std::string, std::vector<double>>> values;
    bool empty() const { return values.empty(); }
};

Snapshot take_snapshot(const std::vector<NamedParam>& params);
void restore_snapshot(const Snapshot& snap, std::vector<NamedParam>& params);

struct TrainState {
    std::int64_t step = 0;
    std::optional<double> best_auc;
    Snapshot best_snapshot;
    std::vector<LogRow> logs;
};

// Alternating WGAN-GP optimization: each round runs ratio.first critic
// updates then ratio.second generator updates. Aborts with NumericError if
// any loss turns non-finite.
TrainState train(models::Generator& gen, models::Discriminator& disc,
                 const data::EpochDataset& ds, const TrainConfig& cfg);

// Class-conditioned variant: the critic update minimizes the combined
// discriminator/classifier loss over the shared trunk and both heads, and
// classifier AUC on a held-out split (last 20% after a seeded shuffle) is
// checkpointed so the best-performing snapshot is retained.
TrainState train(models::Generator& gen, models::CcModel& cc, const data::EpochDataset& ds,
                 const TrainConfig& cfg);

// Held-out AUC of the classifier branch in eval mode.
double classifier_auc(const models::CcModel& cc, const data::EpochDataset& ds,
                      const std::vector<std::int64_t>& indices);

// Draws n samples from the generator in eval mode (deterministic in seed).
// Class-conditioned generators get balanced alternating labels, which are
// also returned in the dataset.
data::EpochDataset generate_samples(const models::Generator& gen, std::int64_t n,
                                    std::uint64_t seed, std::int64_t channels);

} // namespace training
} // namespace waveforge
