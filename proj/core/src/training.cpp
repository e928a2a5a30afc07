#include "waveforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "waveforge/evaluation.hpp"

namespace waveforge {
namespace training {

void validate(const TrainConfig& cfg) {
    if (cfg.lambda_gp < 0.0) {
        throw ValueError("train config: lambda_gp must be >= 0");
    }
    if (cfg.ratio_d_to_g.first < 1 || cfg.ratio_d_to_g.second < 1) {
        throw ValueError("train config: update ratio entries must be positive");
    }
    if (!(cfg.learning_rate > 0.0)) {
        throw ValueError("train config: learning rate must be > 0");
    }
    const auto [b1, b2] = cfg.adam_betas;
    if (b1 < 0.0 || b1 >= 1.0 || b2 < 0.0 || b2 >= 1.0) {
        throw ValueError("train config: adam betas must be in [0, 1)");
    }
    if (cfg.batch_size < 2) {
        throw ValueError("train config: batch size must be >= 2");
    }
    if (cfg.max_steps < 0) {
        throw ValueError("train config: max_steps must be >= 0");
    }
    if (cfg.latent_dim < 1) {
        throw ValueError("train config: latent_dim must be >= 1");
    }
    if (cfg.eval_every < 1) {
        throw ValueError("train config: eval_every must be >= 1");
    }
}

// ---- losses ---------------------------------------------------------------------

Tensor wasserstein_estimate(const Tensor& d_real, const Tensor& d_fake) {
    if (d_real.size() < 1 || d_fake.size() < 1) {
        throw ShapeError("wasserstein_estimate: empty batch");
    }
    if (d_real.size() != d_fake.size()) {
        throw ShapeError("wasserstein_estimate: batch sizes differ, " +
                         shape_str(d_real.shape()) + " vs " + shape_str(d_fake.shape()));
    }
    return ops::sub(ops::reduce_mean(d_real), ops::reduce_mean(d_fake));
}

Tensor gradient_penalty(const std::function<Tensor(const Tensor&)>& critic, const Tensor& x_real,
                        const Tensor& x_fake, Rng& rng) {
    if (x_real.shape() != x_fake.shape()) {
        throw ShapeError("gradient_penalty: real batch " + shape_str(x_real.shape()) +
                         " and fake batch " + shape_str(x_fake.shape()) + " differ");
    }
    const std::int64_t batch = x_real.shape()[0];
    const std::int64_t per = x_real.size() / batch;
    std::vector<double> mixed(static_cast<std::size_t>(x_real.size()));
    const auto rd = x_real.data();
    const auto fd = x_fake.data();
    for (std::int64_t b = 0; b < batch; ++b) {
        const double eps = rng.uniform(); // one epsilon per sample
        for (std::int64_t j = 0; j < per; ++j) {
            const auto i = static_cast<std::size_t>(b * per + j);
            mixed[i] = eps * rd[i] + (1.0 - eps) * fd[i];
        }
    }
    Tensor x_hat = Tensor::from_data(x_real.shape(), std::move(mixed), true);
    Tensor scores = critic(x_hat);
    if (scores.shape()[0] != batch) {
        throw ShapeError("gradient_penalty: critic returned " + shape_str(scores.shape()) +
                         " for batch of " + std::to_string(batch));
    }
    // Summing the per-sample scores gives per-sample input gradients in one
    // sweep; the sweep itself is recorded so the penalty stays differentiable.
    const Tensor g = grad(ops::reduce_sum(scores), {x_hat}, /*create_graph=*/true)[0];
    std::vector<std::size_t> axes;
    for (std::size_t i = 1; i < g.rank(); ++i) {
        axes.push_back(i);
    }
    const Tensor sq_norm = ops::reduce_sum_axes(ops::mul(g, g), axes); // [batch]
    const Tensor norm = ops::pow_scalar(sq_norm, 0.5);
    const Tensor excess = ops::scalar_add(norm, -1.0);
    return ops::reduce_mean(ops::mul(excess, excess));
}

Tensor loss_discriminator(const Tensor& d_real, const Tensor& d_fake, const Tensor& gp,
                          double lambda) {
    Tensor loss = ops::neg(wasserstein_estimate(d_real, d_fake));
    if (lambda != 0.0) {
        loss = ops::add(loss, ops::scalar_mul(gp, lambda));
    }
    return loss;
}

Tensor loss_generator(const Tensor& d_fake) { return ops::neg(ops::reduce_mean(d_fake)); }

Tensor loss_generator_cc(const Tensor& d_fake, const Tensor& class_logits_fake,
                         const std::vector<std::int64_t>& y_fake) {
    return ops::add(loss_generator(d_fake),
                    layers::softmax_cross_entropy(class_logits_fake, y_fake));
}

Tensor loss_classifier(const Tensor& class_logits_real, const std::vector<std::int64_t>& y_real,
                       const Tensor& class_logits_fake, const std::vector<std::int64_t>& y_fake) {
    return ops::add(layers::softmax_cross_entropy(class_logits_real, y_real),
                    layers::softmax_cross_entropy(class_logits_fake, y_fake));
}

// ---- optimizer --------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, std::pair<double, double> betas, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(betas.first), beta2_(betas.second), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<std::size_t>(params_[i].size()), 0.0);
        v_[i].assign(static_cast<std::size_t>(params_[i].size()), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        const Tensor g = p.grad();
        if (!g.defined()) {
            continue; // parameter did not participate this step
        }
        const auto gd = g.data();
        auto pd = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < pd.size(); ++j) {
            const double gj = gd[j];
            if (!std::isfinite(gj)) {
                throw NumericError("adam: non-finite gradient encountered; step aborted");
            }
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            pd[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

// ---- logging / snapshots -------------------------------------------------------------

std::string log_csv_header() { return "step,loss_d,loss_g,loss_c,wasserstein,gp,auc"; }

std::string to_csv(const LogRow& row) {
    std::ostringstream os;
    os.precision(12);
    os << row.step << ',' << row.loss_d << ',' << row.loss_g << ',';
    if (row.loss_c.has_value()) {
        os << *row.loss_c;
    }
    os << ',' << row.wasserstein << ',' << row.gp << ',';
    if (row.auc.has_value()) {
        os << *row.auc;
    }
    return os.str();
}

Snapshot take_snapshot(const std::vector<NamedParam>& params) {
    Snapshot snap;
    snap.values.reserve(params.size());
    for (const auto& p : params) {
        const auto d = p.tensor.data();
        snap.values.emplace_back(p.name, std::vector<double>(d.begin(), d.end()));
    }
    return snap;
}

void restore_snapshot(const Snapshot& snap, std::vector<NamedParam>& params) {
    if (snap.values.size() != params.size()) {
        throw ValueError("restore_snapshot: parameter count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (snap.values[i].first != params[i].name ||
            snap.values[i].second.size() != static_cast<std::size_t>(params[i].tensor.size())) {
            throw ValueError("restore_snapshot: parameter '" + params[i].name +
                             "' does not match the snapshot");
        }
        auto dst = params[i].tensor.mutable_data();
        std::copy(snap.values[i].second.begin(), snap.values[i].second.end(), dst.begin());
    }
}

// ---- loop internals ----------------------------------------------------------------------

namespace {

std::vector<Tensor> trainable_of(const std::vector<NamedParam>& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) {
        if (p.trainable) {
            out.push_back(p.tensor);
        }
    }
    return out;
}

// Temporarily removes parameters from the gradient graph so forwards through
// a frozen network skip their weight-gradient work.
class FreezeGuard {
  public:
    explicit FreezeGuard(const std::vector<Tensor>& params) : params_(params) {
        for (auto& p : params_) {
            p.set_requires_grad(false);
        }
    }
    ~FreezeGuard() {
        for (auto& p : params_) {
            p.set_requires_grad(true);
        }
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

  private:
    std::vector<Tensor> params_;
};

// Deterministic full-batch sampler: reshuffles the index pool each epoch.
class BatchSampler {
  public:
    BatchSampler(std::int64_t n, std::int64_t batch, Rng& rng)
        : indices_(static_cast<std::size_t>(n)), batch_(batch), rng_(&rng) {
        std::iota(indices_.begin(), indices_.end(), 0);
        if (n < batch) {
            throw ValueError("training: dataset of " + std::to_string(n) +
                             " epochs is smaller than one batch of " + std::to_string(batch));
        }
    }

    BatchSampler(std::vector<std::int64_t> pool, std::int64_t batch, Rng& rng)
        : indices_(std::move(pool)), batch_(batch), rng_(&rng) {
        if (static_cast<std::int64_t>(indices_.size()) < batch) {
            throw ValueError("training: index pool smaller than one batch");
        }
    }

    std::vector<std::int64_t> next() {
        if (pos_ + batch_ > static_cast<std::int64_t>(indices_.size())) {
            rng_->shuffle(indices_);
            pos_ = 0;
        }
        std::vector<std::int64_t> out(indices_.begin() + pos_, indices_.begin() + pos_ + batch_);
        pos_ += batch_;
        return out;
    }

  private:
    std::vector<std::int64_t> indices_;
    std::int64_t batch_;
    std::int64_t pos_ = 0;
    Rng* rng_;
};

// Gather dataset epochs into the model input layout [B, 1, C, T].
Tensor gather_batch(const data::EpochDataset& ds, const std::vector<std::int64_t>& idx) {
    const std::int64_t c = ds.channels();
    const std::int64_t t = ds.length();
    const std::int64_t per = c * t;
    std::vector<double> buf(static_cast<std::size_t>(idx.size()) * static_cast<std::size_t>(per));
    const auto d = ds.samples.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
        std::memcpy(buf.data() + static_cast<std::int64_t>(b) * per, d.data() + idx[b] * per,
                    static_cast<std::size_t>(per) * sizeof(double));
    }
    return Tensor::from_data({static_cast<std::int64_t>(idx.size()), 1, c, t}, std::move(buf));
}

Tensor sample_latent(std::int64_t batch, std::int64_t dim, Rng& rng) {
    std::vector<double> z(static_cast<std::size_t>(batch * dim));
    for (auto& v : z) {
        v = rng.normal();
    }
    return Tensor::from_data({batch, dim}, std::move(z));
}

std::vector<std::int64_t> random_labels(std::int64_t batch, std::int64_t classes, Rng& rng) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(batch));
    for (auto& l : out) {
        l = rng.uniform_int(classes);
    }
    return out;
}

void check_finite(double v, const char* what, std::int64_t step) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("training diverged: ") + what + " is non-finite at step " +
                           std::to_string(step));
    }
}

struct RoundStats {
    double loss_d = 0.0;
    double loss_g = 0.0;
    double loss_c = 0.0;
    double wasserstein = 0.0;
    double gp = 0.0;
};

} // namespace

double classifier_auc(const models::CcModel& cc, const data::EpochDataset& ds,
                      const std::vector<std::int64_t>& indices) {
    if (!ds.labels.has_value()) {
        throw ValueError("classifier_auc: dataset has no labels");
    }
    const layers::Ctx ctx{layers::Mode::Eval, nullptr};
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(indices.size());
    labels.reserve(indices.size());
    constexpr std::int64_t kChunk = 256;
    NoGradGuard ng;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t end = std::min(indices.size(), start + kChunk);
        const std::vector<std::int64_t> idx(indices.begin() + static_cast<std::int64_t>(start),
                                            indices.begin() + static_cast<std::int64_t>(end));
        const Tensor logits = cc.class_forward(gather_batch(ds, idx), ctx);
        const Tensor probs = layers::softmax(logits);
        const auto pd = probs.data();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            scores.push_back(pd[b * 2 + 1]);
            labels.push_back(static_cast<int>((*ds.labels)[static_cast<std::size_t>(idx[b])]));
        }
    }
    return eval::roc_auc(scores, labels);
}

data::EpochDataset generate_samples(const models::Generator& gen, std::int64_t n,
                                    std::uint64_t seed, std::int64_t channels) {
    if (n < 1) {
        throw ValueError("generate_samples: n must be >= 1");
    }
    Rng rng(seed);
    const layers::Ctx ctx{layers::Mode::Eval, &rng};
    const std::int64_t latent = gen.spec().latent_dim;
    const bool cc = gen.class_conditioned();
    std::vector<double> buf;
    std::vector<std::uint8_t> labels;
    constexpr std::int64_t kChunk = 128;
    NoGradGuard ng;
    std::int64_t produced = 0;
    while (produced < n) {
        const std::int64_t b = std::min(kChunk, n - produced);
        const Tensor z = sample_latent(b, latent, rng);
        Tensor x;
        if (cc) {
            std::vector<std::int64_t> y(static_cast<std::size_t>(b));
            for (std::int64_t i = 0; i < b; ++i) {
                y[static_cast<std::size_t>(i)] = (produced + i) % 2;
                labels.push_back(static_cast<std::uint8_t>(y[static_cast<std::size_t>(i)]));
            }
            x = gen.forward(z, &y, ctx);
        } else {
            x = gen.forward(z, nullptr, ctx);
        }
        const auto xd = x.data();
        buf.insert(buf.end(), xd.begin(), xd.end());
        produced += b;
    }
    data::EpochDataset out;
    // Model output [N, 1, C, T] maps onto dataset layout [N, C, T].
    out.samples = Tensor::from_data({n, channels, 64}, std::move(buf));
    if (cc && n >= 2) {
        out.labels = std::move(labels);
    }
    out.metadata = "generated n=" + std::to_string(n) + " seed=" + std::to_string(seed);
    return out;
}

TrainState train(models::Generator& gen, models::Discriminator& disc,
                 const data::EpochDataset& ds, const TrainConfig& cfg) {
    validate(cfg);
    data::validate(ds);
    if (cfg.class_conditioned) {
        throw ValueError("train: class-conditioned config requires the CC model overload");
    }
    if (gen.spec().latent_dim != cfg.latent_dim) {
        throw ValueError("train: generator latent dim " + std::to_string(gen.spec().latent_dim) +
                         " does not match config " + std::to_string(cfg.latent_dim));
    }

    Rng rng(cfg.seed);
    auto gen_params = gen.params();
    auto disc_params = disc.params();
    Adam opt_g(trainable_of(gen_params), cfg.learning_rate, cfg.adam_betas);
    Adam opt_d(trainable_of(disc_params), cfg.learning_rate, cfg.adam_betas);
    BatchSampler sampler(ds.n(), cfg.batch_size, rng);
    const layers::Ctx train_ctx{layers::Mode::Train, &rng};

    auto critic_update = [&](std::int64_t round, RoundStats& stats) {
        const Tensor x_real = gather_batch(ds, sampler.next());
        Tensor x_fake;
        {
            NoGradGuard ng;
            x_fake = gen.forward(sample_latent(cfg.batch_size, cfg.latent_dim, rng), nullptr,
                                 train_ctx);
        }
        const Tensor d_real = disc.forward(x_real, train_ctx);
        const Tensor d_fake = disc.forward(x_fake, train_ctx);
        Tensor gp = Tensor::scalar(0.0);
        if (cfg.lambda_gp != 0.0) {
            gp = gradient_penalty(
                [&](const Tensor& x) { return disc.forward(x, train_ctx); }, x_real, x_fake,
                rng);
        }
        const Tensor loss = loss_discriminator(d_real, d_fake, gp, cfg.lambda_gp);
        stats.loss_d = loss.item();
        stats.gp = gp.item();
        stats.wasserstein = stats.gp * cfg.lambda_gp - stats.loss_d;
        check_finite(stats.loss_d, "discriminator loss", round);
        backward(loss);
        opt_d.step();
        opt_g.zero_grad();
    };

    auto gen_update = [&](std::int64_t round, RoundStats& stats) {
        FreezeGuard freeze(trainable_of(disc_params));
        const Tensor z = sample_latent(cfg.batch_size, cfg.latent_dim, rng);
        const Tensor x_fake = gen.forward(z, nullptr, train_ctx);
        const Tensor d_fake = disc.forward(x_fake, train_ctx);
        const Tensor loss = loss_generator(d_fake);
        stats.loss_g = loss.item();
        check_finite(stats.loss_g, "generator loss", round);
        backward(loss);
        opt_g.step();
    };

    TrainState state;
    for (std::int64_t round = 1; round <= cfg.max_steps; ++round) {
        RoundStats stats;
        for (int i = 0; i < cfg.ratio_d_to_g.first; ++i) {
            critic_update(round, stats);
        }
        for (int i = 0; i < cfg.ratio_d_to_g.second; ++i) {
            gen_update(round, stats);
        }
        state.step = round;
        if (round % cfg.eval_every == 0 || round == cfg.max_steps) {
            LogRow row;
            row.step = round;
            row.loss_d = stats.loss_d;
            row.loss_g = stats.loss_g;
            row.wasserstein = stats.wasserstein;
            row.gp = stats.gp;
            state.logs.push_back(row);
        }
    }
    return state;
}

TrainState train(models::Generator& gen, models::CcModel& cc, const data::EpochDataset& ds,
                 const TrainConfig& cfg) {
    validate(cfg);
    data::validate(ds);
    if (!ds.labels.has_value()) {
        throw ValueError("train: class-conditioned training needs a labeled dataset");
    }
    if (!gen.class_conditioned()) {
        throw ValueError("train: generator is not class-conditioned");
    }
    if (gen.spec().latent_dim != cfg.latent_dim) {
        throw ValueError("train: generator latent dim does not match config");
    }

    Rng rng(cfg.seed);

    // Held-out split for AUC checkpointing: last 20% after a seeded shuffle.
    std::vector<std::int64_t> order(static_cast<std::size_t>(ds.n()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::int64_t held = std::max<std::int64_t>(1, ds.n() / 5);
    std::vector<std::int64_t> train_pool(order.begin(), order.end() - held);
    std::vector<std::int64_t> held_out(order.end() - held, order.end());
    {
        bool has0 = false;
        bool has1 = false;
        for (const auto i : held_out) {
            ((*ds.labels)[static_cast<std::size_t>(i)] == 0 ? has0 : has1) = true;
        }
        if (!has0 || !has1) {
            throw ValueError("train: held-out split lost one class; provide more data");
        }
    }

    auto gen_params = gen.params();
    auto critic_params = cc.params(); // theta_S + theta_D + theta_C
    auto all_params = gen_params;
    all_params.insert(all_params.end(), critic_params.begin(), critic_params.end());
    Adam opt_g(trainable_of(gen_params), cfg.learning_rate, cfg.adam_betas);
    Adam opt_c(trainable_of(critic_params), cfg.learning_rate, cfg.adam_betas);
    BatchSampler sampler(train_pool, cfg.batch_size, rng);
    const layers::Ctx train_ctx{layers::Mode::Train, &rng};
    const std::int64_t classes = cc.spec().num_classes;

    TrainState state;
    auto critic_update = [&](std::int64_t round, RoundStats& stats) {
        const auto idx = sampler.next();
        const Tensor x_real = gather_batch(ds, idx);
        std::vector<std::int64_t> y_real(idx.size());
        for (std::size_t b = 0; b < idx.size(); ++b) {
            y_real[b] = (*ds.labels)[static_cast<std::size_t>(idx[b])];
        }
        const auto y_fake = random_labels(cfg.batch_size, classes, rng);
        Tensor x_fake;
        {
            NoGradGuard ng;
            x_fake = gen.forward(sample_latent(cfg.batch_size, cfg.latent_dim, rng), &y_fake,
                                 train_ctx);
        }
        const auto [d_real, logits_real] = cc.forward_both(x_real, train_ctx);
        const auto [d_fake, logits_fake] = cc.forward_both(x_fake, train_ctx);
        Tensor gp = Tensor::scalar(0.0);
        if (cfg.lambda_gp != 0.0) {
            gp = gradient_penalty(
                [&](const Tensor& x) { return cc.disc_forward(x, train_ctx); }, x_real, x_fake,
                rng);
        }
        const Tensor cls = loss_classifier(logits_real, y_real, logits_fake, y_fake);
        const Tensor loss =
            ops::add(loss_discriminator(d_real, d_fake, gp, cfg.lambda_gp), cls);
        stats.loss_c = cls.item();
        stats.gp = gp.item();
        stats.loss_d = loss.item() - stats.loss_c;
        stats.wasserstein = stats.gp * cfg.lambda_gp - stats.loss_d;
        check_finite(loss.item(), "discriminator/classifier loss", round);
        backward(loss);
        opt_c.step();
        opt_g.zero_grad();
    };

    auto gen_update = [&](std::int64_t round, RoundStats& stats) {
        FreezeGuard freeze(trainable_of(critic_params));
        const auto y_fake = random_labels(cfg.batch_size, classes, rng);
        const Tensor z = sample_latent(cfg.batch_size, cfg.latent_dim, rng);
        const Tensor x_fake = gen.forward(z, &y_fake, train_ctx);
        const auto [d_fake, logits_fake] = cc.forward_both(x_fake, train_ctx);
        const Tensor loss = loss_generator_cc(d_fake, logits_fake, y_fake);
        stats.loss_g = loss.item();
        check_finite(stats.loss_g, "generator loss", round);
        backward(loss);
        opt_g.step();
    };

    for (std::int64_t round = 1; round <= cfg.max_steps; ++round) {
        RoundStats stats;
        for (int i = 0; i < cfg.ratio_d_to_g.first; ++i) {
            critic_update(round, stats);
        }
        for (int i = 0; i < cfg.ratio_d_to_g.second; ++i) {
            gen_update(round, stats);
        }
        state.step = round;
        if (round % cfg.eval_every == 0 || round == cfg.max_steps) {
            LogRow row;
            row.step = round;
            row.loss_d = stats.loss_d;
            row.loss_g = stats.loss_g;
            row.loss_c = stats.loss_c;
            row.wasserstein = stats.wasserstein;
            row.gp = stats.gp;
            const double auc = classifier_auc(cc, ds, held_out);
            row.auc = auc;
            if (!state.best_auc.has_value() || auc > *state.best_auc) {
                state.best_auc = auc;
                state.best_snapshot = take_snapshot(all_params);
            }
            state.logs.push_back(row);
        }
    }
    return state;
}

} // namespace training
} // namespace waveforge
