#include "waveforge/layers.hpp"

#include <cmath>
#include <sstream>

namespace waveforge {
namespace layers {

std::int64_t deconv_kernel_size(std::int64_t stride) {
    if (stride < 1) {
        throw ValueError("deconv_kernel_size: stride must be >= 1, got " +
                         std::to_string(stride));
    }
    return 2 * stride - stride % 2;
}

std::vector<double> bilinear_init_weights(std::int64_t stride) {
    const std::int64_t k = deconv_kernel_size(stride);
    std::vector<double> w(static_cast<std::size_t>(k));
    const double center = static_cast<double>(k - 1) / 2.0;
    for (std::int64_t i = 0; i < k; ++i) {
        w[static_cast<std::size_t>(i)] =
            1.0 - std::abs(static_cast<double>(i) - center) / static_cast<double>(stride);
    }
    return w;
}

Tensor glorot_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) {
        v = rng.uniform(-s, s);
    }
    return Tensor::from_data(std::move(shape), std::move(data), true);
}

Tensor gaussian_noise(const Tensor& x, double sigma, Mode mode, Rng* rng) {
    if (sigma < 0.0) {
        throw ValueError("gaussian_noise: sigma must be >= 0, got " + std::to_string(sigma));
    }
    if (mode == Mode::Eval || sigma == 0.0) {
        return x;
    }
    if (rng == nullptr) {
        throw ValueError("gaussian_noise: train mode needs an RNG");
    }
    std::vector<double> noise(static_cast<std::size_t>(x.size()));
    for (auto& v : noise) {
        v = rng->normal(0.0, sigma);
    }
    return ops::add(x, Tensor::from_data(x.shape(), std::move(noise)));
}

Tensor center_crop(const Tensor& x, std::int64_t target_h, std::int64_t target_w) {
    if (x.rank() != 4) {
        throw ShapeError("center_crop: expected rank-4 input, got " + shape_str(x.shape()));
    }
    const std::int64_t h = x.shape()[2];
    const std::int64_t w = x.shape()[3];
    if (target_h < 1 || target_w < 1 || target_h > h || target_w > w) {
        throw ShapeError("center_crop: target " + std::to_string(target_h) + "x" +
                         std::to_string(target_w) + " exceeds input " + shape_str(x.shape()));
    }
    const Hw offset{(h - target_h) / 2, (w - target_w) / 2};
    return ops::crop_window(x, offset, {target_h, target_w});
}

Tensor zero_mean_normalize(const Tensor& x) {
    if (x.size() < 1) {
        throw ShapeError("zero_mean_normalize: empty tensor");
    }
    if (x.rank() <= 1) {
        return ops::sub(x, ops::reduce_mean(x));
    }
    std::vector<std::size_t> axes;
    for (std::size_t i = 1; i < x.rank(); ++i) {
        axes.push_back(i);
    }
    const Tensor mean = ops::reduce_mean_axes(x, axes);
    return ops::sub(x, ops::expand_axes(mean, x.shape(), axes));
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = ops::matmul(x, w);
    if (b.defined()) {
        y = ops::add(y, ops::expand_axes(b, y.shape(), {0}));
    }
    return y;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax: expected [batch, classes], got " + shape_str(logits.shape()));
    }
    // Shift by the row max (a constant of the input) for stability.
    const std::int64_t b = logits.shape()[0];
    const std::int64_t k = logits.shape()[1];
    std::vector<double> shift(static_cast<std::size_t>(b * k));
    const auto ld = logits.data();
    for (std::int64_t i = 0; i < b; ++i) {
        double m = ld[static_cast<std::size_t>(i * k)];
        for (std::int64_t j = 1; j < k; ++j) {
            m = std::max(m, ld[static_cast<std::size_t>(i * k + j)]);
        }
        for (std::int64_t j = 0; j < k; ++j) {
            shift[static_cast<std::size_t>(i * k + j)] = m;
        }
    }
    const Tensor z = ops::sub(logits, Tensor::from_data(logits.shape(), std::move(shift)));
    const Tensor e = ops::exp(z);
    const Tensor denom = ops::reduce_sum_axes(e, {1});
    return ops::mul(e, ops::expand_axes(ops::pow_scalar(denom, -1.0), logits.shape(), {1}));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
    if (logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: expected [batch, classes], got " +
                         shape_str(logits.shape()));
    }
    const std::int64_t b = logits.shape()[0];
    const std::int64_t k = logits.shape()[1];
    if (static_cast<std::int64_t>(labels.size()) != b) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
    }
    std::vector<double> shift(static_cast<std::size_t>(b * k));
    std::vector<double> onehot(static_cast<std::size_t>(b * k), 0.0);
    const auto ld = logits.data();
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= k) {
            throw ValueError("softmax_cross_entropy: label " + std::to_string(label) +
                             " out of range [0, " + std::to_string(k) + ")");
        }
        onehot[static_cast<std::size_t>(i * k + label)] = 1.0;
        double m = ld[static_cast<std::size_t>(i * k)];
        for (std::int64_t j = 1; j < k; ++j) {
            m = std::max(m, ld[static_cast<std::size_t>(i * k + j)]);
        }
        for (std::int64_t j = 0; j < k; ++j) {
            shift[static_cast<std::size_t>(i * k + j)] = m;
        }
    }
    const Tensor z = ops::sub(logits, Tensor::from_data(logits.shape(), std::move(shift)));
    const Tensor lse = ops::log(ops::reduce_sum_axes(ops::exp(z), {1}));
    const Tensor picked =
        ops::reduce_sum_axes(ops::mul(z, Tensor::from_data(logits.shape(), std::move(onehot))),
                             {1});
    return ops::reduce_mean(ops::sub(lse, picked));
}

Tensor upsample_interpolate(const Tensor& x, Hw factor, InterpMethod method) {
    if (factor.h < 1 || factor.w < 1) {
        throw ValueError("upsample_interpolate: factor must be >= 1");
    }
    switch (method) {
    case InterpMethod::Nearest:
        return ops::upsample_nearest(x, factor);
    case InterpMethod::Bicubic:
        return ops::upsample_bicubic(x, factor);
    }
    throw ValueError("upsample_interpolate: unknown method");
}

// ---- layer objects -------------------------------------------------------------

std::string signature(const LayerConfig& cfg) {
    std::ostringstream os;
    switch (cfg.kind) {
    case LayerKind::Dense:
        os << "dense";
        break;
    case LayerKind::Conv2d:
        os << "conv2d(k=" << cfg.kernel.h << "x" << cfg.kernel.w << ",s=" << cfg.stride.h << "x"
           << cfg.stride.w << ")";
        break;
    case LayerKind::TransposedConv2d:
        os << "tconv2d(k=" << cfg.kernel.h << "x" << cfg.kernel.w << ",s=" << cfg.stride.h << "x"
           << cfg.stride.w
           << (cfg.init == InitScheme::BilinearDeconv ? ",init=bilinear" : ",init=uniform")
           << ")";
        break;
    case LayerKind::UpsampleNearest:
        os << "upsample(nearest," << cfg.factor.h << "x" << cfg.factor.w << ")";
        break;
    case LayerKind::UpsampleBicubic:
        os << "upsample(bicubic," << cfg.factor.h << "x" << cfg.factor.w << ")";
        break;
    case LayerKind::BatchNorm:
        os << "batchnorm";
        break;
    case LayerKind::LeakyReLU:
        os << "leaky_relu";
        break;
    case LayerKind::GaussianNoise:
        os << "gaussian_noise";
        break;
    case LayerKind::Reshape:
        os << "reshape";
        break;
    case LayerKind::CenterCrop:
        os << "center_crop(" << cfg.crop.h << "x" << cfg.crop.w << ")";
        break;
    case LayerKind::ZeroMeanNormalize:
        os << "zero_mean";
        break;
    case LayerKind::SoftmaxHead:
        os << "softmax";
        break;
    }
    return os.str();
}

namespace {

class DenseLayer final : public Layer {
  public:
    DenseLayer(std::int64_t in, std::int64_t out, Rng& rng)
        : w_(glorot_uniform({in, out}, in, out, rng)), b_(Tensor::zeros({out}, true)) {}

    Tensor forward(const Tensor& x, const Ctx&) override { return dense(x, w_, b_); }

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) override {
        out.push_back({prefix + ".w", w_, true});
        out.push_back({prefix + ".b", b_, true});
    }

  private:
    Tensor w_, b_;
};

class Conv2dLayer final : public Layer {
  public:
    Conv2dLayer(std::int64_t in_c, const LayerConfig& cfg, Rng& rng) : cfg_(cfg) {
        const std::int64_t rf = cfg.kernel.h * cfg.kernel.w;
        w_ = glorot_uniform({cfg.channels, in_c, cfg.kernel.h, cfg.kernel.w}, in_c * rf,
                            cfg.channels * rf, rng);
        b_ = Tensor::zeros({cfg.channels}, true);
    }

    Tensor forward(const Tensor& x, const Ctx&) override {
        return ops::conv2d(x, w_, b_, cfg_.stride, cfg_.pad);
    }

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) override {
        out.push_back({prefix + ".w", w_, true});
        out.push_back({prefix + ".b", b_, true});
    }

  private:
    LayerConfig cfg_;
    Tensor w_, b_;
};

class TransposedConv2dLayer final : public Layer {
  public:
    TransposedConv2dLayer(std::int64_t in_c, const LayerConfig& cfg, Rng& rng) : cfg_(cfg) {
        const std::int64_t rf = cfg.kernel.h * cfg.kernel.w;
        if (cfg.init == InitScheme::BilinearDeconv) {
            if (cfg.kernel.h != deconv_kernel_size(cfg.stride.h) ||
                cfg.kernel.w != deconv_kernel_size(cfg.stride.w)) {
                throw ValueError("bilinear deconvolution init requires kernel size "
                                 "2*stride - stride%2 per axis");
            }
            w_ = bilinear_kernel(in_c, cfg.channels, cfg.stride);
        } else {
            w_ = glorot_uniform({in_c, cfg.channels, cfg.kernel.h, cfg.kernel.w}, in_c * rf,
                                cfg.channels * rf, rng);
        }
        b_ = Tensor::zeros({cfg.channels}, true);
    }

    Tensor forward(const Tensor& x, const Ctx&) override {
        return ops::transposed_conv2d(x, w_, b_, cfg_.stride, cfg_.pad);
    }

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) override {
        out.push_back({prefix + ".w", w_, true});
        out.push_back({prefix + ".b", b_, true});
    }

    // Outer product of the per-axis triangular kernels; when the channel
    // counts differ, output channel f interpolates input channel f % in_c.
    static Tensor bilinear_kernel(std::int64_t in_c, std::int64_t out_c, Hw stride) {
        const auto wh = bilinear_init_weights(stride.h);
        const auto ww = bilinear_init_weights(stride.w);
        const std::int64_t kh = static_cast<std::int64_t>(wh.size());
        const std::int64_t kw = static_cast<std::int64_t>(ww.size());
        std::vector<double> data(static_cast<std::size_t>(in_c * out_c * kh * kw), 0.0);
        for (std::int64_t f = 0; f < out_c; ++f) {
            const std::int64_t c = f % in_c;
            double* dst = data.data() + (c * out_c + f) * kh * kw;
            for (std::int64_t i = 0; i < kh; ++i) {
                for (std::int64_t j = 0; j < kw; ++j) {
                    dst[i * kw + j] = wh[static_cast<std::size_t>(i)] *
                                      ww[static_cast<std::size_t>(j)];
                }
            }
        }
        return Tensor::from_data({in_c, out_c, kh, kw}, std::move(data), true);
    }

  private:
    LayerConfig cfg_;
    Tensor w_, b_;
};

class UpsampleLayer final : public Layer {
  public:
    UpsampleLayer(InterpMethod method, Hw factor) : method_(method), factor_(factor) {}

    Tensor forward(const Tensor& x, const Ctx&) override {
        return upsample_interpolate(x, factor_, method_);
    }

  private:
    InterpMethod method_;
    Hw factor_;
};

class BatchNormLayer final : public Layer {
  public:
    BatchNormLayer(std::int64_t features, double momentum = 0.99, double eps = 1e-5)
        : gamma_(Tensor::ones({features}, true)), beta_(Tensor::zeros({features}, true)),
          running_mean_(Tensor::zeros({features})), running_var_(Tensor::ones({features})),
          momentum_(momentum), eps_(eps) {}

    Tensor forward(const Tensor& x, const Ctx& ctx) override {
        std::vector<std::size_t> axes;
        if (x.rank() == 2) {
            axes = {0};
        } else if (x.rank() == 4) {
            axes = {0, 2, 3};
        } else {
            throw ShapeError("batch_norm: expected rank-2 or rank-4 input, got " +
                             shape_str(x.shape()));
        }
        if (ctx.mode == Mode::Train) {
            if (x.shape()[0] < 2) {
                throw ValueError("batch_norm: train mode needs batch size >= 2");
            }
            const Tensor mean = ops::reduce_mean_axes(x, axes);
            const Tensor centered = ops::sub(x, ops::expand_axes(mean, x.shape(), axes));
            const Tensor var = ops::reduce_mean_axes(ops::mul(centered, centered), axes);
            update_running(mean, var);
            const Tensor inv_std = ops::pow_scalar(ops::scalar_add(var, eps_), -0.5);
            const Tensor xhat = ops::mul(centered, ops::expand_axes(inv_std, x.shape(), axes));
            return ops::add(ops::mul(xhat, ops::expand_axes(gamma_, x.shape(), axes)),
                            ops::expand_axes(beta_, x.shape(), axes));
        }
        const Tensor centered =
            ops::sub(x, ops::expand_axes(running_mean_, x.shape(), axes));
        const Tensor inv_std = ops::pow_scalar(ops::scalar_add(running_var_, eps_), -0.5);
        const Tensor xhat = ops::mul(centered, ops::expand_axes(inv_std, x.shape(), axes));
        return ops::add(ops::mul(xhat, ops::expand_axes(gamma_, x.shape(), axes)),
                        ops::expand_axes(beta_, x.shape(), axes));
    }

    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) override {
        out.push_back({prefix + ".gamma", gamma_, true});
        out.push_back({prefix + ".beta", beta_, true});
        out.push_back({prefix + ".running_mean", running_mean_, false});
        out.push_back({prefix + ".running_var", running_var_, false});
    }

  private:
    void update_running(const Tensor& mean, const Tensor& var) {
        auto rm = running_mean_.mutable_data();
        auto rv = running_var_.mutable_data();
        const auto md = mean.data();
        const auto vd = var.data();
        for (std::size_t i = 0; i < rm.size(); ++i) {
            rm[i] = momentum_ * rm[i] + (1.0 - momentum_) * md[i];
            rv[i] = momentum_ * rv[i] + (1.0 - momentum_) * vd[i];
        }
    }

    Tensor gamma_, beta_, running_mean_, running_var_;
    double momentum_, eps_;
};

class LeakyReluLayer final : public Layer {
  public:
    explicit LeakyReluLayer(double slope) : slope_(slope) {}
    Tensor forward(const Tensor& x, const Ctx&) override {
        return ops::leaky_relu(x, slope_);
    }

  private:
    double slope_;
};

class GaussianNoiseLayer final : public Layer {
  public:
    explicit GaussianNoiseLayer(double sigma) : sigma_(sigma) {}
    Tensor forward(const Tensor& x, const Ctx& ctx) override {
        return gaussian_noise(x, sigma_, ctx.mode, ctx.rng);
    }

  private:
    double sigma_;
};

class ReshapeLayer final : public Layer {
  public:
    explicit ReshapeLayer(Shape non_batch) : non_batch_(std::move(non_batch)) {}
    Tensor forward(const Tensor& x, const Ctx&) override {
        Shape target{x.shape()[0]};
        target.insert(target.end(), non_batch_.begin(), non_batch_.end());
        return ops::reshape(x, target);
    }

  private:
    Shape non_batch_;
};

class CenterCropLayer final : public Layer {
  public:
    explicit CenterCropLayer(Hw target) : target_(target) {}
    Tensor forward(const Tensor& x, const Ctx&) override {
        return center_crop(x, target_.h, target_.w);
    }

  private:
    Hw target_;
};

class ZeroMeanLayer final : public Layer {
  public:
    Tensor forward(const Tensor& x, const Ctx&) override { return zero_mean_normalize(x); }
};

class SoftmaxLayer final : public Layer {
  public:
    Tensor forward(const Tensor& x, const Ctx&) override { return softmax(x); }
};

} // namespace

LayerPtr build_layer(const LayerConfig& cfg, Shape& io_shape, Rng& rng) {
    switch (cfg.kind) {
    case LayerKind::Dense: {
        if (io_shape.size() != 1) {
            throw ShapeError("dense layer expects flat input, got feature shape " +
                             shape_str(io_shape));
        }
        if (cfg.units < 1) {
            throw ValueError("dense layer needs units >= 1");
        }
        auto layer = std::make_unique<DenseLayer>(io_shape[0], cfg.units, rng);
        io_shape = {cfg.units};
        return layer;
    }
    case LayerKind::Conv2d: {
        if (io_shape.size() != 3) {
            throw ShapeError("conv2d layer expects CHW input, got " + shape_str(io_shape));
        }
        if (cfg.channels < 1) {
            throw ValueError("conv2d layer needs channels >= 1");
        }
        auto layer = std::make_unique<Conv2dLayer>(io_shape[0], cfg, rng);
        const std::int64_t ho = (io_shape[1] + 2 * cfg.pad.h - cfg.kernel.h) / cfg.stride.h + 1;
        const std::int64_t wo = (io_shape[2] + 2 * cfg.pad.w - cfg.kernel.w) / cfg.stride.w + 1;
        if (ho < 1 || wo < 1) {
            throw ShapeError("conv2d layer output collapses for input " + shape_str(io_shape));
        }
        io_shape = {cfg.channels, ho, wo};
        return layer;
    }
    case LayerKind::TransposedConv2d: {
        if (io_shape.size() != 3) {
            throw ShapeError("tconv2d layer expects CHW input, got " + shape_str(io_shape));
        }
        if (cfg.channels < 1) {
            throw ValueError("tconv2d layer needs channels >= 1");
        }
        auto layer = std::make_unique<TransposedConv2dLayer>(io_shape[0], cfg, rng);
        const std::int64_t ho = (io_shape[1] - 1) * cfg.stride.h + cfg.kernel.h - 2 * cfg.pad.h;
        const std::int64_t wo = (io_shape[2] - 1) * cfg.stride.w + cfg.kernel.w - 2 * cfg.pad.w;
        io_shape = {cfg.channels, ho, wo};
        return layer;
    }
    case LayerKind::UpsampleNearest:
    case LayerKind::UpsampleBicubic: {
        if (io_shape.size() != 3) {
            throw ShapeError("upsample layer expects CHW input, got " + shape_str(io_shape));
        }
        const auto method = cfg.kind == LayerKind::UpsampleNearest ? InterpMethod::Nearest
                                                                   : InterpMethod::Bicubic;
        io_shape = {io_shape[0], io_shape[1] * cfg.factor.h, io_shape[2] * cfg.factor.w};
        return std::make_unique<UpsampleLayer>(method, cfg.factor);
    }
    case LayerKind::BatchNorm: {
        if (io_shape.size() != 1 && io_shape.size() != 3) {
            throw ShapeError("batch_norm layer expects flat or CHW input, got " +
                             shape_str(io_shape));
        }
        return std::make_unique<BatchNormLayer>(io_shape[0]);
    }
    case LayerKind::LeakyReLU:
        return std::make_unique<LeakyReluLayer>(cfg.slope);
    case LayerKind::GaussianNoise:
        return std::make_unique<GaussianNoiseLayer>(cfg.sigma);
    case LayerKind::Reshape: {
        if (numel(cfg.reshape_to) != numel(io_shape)) {
            throw ShapeError("reshape layer: cannot view " + shape_str(io_shape) + " as " +
                             shape_str(cfg.reshape_to));
        }
        io_shape = cfg.reshape_to;
        return std::make_unique<ReshapeLayer>(cfg.reshape_to);
    }
    case LayerKind::CenterCrop: {
        if (io_shape.size() != 3) {
            throw ShapeError("center_crop layer expects CHW input, got " + shape_str(io_shape));
        }
        if (cfg.crop.h > io_shape[1] || cfg.crop.w > io_shape[2]) {
            throw ShapeError("center_crop layer target exceeds input " + shape_str(io_shape));
        }
        io_shape = {io_shape[0], cfg.crop.h, cfg.crop.w};
        return std::make_unique<CenterCropLayer>(cfg.crop);
    }
    case LayerKind::ZeroMeanNormalize:
        return std::make_unique<ZeroMeanLayer>();
    case LayerKind::SoftmaxHead:
        return std::make_unique<SoftmaxLayer>();
    }
    throw ValueError("build_layer: unknown layer kind");
}

Sequential::Sequential(const std::vector<LayerConfig>& configs, Shape input_shape, Rng& rng)
    : configs_(configs) {
    Shape shape = std::move(input_shape);
    layers_.reserve(configs.size());
    for (const auto& cfg : configs) {
        layers_.push_back(build_layer(cfg, shape, rng));
    }
    output_shape_ = std::move(shape);
}

Tensor Sequential::forward(const Tensor& x, const Ctx& ctx) const {
    Tensor y = x;
    for (const auto& layer : layers_) {
        y = layer->forward(y, ctx);
    }
    return y;
}

std::vector<std::string> Sequential::signatures() const {
    std::vector<std::string> out;
    out.reserve(configs_.size());
    for (const auto& cfg : configs_) {
        out.push_back(signature(cfg));
    }
    return out;
}

void Sequential::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->collect_params(prefix + "." + std::to_string(i), out);
    }
}

ClassEmbedding::ClassEmbedding(std::int64_t num_classes, std::int64_t dim, Rng& rng) {
    if (num_classes < 2 || dim < 1) {
        throw ValueError("class embedding needs >= 2 classes and dim >= 1");
    }
    // Centered at one: the embedding multiplies the latent vector, so a
    // fresh model starts close to the unconditioned generator.
    std::vector<double> data(static_cast<std::size_t>(num_classes * dim));
    for (auto& v : data) {
        v = 1.0 + rng.uniform(-0.05, 0.05);
    }
    table_ = Tensor::from_data({num_classes, dim}, std::move(data), true);
}

Tensor ClassEmbedding::forward(const Tensor& z, const std::vector<std::int64_t>& labels) const {
    if (z.rank() != 2) {
        throw ShapeError("class embedding expects latent [batch, dim], got " +
                         shape_str(z.shape()));
    }
    if (static_cast<std::int64_t>(labels.size()) != z.shape()[0]) {
        throw ShapeError("class embedding: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(z.shape()[0]));
    }
    return ops::mul(z, ops::embedding_gather(table_, labels));
}

void ClassEmbedding::collect_params(const std::string& prefix,
                                    std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".table", table_, true});
}

} // namespace layers
} // namespace waveforge
