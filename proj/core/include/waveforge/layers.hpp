#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "waveforge/ops.hpp"
#include "waveforge/rng.hpp"
#include "waveforge/tensor.hpp"

namespace waveforge {

struct NamedParam {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

namespace layers {

enum class Mode { Train, Eval };

// Per-forward context: train/eval switch plus the RNG owned by the training
// context (needed by noise layers in train mode).
struct Ctx {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr;
};

// ---- weight initialization ---------------------------------------------------

enum class InitScheme { BilinearDeconv, UniformSmall, Zeros };

// Kernel size that keeps a transposed convolution divisible by its stride:
// 2 * stride - stride % 2.
std::int64_t deconv_kernel_size(std::int64_t stride);

// Triangular interpolation weights of length deconv_kernel_size(stride);
// applying them to a zero-stuffed signal reproduces linear interpolation.
std::vector<double> bilinear_init_weights(std::int64_t stride);

Tensor glorot_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

// ---- functional layer ops ------------------------------------------------------

// Additive white Gaussian noise in train mode, identity in eval mode.
Tensor gaussian_noise(const Tensor& x, double sigma, Mode mode, Rng* rng);

// Central window of the two trailing axes; parity-odd remainders drop the
// extra row/column from the trailing edge.
Tensor center_crop(const Tensor& x, std::int64_t target_h, std::int64_t target_w);

// Subtract the per-sample mean (over all non-batch axes). Rank-1 input is
// treated as a single sample.
Tensor zero_mean_normalize(const Tensor& x);

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor softmax(const Tensor& logits); // rows of [B, K]

// Mean cross-entropy of integer labels under softmax(logits).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);

enum class InterpMethod { Nearest, Bicubic };

Tensor upsample_interpolate(const Tensor& x, Hw factor, InterpMethod method);

// ---- declarative layer description ----------------------------------------------

enum class LayerKind {
    Dense,
    Conv2d,
    TransposedConv2d,
    UpsampleNearest,
    UpsampleBicubic,
    BatchNorm,
    LeakyReLU,
    GaussianNoise,
    Reshape,
    CenterCrop,
    ZeroMeanNormalize,
    SoftmaxHead,
};

struct LayerConfig {
    LayerKind kind;
    std::int64_t units = 0;    // Dense output width
    std::int64_t channels = 0; // Conv2d / TransposedConv2d output channels
    Hw kernel{1, 1};
    Hw stride{1, 1};
    Hw pad{0, 0};
    Hw factor{1, 1}; // upsampling
    double slope = 0.2;
    double sigma = 0.0;
    Hw crop{0, 0};
    Shape reshape_to;                          // non-batch dims
    InitScheme init = InitScheme::UniformSmall;
};

// Stable structural signature used for layer-list comparisons between model
// variants (parameter sizes are deliberately not part of it).
std::string signature(const LayerConfig& cfg);

// ---- layer objects ------------------------------------------------------------------

class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, const Ctx& ctx) = 0;
    virtual void collect_params(const std::string&, std::vector<NamedParam>&) {}
};

using LayerPtr = std::unique_ptr<Layer>;

// Instantiates a layer for the given input shape (batch axis excluded from
// validation); returns the layer and reports the output shape.
LayerPtr build_layer(const LayerConfig& cfg, Shape& io_shape, Rng& rng);

class Sequential {
  public:
    Sequential() = default;

    // Builds the whole stack, threading the shape through every layer.
    Sequential(const std::vector<LayerConfig>& configs, Shape input_shape, Rng& rng);

    Tensor forward(const Tensor& x, const Ctx& ctx) const;

    const Shape& output_shape() const { return output_shape_; }
    const std::vector<LayerConfig>& configs() const { return configs_; }
    std::vector<std::string> signatures() const;
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const;

  private:
    std::vector<LayerConfig> configs_;
    std::vector<LayerPtr> layers_;
    Shape output_shape_;
};

// Learned per-class vectors multiplied elementwise into the latent input.
class ClassEmbedding {
  public:
    ClassEmbedding(std::int64_t num_classes, std::int64_t dim, Rng& rng);

    Tensor forward(const Tensor& z, const std::vector<std::int64_t>& labels) const;
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out) const;
    std::int64_t num_classes() const { return table_.shape()[0]; }
    const Tensor& table() const { return table_; }

  private:
    Tensor table_;
};

} // namespace layers
} // namespace waveforge
