#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "waveforge/layers.hpp"

namespace waveforge {
namespace models {

enum class Variant {
    Gen1ch,
    Disc1ch,
    Gen64ch,
    Disc64ch,
    CCGen,
    CCSharedTrunk,
    CCDiscBranch,
    CCClassBranch,
};

// The two-step upsampling combination of the generator, named first step
// then second step. DC = plain transposed convolution, DCBL = transposed
// convolution with bilinear weight initialization, BC = bicubic
// interpolation, NN = nearest-neighbour interpolation.
enum class UpsampleScheme { DC_DC, BC_BC, NN_NN, BC_DCBL, DCBL_BC, DCBL_DCBL };

extern const std::vector<UpsampleScheme> kAllSchemes; // fixed presentation order

std::string to_string(UpsampleScheme s);
UpsampleScheme scheme_from_string(const std::string& name);
std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct ModelSpec {
    Variant variant = Variant::Gen1ch;
    double width_scale = 1.0;
    std::int64_t latent_dim = 120;
    std::int64_t num_classes = 2;
    std::int64_t channels = 1; // data channel count: 1 or 64
    UpsampleScheme scheme = UpsampleScheme::BC_DCBL;
};

void validate(const ModelSpec& spec);

// Flat `key = value` round trip (the CLI sidecar format).
std::string serialize(const ModelSpec& spec);
ModelSpec parse_model_spec(const std::string& text);

// Channel/unit width scaled and rounded up to the nearest multiple of 4.
std::int64_t scaled_width(std::int64_t base, double width_scale);

// Layer stacks, exposed for structural comparisons between variants.
std::vector<layers::LayerConfig> generator_configs(const ModelSpec& spec);
std::vector<layers::LayerConfig> discriminator_configs(const ModelSpec& spec);

class Generator {
  public:
    Generator(const ModelSpec& spec, Rng& rng);

    // z is [batch, latent_dim]; labels are required exactly when the spec is
    // class-conditioned. Output is [batch, 1, 1, 64] or [batch, 1, 64, 64].
    Tensor forward(const Tensor& z, const std::vector<std::int64_t>* labels,
                   const layers::Ctx& ctx) const;

    std::vector<NamedParam> params() const;
    const ModelSpec& spec() const { return spec_; }
    const layers::Sequential& net() const { return net_; }
    bool class_conditioned() const { return embedding_.has_value(); }

  private:
    ModelSpec spec_;
    std::optional<layers::ClassEmbedding> embedding_;
    layers::Sequential net_;
};

class Discriminator {
  public:
    Discriminator(const ModelSpec& spec, Rng& rng);

    Tensor forward(const Tensor& x, const layers::Ctx& ctx) const; // [batch, 1]

    std::vector<NamedParam> params() const;
    const ModelSpec& spec() const { return spec_; }
    const layers::Sequential& net() const { return net_; }

  private:
    ModelSpec spec_;
    layers::Sequential net_;
};

// Shared trunk with a discriminator branch and a classifier branch.
class CcModel {
  public:
    CcModel(const ModelSpec& spec, Rng& rng);

    Tensor trunk_forward(const Tensor& x, const layers::Ctx& ctx) const;
    Tensor disc_forward(const Tensor& x, const layers::Ctx& ctx) const;  // [batch, 1]
    Tensor class_forward(const Tensor& x, const layers::Ctx& ctx) const; // [batch, classes]

    // Both heads on one trunk evaluation.
    std::pair<Tensor, Tensor> forward_both(const Tensor& x, const layers::Ctx& ctx) const;

    std::vector<NamedParam> trunk_params() const;  // theta_S
    std::vector<NamedParam> disc_params() const;   // theta_D
    std::vector<NamedParam> class_params() const;  // theta_C
    std::vector<NamedParam> params() const;        // all three partitions

    std::int64_t trunk_evals() const { return trunk_evals_; }
    const ModelSpec& spec() const { return spec_; }

  private:
    ModelSpec spec_;
    layers::Sequential trunk_;
    layers::Sequential disc_head_;
    layers::Sequential class_head_;
    mutable std::int64_t trunk_evals_ = 0;
};

Generator build_generator(const ModelSpec& spec, Rng& rng);
Discriminator build_discriminator(const ModelSpec& spec, Rng& rng);
CcModel build_cc_model(const ModelSpec& spec, Rng& rng);

// Expected model input shape (without batch axis) for the data channel count.
Shape sample_shape(std::int64_t channels);

} // namespace models
} // namespace waveforge
