#include "waveforge/models.hpp"

#include <cmath>
#include <sstream>

namespace waveforge {
namespace models {

const std::vector<UpsampleScheme> kAllSchemes = {
    UpsampleScheme::DC_DC,   UpsampleScheme::BC_BC,     UpsampleScheme::NN_NN,
    UpsampleScheme::BC_DCBL, UpsampleScheme::DCBL_BC,   UpsampleScheme::DCBL_DCBL,
};

std::string to_string(UpsampleScheme s) {
    switch (s) {
    case UpsampleScheme::DC_DC:
        return "dc-dc";
    case UpsampleScheme::BC_BC:
        return "bc-bc";
    case UpsampleScheme::NN_NN:
        return "nn-nn";
    case UpsampleScheme::BC_DCBL:
        return "bc-dcbl";
    case UpsampleScheme::DCBL_BC:
        return "dcbl-bc";
    case UpsampleScheme::DCBL_DCBL:
        return "dcbl-dcbl";
    }
    throw ValueError("unknown upsample scheme");
}

UpsampleScheme scheme_from_string(const std::string& name) {
    for (const auto s : kAllSchemes) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ValueError("unknown upsample scheme '" + name + "'");
}

std::string to_string(Variant v) {
    switch (v) {
    case Variant::Gen1ch:
        return "gen1ch";
    case Variant::Disc1ch:
        return "disc1ch";
    case Variant::Gen64ch:
        return "gen64ch";
    case Variant::Disc64ch:
        return "disc64ch";
    case Variant::CCGen:
        return "ccgen";
    case Variant::CCSharedTrunk:
        return "ccsharedtrunk";
    case Variant::CCDiscBranch:
        return "ccdiscbranch";
    case Variant::CCClassBranch:
        return "ccclassbranch";
    }
    throw ValueError("unknown model variant");
}

Variant variant_from_string(const std::string& name) {
    for (const auto v : {Variant::Gen1ch, Variant::Disc1ch, Variant::Gen64ch, Variant::Disc64ch,
                         Variant::CCGen, Variant::CCSharedTrunk, Variant::CCDiscBranch,
                         Variant::CCClassBranch}) {
        if (to_string(v) == name) {
            return v;
        }
    }
    throw ValueError("unknown model variant '" + name + "'");
}

void validate(const ModelSpec& spec) {
    if (!(spec.width_scale > 0.0 && spec.width_scale <= 1.0)) {
        throw ValueError("model spec: width_scale must be in (0, 1], got " +
                         std::to_string(spec.width_scale));
    }
    if (spec.latent_dim < 1) {
        throw ValueError("model spec: latent_dim must be >= 1");
    }
    if (spec.channels != 1 && spec.channels != 64) {
        throw ValueError("model spec: channels must be 1 or 64, got " +
                         std::to_string(spec.channels));
    }
    if (spec.num_classes < 2) {
        throw ValueError("model spec: num_classes must be >= 2");
    }
}

std::string serialize(const ModelSpec& spec) {
    std::ostringstream os;
    os << "variant = " << to_string(spec.variant) << "\n";
    os << "width_scale = " << spec.width_scale << "\n";
    os << "latent_dim = " << spec.latent_dim << "\n";
    os << "num_classes = " << spec.num_classes << "\n";
    os << "channels = " << spec.channels << "\n";
    os << "scheme = " << to_string(spec.scheme) << "\n";
    return os.str();
}

ModelSpec parse_model_spec(const std::string& text) {
    ModelSpec spec;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) {
                return std::string();
            }
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        if (strip(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("model spec line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        }
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key == "variant") {
            spec.variant = variant_from_string(value);
        } else if (key == "width_scale") {
            spec.width_scale = std::stod(value);
        } else if (key == "latent_dim") {
            spec.latent_dim = std::stoll(value);
        } else if (key == "num_classes") {
            spec.num_classes = std::stoll(value);
        } else if (key == "channels") {
            spec.channels = std::stoll(value);
        } else if (key == "scheme") {
            spec.scheme = scheme_from_string(value);
        } else {
            throw FormatError("model spec: unknown key '" + key + "'");
        }
    }
    validate(spec);
    return spec;
}

std::int64_t scaled_width(std::int64_t base, double width_scale) {
    const double w = static_cast<double>(base) * width_scale;
    const std::int64_t rounded = 4 * static_cast<std::int64_t>(std::ceil(w / 4.0));
    return std::max<std::int64_t>(4, rounded);
}

namespace {

enum class Step { DC, BC, NN, DCBL };

std::pair<Step, Step> scheme_steps(UpsampleScheme s) {
    switch (s) {
    case UpsampleScheme::DC_DC:
        return {Step::DC, Step::DC};
    case UpsampleScheme::BC_BC:
        return {Step::BC, Step::BC};
    case UpsampleScheme::NN_NN:
        return {Step::NN, Step::NN};
    case UpsampleScheme::BC_DCBL:
        return {Step::BC, Step::DCBL};
    case UpsampleScheme::DCBL_BC:
        return {Step::DCBL, Step::BC};
    case UpsampleScheme::DCBL_DCBL:
        return {Step::DCBL, Step::DCBL};
    }
    throw ValueError("unknown upsample scheme");
}

// One x2 upsampling block. For one-channel data the spatial field is (1, T)
// and only the time axis is upsampled.
layers::LayerConfig step_config(Step step, bool one_d, std::int64_t out_channels) {
    layers::LayerConfig cfg;
    const Hw factor = one_d ? Hw{1, 2} : Hw{2, 2};
    switch (step) {
    case Step::BC:
        cfg.kind = layers::LayerKind::UpsampleBicubic;
        cfg.factor = factor;
        return cfg;
    case Step::NN:
        cfg.kind = layers::LayerKind::UpsampleNearest;
        cfg.factor = factor;
        return cfg;
    case Step::DC:
    case Step::DCBL:
        cfg.kind = layers::LayerKind::TransposedConv2d;
        cfg.channels = out_channels;
        cfg.stride = factor;
        cfg.kernel = {layers::deconv_kernel_size(factor.h), layers::deconv_kernel_size(factor.w)};
        cfg.pad = {factor.h > 1 ? 1 : 0, factor.w > 1 ? 1 : 0};
        cfg.init = step == Step::DCBL ? layers::InitScheme::BilinearDeconv
                                      : layers::InitScheme::UniformSmall;
        return cfg;
    }
    throw ValueError("unknown upsampling step");
}

bool is_generator(Variant v) {
    return v == Variant::Gen1ch || v == Variant::Gen64ch || v == Variant::CCGen;
}

bool is_discriminator(Variant v) { return v == Variant::Disc1ch || v == Variant::Disc64ch; }

std::int64_t generator_channels(const ModelSpec& spec) {
    if (spec.variant == Variant::Gen1ch) {
        return 1;
    }
    if (spec.variant == Variant::Gen64ch) {
        return 64;
    }
    return spec.channels;
}

} // namespace

Shape sample_shape(std::int64_t channels) {
    // One-channel epochs are laid out (1, 1, 64) so 1-D signals reuse the 2-D
    // kernels with (1 x k) shapes; 64-channel epochs are (1, 64, 64) images.
    return channels == 1 ? Shape{1, 1, 64} : Shape{1, 64, 64};
}

std::vector<layers::LayerConfig> generator_configs(const ModelSpec& spec) {
    validate(spec);
    if (!is_generator(spec.variant)) {
        throw ValueError("generator_configs: variant " + to_string(spec.variant) +
                         " is not a generator");
    }
    using layers::LayerConfig;
    using layers::LayerKind;
    const std::int64_t channels = generator_channels(spec);
    const bool one_d = channels == 1;
    const auto [step1, step2] = scheme_steps(spec.scheme);
    const std::int64_t dense1 = scaled_width(1024, spec.width_scale);
    const std::int64_t c_reshape = scaled_width(128, spec.width_scale);
    const std::int64_t c_mid = scaled_width(64, spec.width_scale);
    const std::int64_t seed_h = one_d ? 1 : 18;
    const std::int64_t seed_w = one_d ? 16 : 18;

    std::vector<LayerConfig> cfgs;
    cfgs.push_back({.kind = LayerKind::Dense, .units = dense1});
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    cfgs.push_back({.kind = LayerKind::Dense, .units = seed_h * seed_w * c_reshape});
    cfgs.push_back({.kind = LayerKind::BatchNorm});
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    {
        LayerConfig r{.kind = LayerKind::Reshape};
        r.reshape_to = {c_reshape, seed_h, seed_w};
        cfgs.push_back(r);
    }
    cfgs.push_back(step_config(step1, one_d, c_reshape));
    cfgs.push_back({.kind = LayerKind::BatchNorm});
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    {
        LayerConfig conv{.kind = LayerKind::Conv2d, .channels = c_mid};
        conv.kernel = one_d ? Hw{1, 3} : Hw{3, 3};
        conv.pad = one_d ? Hw{0, 1} : Hw{1, 1};
        cfgs.push_back(conv);
    }
    cfgs.push_back({.kind = LayerKind::BatchNorm});
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    cfgs.push_back(step_config(step2, one_d, c_reshape));
    if (!one_d) {
        // 72x72 is generated and clipped back to 64x64; edge samples of the
        // upsampling never reach the output.
        LayerConfig crop{.kind = LayerKind::CenterCrop};
        crop.crop = {64, 64};
        cfgs.push_back(crop);
    }
    cfgs.push_back({.kind = LayerKind::BatchNorm});
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    {
        LayerConfig conv{.kind = LayerKind::Conv2d, .channels = 1};
        conv.kernel = one_d ? Hw{1, 3} : Hw{3, 3};
        conv.pad = one_d ? Hw{0, 1} : Hw{1, 1};
        cfgs.push_back(conv);
    }
    if (spec.variant == Variant::CCGen || spec.variant == Variant::Gen64ch) {
        cfgs.push_back({.kind = LayerKind::ZeroMeanNormalize});
    }
    return cfgs;
}

namespace {

// Everything of the discriminator up to (and including) the shared hidden
// representation; the scoring head is appended separately.
std::vector<layers::LayerConfig> disc_trunk_configs(const ModelSpec& spec,
                                                    std::int64_t channels) {
    using layers::LayerConfig;
    using layers::LayerKind;
    const bool one_d = channels == 1;
    const Hw k = one_d ? Hw{1, 3} : Hw{3, 3};
    const Hw p = one_d ? Hw{0, 1} : Hw{1, 1};
    const Hw s2 = one_d ? Hw{1, 2} : Hw{2, 2};
    const std::int64_t c1 = scaled_width(64, spec.width_scale);
    const std::int64_t c2 = scaled_width(128, spec.width_scale);
    const std::int64_t spatial = one_d ? 16 : 16 * 16;

    std::vector<LayerConfig> cfgs;
    {
        LayerConfig noise{.kind = LayerKind::GaussianNoise};
        noise.sigma = 0.05;
        cfgs.push_back(noise);
    }
    {
        LayerConfig conv{.kind = LayerKind::Conv2d, .channels = c1};
        conv.kernel = k;
        conv.pad = p;
        cfgs.push_back(conv);
    }
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    {
        LayerConfig conv{.kind = LayerKind::Conv2d, .channels = c2};
        conv.kernel = k;
        conv.stride = s2;
        conv.pad = p;
        cfgs.push_back(conv);
    }
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    {
        LayerConfig conv{.kind = LayerKind::Conv2d, .channels = c2};
        conv.kernel = k;
        conv.stride = s2;
        conv.pad = p;
        cfgs.push_back(conv);
    }
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    {
        LayerConfig flat{.kind = LayerKind::Reshape};
        flat.reshape_to = {spatial * c2};
        cfgs.push_back(flat);
    }
    cfgs.push_back({.kind = LayerKind::Dense, .units = scaled_width(1024, spec.width_scale)});
    cfgs.push_back({.kind = LayerKind::LeakyReLU});
    return cfgs;
}

} // namespace

std::vector<layers::LayerConfig> discriminator_configs(const ModelSpec& spec) {
    validate(spec);
    if (!is_discriminator(spec.variant)) {
        throw ValueError("discriminator_configs: variant " + to_string(spec.variant) +
                         " is not a discriminator");
    }
    const std::int64_t channels = spec.variant == Variant::Disc1ch ? 1 : 64;
    auto cfgs = disc_trunk_configs(spec, channels);
    cfgs.push_back({.kind = layers::LayerKind::Dense, .units = 1}); // linear score
    return cfgs;
}

Generator::Generator(const ModelSpec& spec, Rng& rng) : spec_(spec) {
    validate(spec);
    if (spec.variant == Variant::CCGen) {
        embedding_.emplace(spec.num_classes, spec.latent_dim, rng);
    }
    net_ = layers::Sequential(generator_configs(spec), {spec.latent_dim}, rng);
}

Tensor Generator::forward(const Tensor& z, const std::vector<std::int64_t>* labels,
                          const layers::Ctx& ctx) const {
    if (z.rank() != 2 || z.shape()[1] != spec_.latent_dim) {
        throw ShapeError("generator: latent must be [batch, " +
                         std::to_string(spec_.latent_dim) + "], got " + shape_str(z.shape()));
    }
    if (embedding_.has_value()) {
        if (labels == nullptr) {
            throw ValueError("generator: class-conditioned variant needs labels");
        }
        return net_.forward(embedding_->forward(z, *labels), ctx);
    }
    if (labels != nullptr) {
        throw ValueError("generator: labels passed to a non-class-conditioned variant");
    }
    return net_.forward(z, ctx);
}

std::vector<NamedParam> Generator::params() const {
    std::vector<NamedParam> out;
    if (embedding_.has_value()) {
        embedding_->collect_params("g.embed", out);
    }
    net_.collect_params("g", out);
    return out;
}

Discriminator::Discriminator(const ModelSpec& spec, Rng& rng) : spec_(spec) {
    validate(spec);
    const std::int64_t channels = spec.variant == Variant::Disc1ch ? 1 : 64;
    net_ = layers::Sequential(discriminator_configs(spec), sample_shape(channels), rng);
}

Tensor Discriminator::forward(const Tensor& x, const layers::Ctx& ctx) const {
    const std::int64_t channels = spec_.variant == Variant::Disc1ch ? 1 : 64;
    const Shape expect = sample_shape(channels);
    if (x.rank() != 4 || x.shape()[1] != expect[0] || x.shape()[2] != expect[1] ||
        x.shape()[3] != expect[2]) {
        throw ShapeError("discriminator: expected input [batch," + std::to_string(expect[0]) +
                         "," + std::to_string(expect[1]) + "," + std::to_string(expect[2]) +
                         "], got " + shape_str(x.shape()));
    }
    return net_.forward(x, ctx);
}

std::vector<NamedParam> Discriminator::params() const {
    std::vector<NamedParam> out;
    net_.collect_params("d", out);
    return out;
}

CcModel::CcModel(const ModelSpec& spec, Rng& rng) : spec_(spec) {
    validate(spec);
    trunk_ = layers::Sequential(disc_trunk_configs(spec, spec.channels),
                                sample_shape(spec.channels), rng);
    const Shape hidden = trunk_.output_shape();
    disc_head_ = layers::Sequential({{.kind = layers::LayerKind::Dense, .units = 1}}, hidden, rng);
    class_head_ = layers::Sequential({{.kind = layers::LayerKind::Dense,
                                       .units = spec.num_classes}},
                                     hidden, rng);
}

Tensor CcModel::trunk_forward(const Tensor& x, const layers::Ctx& ctx) const {
    ++trunk_evals_;
    return trunk_.forward(x, ctx);
}

Tensor CcModel::disc_forward(const Tensor& x, const layers::Ctx& ctx) const {
    return disc_head_.forward(trunk_forward(x, ctx), ctx);
}

Tensor CcModel::class_forward(const Tensor& x, const layers::Ctx& ctx) const {
    return class_head_.forward(trunk_forward(x, ctx), ctx);
}

std::pair<Tensor, Tensor> CcModel::forward_both(const Tensor& x, const layers::Ctx& ctx) const {
    const Tensor shared = trunk_forward(x, ctx);
    return {disc_head_.forward(shared, ctx), class_head_.forward(shared, ctx)};
}

std::vector<NamedParam> CcModel::trunk_params() const {
    std::vector<NamedParam> out;
    trunk_.collect_params("s", out);
    return out;
}

std::vector<NamedParam> CcModel::disc_params() const {
    std::vector<NamedParam> out;
    disc_head_.collect_params("d", out);
    return out;
}

std::vector<NamedParam> CcModel::class_params() const {
    std::vector<NamedParam> out;
    class_head_.collect_params("c", out);
    return out;
}

std::vector<NamedParam> CcModel::params() const {
    auto out = trunk_params();
    auto d = disc_params();
    auto c = class_params();
    out.insert(out.end(), d.begin(), d.end());
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

Generator build_generator(const ModelSpec& spec, Rng& rng) { return Generator(spec, rng); }

Discriminator build_discriminator(const ModelSpec& spec, Rng& rng) {
    return Discriminator(spec, rng);
}

CcModel build_cc_model(const ModelSpec& spec, Rng& rng) { return CcModel(spec, rng); }

} // namespace models
} // namespace waveforge
