#include "waveforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace waveforge {
namespace ops {

namespace {

void require_equal_shapes(const char* what, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

// Broadcast scalar tensor over `shape`; gradient is the total sum.
Tensor scalar_expand(const Tensor& s, Shape shape) {
    const double v = s.at(0);
    std::vector<double> out(static_cast<std::size_t>(numel(shape)), v);
    return make_op("scalar_expand", std::move(shape), std::move(out), {s},
                   [](const Tensor& g) -> std::vector<Tensor> { return {reduce_sum(g)}; });
}

struct Dims4 {
    std::int64_t n, c, h, w;
};

Dims4 dims4(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw ShapeError(std::string(what) + ": expected rank-4 tensor, got " +
                         shape_str(t.shape()));
    }
    const auto& s = t.shape();
    return {s[0], s[1], s[2], s[3]};
}

// Odometer walk over `full` in row-major order, reporting for every element
// its linear index and the linear index of the shape with `axes` removed.
template <typename Fn>
void walk_with_reduced(const Shape& full, const std::vector<std::size_t>& axes, Fn&& fn) {
    const std::size_t rank = full.size();
    std::vector<bool> reduced(rank, false);
    for (const auto a : axes) {
        reduced[a] = true;
    }
    // Strides of the kept sub-shape, placed at their original positions.
    std::vector<std::int64_t> kept_stride(rank, 0);
    std::int64_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
        if (!reduced[i]) {
            kept_stride[i] = acc;
            acc *= full[i];
        }
    }
    std::vector<std::int64_t> counter(rank, 0);
    const std::int64_t total = numel(full);
    std::int64_t small = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        fn(flat, small);
        for (std::size_t i = rank; i-- > 0;) {
            ++counter[i];
            small += kept_stride[i];
            if (counter[i] < full[i]) {
                break;
            }
            small -= kept_stride[i] * full[i];
            counter[i] = 0;
        }
    }
}

void validate_axes(const Shape& shape, const std::vector<std::size_t>& axes, const char* what) {
    if (axes.empty()) {
        throw ValueError(std::string(what) + ": empty axis list");
    }
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= shape.size()) {
            throw ValueError(std::string(what) + ": axis out of range for " + shape_str(shape));
        }
        if (i > 0 && axes[i] <= axes[i - 1]) {
            throw ValueError(std::string(what) + ": axes must be strictly increasing");
        }
    }
    if (axes.size() >= shape.size()) {
        throw ValueError(std::string(what) + ": reducing all axes; use reduce_sum instead");
    }
}

Shape remove_axes(const Shape& shape, const std::vector<std::size_t>& axes) {
    Shape out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (k < axes.size() && axes[k] == i) {
            ++k;
        } else {
            out.push_back(shape[i]);
        }
    }
    return out;
}

} // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        if (a.size() == 1) {
            return add(scalar_expand(a, b.shape()), b);
        }
        if (b.size() == 1) {
            return add(a, scalar_expand(b, a.shape()));
        }
        require_equal_shapes("add", a, b);
    }
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ad[i] + bd[i];
    }
    return make_op("add", a.shape(), std::move(out), {a, b},
                   [](const Tensor& g) -> std::vector<Tensor> { return {g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        if (a.size() == 1) {
            return sub(scalar_expand(a, b.shape()), b);
        }
        if (b.size() == 1) {
            return sub(a, scalar_expand(b, a.shape()));
        }
        require_equal_shapes("sub", a, b);
    }
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ad[i] - bd[i];
    }
    return make_op("sub", a.shape(), std::move(out), {a, b},
                   [](const Tensor& g) -> std::vector<Tensor> { return {g, neg(g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        if (a.size() == 1) {
            return mul(scalar_expand(a, b.shape()), b);
        }
        if (b.size() == 1) {
            return mul(a, scalar_expand(b, a.shape()));
        }
        require_equal_shapes("mul", a, b);
    }
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ad[i] * bd[i];
    }
    return make_op("mul", a.shape(), std::move(out), {a, b},
                   [a, b](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, b), mul(g, a)};
                   });
}

Tensor neg(const Tensor& a) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = -ad[i];
    }
    return make_op("neg", a.shape(), std::move(out), {a},
                   [](const Tensor& g) -> std::vector<Tensor> { return {neg(g)}; });
}

Tensor scalar_mul(const Tensor& a, double c) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ad[i] * c;
    }
    return make_op("scalar_mul", a.shape(), std::move(out), {a},
                   [c](const Tensor& g) -> std::vector<Tensor> { return {scalar_mul(g, c)}; });
}

Tensor scalar_add(const Tensor& a, double c) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = ad[i] + c;
    }
    return make_op("scalar_add", a.shape(), std::move(out), {a},
                   [](const Tensor& g) -> std::vector<Tensor> { return {g}; });
}

Tensor pow_scalar(const Tensor& a, double p) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::pow(ad[i], p);
    }
    return make_op("pow_scalar", a.shape(), std::move(out), {a},
                   [a, p](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, scalar_mul(pow_scalar(a, p - 1.0), p))};
                   });
}

Tensor exp(const Tensor& a) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(ad[i]);
    }
    return make_op("exp", a.shape(), std::move(out), {a},
                   [a](const Tensor& g) -> std::vector<Tensor> { return {mul(g, exp(a))}; });
}

Tensor log(const Tensor& a) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::log(ad[i]);
    }
    return make_op("log", a.shape(), std::move(out), {a},
                   [a](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, pow_scalar(a, -1.0))};
                   });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    std::vector<double> mask(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool pos = ad[i] > 0.0;
        out[i] = pos ? ad[i] : slope * ad[i];
        mask[i] = pos ? 1.0 : slope;
    }
    // The mask is a constant of the local linearization; exact a.e.
    Tensor mask_t = Tensor::from_data(a.shape(), std::move(mask));
    return make_op("leaky_relu", a.shape(), std::move(out), {a},
                   [mask_t](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, mask_t)};
                   });
}

// ---- reductions / broadcast --------------------------------------------------

Tensor reduce_sum(const Tensor& a) {
    double s = 0.0;
    for (const double v : a.data()) {
        s += v;
    }
    Shape shape = a.shape();
    return make_op("reduce_sum", {1}, {s}, {a},
                   [shape](const Tensor& g) -> std::vector<Tensor> {
                       return {scalar_expand(g, shape)};
                   });
}

Tensor reduce_mean(const Tensor& a) {
    return scalar_mul(reduce_sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reduce_sum_axes(const Tensor& a, std::vector<std::size_t> axes) {
    validate_axes(a.shape(), axes, "reduce_sum_axes");
    const Shape out_shape = remove_axes(a.shape(), axes);
    std::vector<double> out(static_cast<std::size_t>(numel(out_shape)), 0.0);
    const auto ad = a.data();
    walk_with_reduced(a.shape(), axes, [&](std::int64_t flat, std::int64_t small) {
        out[static_cast<std::size_t>(small)] += ad[static_cast<std::size_t>(flat)];
    });
    Shape full = a.shape();
    return make_op("reduce_sum_axes", out_shape, std::move(out), {a},
                   [full, axes](const Tensor& g) -> std::vector<Tensor> {
                       return {expand_axes(g, full, axes)};
                   });
}

Tensor reduce_mean_axes(const Tensor& a, std::vector<std::size_t> axes) {
    validate_axes(a.shape(), axes, "reduce_mean_axes");
    std::int64_t n = 1;
    for (const auto ax : axes) {
        n *= a.shape()[ax];
    }
    return scalar_mul(reduce_sum_axes(a, std::move(axes)), 1.0 / static_cast<double>(n));
}

Tensor expand_axes(const Tensor& a, Shape full, std::vector<std::size_t> axes) {
    validate_axes(full, axes, "expand_axes");
    const Shape expected = remove_axes(full, axes);
    if (a.shape() != expected) {
        throw ShapeError("expand_axes: input shape " + shape_str(a.shape()) +
                         " does not match " + shape_str(full) + " minus reduced axes " +
                         shape_str(expected));
    }
    std::vector<double> out(static_cast<std::size_t>(numel(full)));
    const auto ad = a.data();
    walk_with_reduced(full, axes, [&](std::int64_t flat, std::int64_t small) {
        out[static_cast<std::size_t>(flat)] = ad[static_cast<std::size_t>(small)];
    });
    return make_op("expand_axes", full, std::move(out), {a},
                   [axes](const Tensor& g) -> std::vector<Tensor> {
                       return {reduce_sum_axes(g, axes)};
                   });
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    }
    const std::int64_t m = a.shape()[0];
    const std::int64_t k = a.shape()[1];
    const std::int64_t k2 = b.shape()[0];
    const std::int64_t n = b.shape()[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* orow = out.data() + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) {
                continue;
            }
            const double* brow = pb + kk * n;
            for (std::int64_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return make_op("matmul", {m, n}, std::move(out), {a, b},
                   [a, b](const Tensor& g) -> std::vector<Tensor> {
                       return {matmul(g, transpose2d(b)), matmul(transpose2d(a), g)};
                   });
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) {
        throw ShapeError("transpose2d: expected rank-2 tensor, got " + shape_str(a.shape()));
    }
    const std::int64_t m = a.shape()[0];
    const std::int64_t n = a.shape()[1];
    std::vector<double> out(static_cast<std::size_t>(m * n));
    const auto ad = a.data();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j * m + i)] = ad[static_cast<std::size_t>(i * n + j)];
        }
    }
    return make_op("transpose2d", {n, m}, std::move(out), {a},
                   [](const Tensor& g) -> std::vector<Tensor> { return {transpose2d(g)}; });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    }
    Shape prev = a.shape();
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_op("reshape", std::move(shape), std::move(out), {a},
                   [prev](const Tensor& g) -> std::vector<Tensor> {
                       return {reshape(g, prev)};
                   });
}

// ---- convolution family ----------------------------------------------------------
// Shared raw kernels. All tensors are contiguous NCHW.

namespace {

struct ConvGeom {
    Dims4 x;          // data-side dims
    Dims4 y;          // output-side dims
    std::int64_t f, c, kh, kw;
    Hw stride, pad;
};

void check_conv_args(Hw stride, Hw pad, const char* what) {
    if (stride.h < 1 || stride.w < 1) {
        throw ValueError(std::string(what) + ": stride must be >= 1");
    }
    if (pad.h < 0 || pad.w < 0) {
        throw ValueError(std::string(what) + ": padding must be >= 0");
    }
}

// y[n,f,ho,wo] = sum_{c,i,j} x[n,c,ho*sh-ph+i, wo*sw-pw+j] * k[f,c,i,j]
void conv_forward_kernel(const double* x, const double* k, double* y, const ConvGeom& g) {
    const std::int64_t xs1 = g.x.h * g.x.w, xs0 = g.x.c * xs1;
    const std::int64_t ks1 = g.kh * g.kw, ks0 = g.c * ks1;
    for (std::int64_t n = 0; n < g.x.n; ++n) {
        for (std::int64_t f = 0; f < g.f; ++f) {
            double* yplane = y + (n * g.f + f) * g.y.h * g.y.w;
            for (std::int64_t ho = 0; ho < g.y.h; ++ho) {
                const std::int64_t hi0 = ho * g.stride.h - g.pad.h;
                for (std::int64_t wo = 0; wo < g.y.w; ++wo) {
                    const std::int64_t wi0 = wo * g.stride.w - g.pad.w;
                    const std::int64_t i_lo = std::max<std::int64_t>(0, -hi0);
                    const std::int64_t i_hi = std::min(g.kh, g.x.h - hi0);
                    const std::int64_t j_lo = std::max<std::int64_t>(0, -wi0);
                    const std::int64_t j_hi = std::min(g.kw, g.x.w - wi0);
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < g.c; ++c) {
                        const double* xc = x + n * xs0 + c * xs1;
                        const double* kc = k + f * ks0 + c * ks1;
                        for (std::int64_t i = i_lo; i < i_hi; ++i) {
                            const double* xr = xc + (hi0 + i) * g.x.w + wi0;
                            const double* kr = kc + i * g.kw;
                            for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                acc += xr[j] * kr[j];
                            }
                        }
                    }
                    yplane[ho * g.y.w + wo] = acc;
                }
            }
        }
    }
}

// dx[n,c,hi,wi] += sum_{f,i,j} y[n,f,ho,wo] * k[f,c,i,j]  (adjoint scatter)
void conv_data_adjoint_kernel(const double* y, const double* k, double* dx, const ConvGeom& g) {
    const std::int64_t xs1 = g.x.h * g.x.w, xs0 = g.x.c * xs1;
    const std::int64_t ks1 = g.kh * g.kw, ks0 = g.c * ks1;
    for (std::int64_t n = 0; n < g.x.n; ++n) {
        for (std::int64_t f = 0; f < g.f; ++f) {
            const double* yf = y + (n * g.f + f) * g.y.h * g.y.w;
            for (std::int64_t ho = 0; ho < g.y.h; ++ho) {
                const std::int64_t hi0 = ho * g.stride.h - g.pad.h;
                for (std::int64_t wo = 0; wo < g.y.w; ++wo) {
                    const std::int64_t wi0 = wo * g.stride.w - g.pad.w;
                    const double gv = yf[ho * g.y.w + wo];
                    if (gv == 0.0) {
                        continue;
                    }
                    const std::int64_t i_lo = std::max<std::int64_t>(0, -hi0);
                    const std::int64_t i_hi = std::min(g.kh, g.x.h - hi0);
                    const std::int64_t j_lo = std::max<std::int64_t>(0, -wi0);
                    const std::int64_t j_hi = std::min(g.kw, g.x.w - wi0);
                    for (std::int64_t c = 0; c < g.c; ++c) {
                        double* xc = dx + n * xs0 + c * xs1;
                        const double* kc = k + f * ks0 + c * ks1;
                        for (std::int64_t i = i_lo; i < i_hi; ++i) {
                            double* xr = xc + (hi0 + i) * g.x.w + wi0;
                            const double* kr = kc + i * g.kw;
                            for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                xr[j] += gv * kr[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

// dk[f,c,i,j] += sum_{n,ho,wo} x[n,c,ho*sh-ph+i, wo*sw-pw+j] * y[n,f,ho,wo]
void conv_weight_adjoint_kernel(const double* x, const double* y, double* dk, const ConvGeom& g) {
    const std::int64_t xs1 = g.x.h * g.x.w, xs0 = g.x.c * xs1;
    const std::int64_t ks1 = g.kh * g.kw, ks0 = g.c * ks1;
    for (std::int64_t n = 0; n < g.x.n; ++n) {
        for (std::int64_t f = 0; f < g.f; ++f) {
            const double* yf = y + (n * g.f + f) * g.y.h * g.y.w;
            for (std::int64_t ho = 0; ho < g.y.h; ++ho) {
                const std::int64_t hi0 = ho * g.stride.h - g.pad.h;
                for (std::int64_t wo = 0; wo < g.y.w; ++wo) {
                    const std::int64_t wi0 = wo * g.stride.w - g.pad.w;
                    const double gv = yf[ho * g.y.w + wo];
                    if (gv == 0.0) {
                        continue;
                    }
                    const std::int64_t i_lo = std::max<std::int64_t>(0, -hi0);
                    const std::int64_t i_hi = std::min(g.kh, g.x.h - hi0);
                    const std::int64_t j_lo = std::max<std::int64_t>(0, -wi0);
                    const std::int64_t j_hi = std::min(g.kw, g.x.w - wi0);
                    for (std::int64_t c = 0; c < g.c; ++c) {
                        const double* xc = x + n * xs0 + c * xs1;
                        double* kc = dk + f * ks0 + c * ks1;
                        for (std::int64_t i = i_lo; i < i_hi; ++i) {
                            const double* xr = xc + (hi0 + i) * g.x.w + wi0;
                            double* kr = kc + i * g.kw;
                            for (std::int64_t j = j_lo; j < j_hi; ++j) {
                                kr[j] += gv * xr[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Hw stride, Hw pad) {
    check_conv_args(stride, pad, "conv2d");
    const Dims4 xd = dims4(x, "conv2d input");
    const Dims4 kd = dims4(kernel, "conv2d kernel");
    if (kd.c != xd.c) {
        throw ShapeError("conv2d: kernel channels " + shape_str(kernel.shape()) +
                         " do not match input " + shape_str(x.shape()));
    }
    if (kd.h > xd.h + 2 * pad.h || kd.w > xd.w + 2 * pad.w) {
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
    }
    const std::int64_t ho = (xd.h + 2 * pad.h - kd.h) / stride.h + 1;
    const std::int64_t wo = (xd.w + 2 * pad.w - kd.w) / stride.w + 1;
    if (bias.defined() && bias.shape() != Shape{kd.n}) {
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + ", expected [" +
                         std::to_string(kd.n) + "]");
    }

    ConvGeom geom{xd, {xd.n, kd.n, ho, wo}, kd.n, xd.c, kd.h, kd.w, stride, pad};
    std::vector<double> out(static_cast<std::size_t>(xd.n * kd.n * ho * wo), 0.0);
    conv_forward_kernel(x.data().data(), kernel.data().data(), out.data(), geom);
    if (bias.defined()) {
        const auto bd = bias.data();
        double* po = out.data();
        for (std::int64_t n = 0; n < xd.n; ++n) {
            for (std::int64_t f = 0; f < kd.n; ++f) {
                const double bv = bd[static_cast<std::size_t>(f)];
                for (std::int64_t i = 0; i < ho * wo; ++i) {
                    *po++ += bv;
                }
            }
        }
    }
    const Hw xhw{xd.h, xd.w};
    const Hw khw{kd.h, kd.w};
    const bool has_bias = bias.defined();
    return make_op("conv2d", {xd.n, kd.n, ho, wo}, std::move(out), {x, kernel, bias},
                   [x, kernel, stride, pad, xhw, khw, has_bias](const Tensor& g)
                       -> std::vector<Tensor> {
                       Tensor gb;
                       if (has_bias) {
                           gb = reduce_sum_axes(g, {0, 2, 3});
                       }
                       return {conv2d_data_adjoint(g, kernel, stride, pad, xhw),
                               conv2d_weight_adjoint(x, g, stride, pad, khw), gb};
                   });
}

Tensor conv2d_data_adjoint(const Tensor& y, const Tensor& kernel, Hw stride, Hw pad, Hw out_hw) {
    check_conv_args(stride, pad, "conv2d_data_adjoint");
    const Dims4 yd = dims4(y, "conv2d_data_adjoint input");
    const Dims4 kd = dims4(kernel, "conv2d_data_adjoint kernel");
    if (kd.n != yd.c) {
        throw ShapeError("conv2d_data_adjoint: kernel " + shape_str(kernel.shape()) +
                         " does not match channels of " + shape_str(y.shape()));
    }
    if (out_hw.h < 1 || out_hw.w < 1) {
        throw ShapeError("conv2d_data_adjoint: non-positive target size");
    }
    ConvGeom geom{{yd.n, kd.c, out_hw.h, out_hw.w}, yd, kd.n, kd.c, kd.h, kd.w, stride, pad};
    std::vector<double> out(static_cast<std::size_t>(yd.n * kd.c * out_hw.h * out_hw.w), 0.0);
    conv_data_adjoint_kernel(y.data().data(), kernel.data().data(), out.data(), geom);
    const Hw khw{kd.h, kd.w};
    return make_op("conv2d_data_adjoint", {yd.n, kd.c, out_hw.h, out_hw.w}, std::move(out),
                   {y, kernel},
                   [y, kernel, stride, pad, khw](const Tensor& g) -> std::vector<Tensor> {
                       return {conv2d(g, kernel, Tensor(), stride, pad),
                               conv2d_weight_adjoint(g, y, stride, pad, khw)};
                   });
}

Tensor conv2d_weight_adjoint(const Tensor& x, const Tensor& y, Hw stride, Hw pad, Hw kernel_hw) {
    check_conv_args(stride, pad, "conv2d_weight_adjoint");
    const Dims4 xd = dims4(x, "conv2d_weight_adjoint data");
    const Dims4 yd = dims4(y, "conv2d_weight_adjoint output");
    if (xd.n != yd.n) {
        throw ShapeError("conv2d_weight_adjoint: batch mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(y.shape()));
    }
    ConvGeom geom{xd, yd, yd.c, xd.c, kernel_hw.h, kernel_hw.w, stride, pad};
    std::vector<double> out(static_cast<std::size_t>(yd.c * xd.c * kernel_hw.h * kernel_hw.w),
                            0.0);
    conv_weight_adjoint_kernel(x.data().data(), y.data().data(), out.data(), geom);
    const Hw xhw{xd.h, xd.w};
    return make_op("conv2d_weight_adjoint", {yd.c, xd.c, kernel_hw.h, kernel_hw.w},
                   std::move(out), {x, y},
                   [x, y, stride, pad, xhw](const Tensor& g) -> std::vector<Tensor> {
                       return {conv2d_data_adjoint(y, g, stride, pad, xhw),
                               conv2d(x, g, Tensor(), stride, pad)};
                   });
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Hw stride,
                         Hw pad, Hw output_padding) {
    if (stride.h < 1 || stride.w < 1) {
        throw ValueError("transposed_conv2d: stride must be >= 1");
    }
    if (output_padding.h < 0 || output_padding.h >= stride.h || output_padding.w < 0 ||
        output_padding.w >= stride.w) {
        throw ValueError("transposed_conv2d: output_padding must be in [0, stride)");
    }
    const Dims4 xd = dims4(x, "transposed_conv2d input");
    const Dims4 kd = dims4(kernel, "transposed_conv2d kernel"); // [Cin, Cout, kh, kw]
    if (kd.n != xd.c) {
        throw ShapeError("transposed_conv2d: kernel " + shape_str(kernel.shape()) +
                         " does not match input channels of " + shape_str(x.shape()));
    }
    const std::int64_t ho = (xd.h - 1) * stride.h + kd.h - 2 * pad.h + output_padding.h;
    const std::int64_t wo = (xd.w - 1) * stride.w + kd.w - 2 * pad.w + output_padding.w;
    if (ho < 1 || wo < 1) {
        throw ShapeError("transposed_conv2d: non-positive output size for input " +
                         shape_str(x.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{kd.c}) {
        throw ShapeError("transposed_conv2d: bias shape " + shape_str(bias.shape()) +
                         ", expected [" + std::to_string(kd.c) + "]");
    }
    Tensor out = conv2d_data_adjoint(x, kernel, stride, pad, {ho, wo});
    if (bias.defined()) {
        out = add(out, expand_axes(bias, out.shape(), {0, 2, 3}));
    }
    return out;
}

// ---- windowing ----------------------------------------------------------------

Tensor crop_window(const Tensor& x, Hw offset, Hw size) {
    const Dims4 xd = dims4(x, "crop_window");
    if (offset.h < 0 || offset.w < 0 || size.h < 1 || size.w < 1 ||
        offset.h + size.h > xd.h || offset.w + size.w > xd.w) {
        throw ShapeError("crop_window: window " + std::to_string(size.h) + "x" +
                         std::to_string(size.w) + " at (" + std::to_string(offset.h) + "," +
                         std::to_string(offset.w) + ") exceeds input " + shape_str(x.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(xd.n * xd.c * size.h * size.w));
    const double* px = x.data().data();
    double* po = out.data();
    for (std::int64_t nc = 0; nc < xd.n * xd.c; ++nc) {
        const double* plane = px + nc * xd.h * xd.w;
        for (std::int64_t i = 0; i < size.h; ++i) {
            const double* row = plane + (offset.h + i) * xd.w + offset.w;
            std::memcpy(po, row, static_cast<std::size_t>(size.w) * sizeof(double));
            po += size.w;
        }
    }
    const Hw full{xd.h, xd.w};
    return make_op("crop_window", {xd.n, xd.c, size.h, size.w}, std::move(out), {x},
                   [offset, full](const Tensor& g) -> std::vector<Tensor> {
                       return {pad_window(g, offset, full)};
                   });
}

Tensor pad_window(const Tensor& x, Hw offset, Hw full) {
    const Dims4 xd = dims4(x, "pad_window");
    if (offset.h < 0 || offset.w < 0 || offset.h + xd.h > full.h || offset.w + xd.w > full.w) {
        throw ShapeError("pad_window: input " + shape_str(x.shape()) + " at (" +
                         std::to_string(offset.h) + "," + std::to_string(offset.w) +
                         ") exceeds target " + std::to_string(full.h) + "x" +
                         std::to_string(full.w));
    }
    std::vector<double> out(static_cast<std::size_t>(xd.n * xd.c * full.h * full.w), 0.0);
    const double* px = x.data().data();
    for (std::int64_t nc = 0; nc < xd.n * xd.c; ++nc) {
        double* plane = out.data() + nc * full.h * full.w;
        for (std::int64_t i = 0; i < xd.h; ++i) {
            double* row = plane + (offset.h + i) * full.w + offset.w;
            std::memcpy(row, px + (nc * xd.h + i) * xd.w,
                        static_cast<std::size_t>(xd.w) * sizeof(double));
        }
    }
    const Hw size{xd.h, xd.w};
    return make_op("pad_window", {xd.n, xd.c, full.h, full.w}, std::move(out), {x},
                   [offset, size](const Tensor& g) -> std::vector<Tensor> {
                       return {crop_window(g, offset, size)};
                   });
}

// ---- resampling -----------------------------------------------------------------

namespace {

Tensor upsample_nearest_adjoint(const Tensor& y, Hw factor);

} // namespace

Tensor upsample_nearest(const Tensor& x, Hw factor) {
    if (factor.h < 1 || factor.w < 1) {
        throw ValueError("upsample_nearest: factor must be >= 1");
    }
    const Dims4 xd = dims4(x, "upsample_nearest");
    const std::int64_t ho = xd.h * factor.h;
    const std::int64_t wo = xd.w * factor.w;
    std::vector<double> out(static_cast<std::size_t>(xd.n * xd.c * ho * wo));
    const double* px = x.data().data();
    double* po = out.data();
    for (std::int64_t nc = 0; nc < xd.n * xd.c; ++nc) {
        const double* plane = px + nc * xd.h * xd.w;
        for (std::int64_t i = 0; i < ho; ++i) {
            const double* row = plane + (i / factor.h) * xd.w;
            for (std::int64_t j = 0; j < wo; ++j) {
                *po++ = row[j / factor.w];
            }
        }
    }
    return make_op("upsample_nearest", {xd.n, xd.c, ho, wo}, std::move(out), {x},
                   [factor](const Tensor& g) -> std::vector<Tensor> {
                       return {upsample_nearest_adjoint(g, factor)};
                   });
}

namespace {

Tensor upsample_nearest_adjoint(const Tensor& y, Hw factor) {
    const Dims4 yd = dims4(y, "upsample_nearest_adjoint");
    if (yd.h % factor.h != 0 || yd.w % factor.w != 0) {
        throw ShapeError("upsample_nearest_adjoint: " + shape_str(y.shape()) +
                         " not divisible by factor");
    }
    const std::int64_t hi = yd.h / factor.h;
    const std::int64_t wi = yd.w / factor.w;
    std::vector<double> out(static_cast<std::size_t>(yd.n * yd.c * hi * wi), 0.0);
    const double* py = y.data().data();
    for (std::int64_t nc = 0; nc < yd.n * yd.c; ++nc) {
        double* plane = out.data() + nc * hi * wi;
        const double* src = py + nc * yd.h * yd.w;
        for (std::int64_t i = 0; i < yd.h; ++i) {
            double* row = plane + (i / factor.h) * wi;
            for (std::int64_t j = 0; j < yd.w; ++j) {
                row[j / factor.w] += src[i * yd.w + j];
            }
        }
    }
    return make_op("upsample_nearest_adjoint", {yd.n, yd.c, hi, wi}, std::move(out), {y},
                   [factor](const Tensor& g) -> std::vector<Tensor> {
                       return {upsample_nearest(g, factor)};
                   });
}

// Per-output-sample taps for 1-D cubic resampling at half-pixel positions
// with clamp-to-edge.
struct CubicTaps {
    std::vector<std::array<std::int64_t, 4>> idx;
    std::vector<std::array<double, 4>> w;
};

CubicTaps cubic_taps(std::int64_t in_size, std::int64_t factor) {
    CubicTaps taps;
    const std::int64_t out_size = in_size * factor;
    taps.idx.resize(static_cast<std::size_t>(out_size));
    taps.w.resize(static_cast<std::size_t>(out_size));
    for (std::int64_t j = 0; j < out_size; ++j) {
        const double pos =
            (static_cast<double>(j) + 0.5) / static_cast<double>(factor) - 0.5;
        const double base = std::floor(pos);
        const double t = pos - base;
        const auto w = bicubic_weights(t);
        for (int k = 0; k < 4; ++k) {
            const std::int64_t raw = static_cast<std::int64_t>(base) - 1 + k;
            taps.idx[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
                std::clamp<std::int64_t>(raw, 0, in_size - 1);
            taps.w[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
                w[static_cast<std::size_t>(k)];
        }
    }
    return taps;
}

Tensor upsample_bicubic_adjoint(const Tensor& y, Hw factor);

} // namespace

std::array<double, 4> bicubic_weights(double t) {
    constexpr double a = -0.5;
    const double t1 = t + 1.0; // distance of the left outer sample
    const double t2 = 1.0 - t;
    const double t3 = 2.0 - t;
    return {
        a * t1 * t1 * t1 - 5.0 * a * t1 * t1 + 8.0 * a * t1 - 4.0 * a,
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0,
        (a + 2.0) * t2 * t2 * t2 - (a + 3.0) * t2 * t2 + 1.0,
        a * t3 * t3 * t3 - 5.0 * a * t3 * t3 + 8.0 * a * t3 - 4.0 * a,
    };
}

Tensor upsample_bicubic(const Tensor& x, Hw factor) {
    if (factor.h < 1 || factor.w < 1) {
        throw ValueError("upsample_bicubic: factor must be >= 1");
    }
    const Dims4 xd = dims4(x, "upsample_bicubic");
    const auto th = cubic_taps(xd.h, factor.h);
    const auto tw = cubic_taps(xd.w, factor.w);
    const std::int64_t ho = xd.h * factor.h;
    const std::int64_t wo = xd.w * factor.w;
    // Separable: resample W first, then H.
    std::vector<double> mid(static_cast<std::size_t>(xd.h * wo));
    std::vector<double> out(static_cast<std::size_t>(xd.n * xd.c * ho * wo));
    const double* px = x.data().data();
    for (std::int64_t nc = 0; nc < xd.n * xd.c; ++nc) {
        const double* plane = px + nc * xd.h * xd.w;
        for (std::int64_t i = 0; i < xd.h; ++i) {
            const double* row = plane + i * xd.w;
            double* mrow = mid.data() + i * wo;
            for (std::int64_t j = 0; j < wo; ++j) {
                const auto& id = tw.idx[static_cast<std::size_t>(j)];
                const auto& wt = tw.w[static_cast<std::size_t>(j)];
                mrow[j] = wt[0] * row[id[0]] + wt[1] * row[id[1]] + wt[2] * row[id[2]] +
                          wt[3] * row[id[3]];
            }
        }
        double* oplane = out.data() + nc * ho * wo;
        for (std::int64_t i = 0; i < ho; ++i) {
            const auto& id = th.idx[static_cast<std::size_t>(i)];
            const auto& wt = th.w[static_cast<std::size_t>(i)];
            const double* r0 = mid.data() + id[0] * wo;
            const double* r1 = mid.data() + id[1] * wo;
            const double* r2 = mid.data() + id[2] * wo;
            const double* r3 = mid.data() + id[3] * wo;
            double* orow = oplane + i * wo;
            for (std::int64_t j = 0; j < wo; ++j) {
                orow[j] = wt[0] * r0[j] + wt[1] * r1[j] + wt[2] * r2[j] + wt[3] * r3[j];
            }
        }
    }
    return make_op("upsample_bicubic", {xd.n, xd.c, ho, wo}, std::move(out), {x},
                   [factor](const Tensor& g) -> std::vector<Tensor> {
                       return {upsample_bicubic_adjoint(g, factor)};
                   });
}

namespace {

Tensor upsample_bicubic_adjoint(const Tensor& y, Hw factor) {
    const Dims4 yd = dims4(y, "upsample_bicubic_adjoint");
    if (yd.h % factor.h != 0 || yd.w % factor.w != 0) {
        throw ShapeError("upsample_bicubic_adjoint: " + shape_str(y.shape()) +
                         " not divisible by factor");
    }
    const std::int64_t hi = yd.h / factor.h;
    const std::int64_t wi = yd.w / factor.w;
    const auto th = cubic_taps(hi, factor.h);
    const auto tw = cubic_taps(wi, factor.w);
    std::vector<double> mid(static_cast<std::size_t>(hi * yd.w));
    std::vector<double> out(static_cast<std::size_t>(yd.n * yd.c * hi * wi), 0.0);
    const double* py = y.data().data();
    for (std::int64_t nc = 0; nc < yd.n * yd.c; ++nc) {
        std::fill(mid.begin(), mid.end(), 0.0);
        const double* plane = py + nc * yd.h * yd.w;
        for (std::int64_t i = 0; i < yd.h; ++i) {
            const auto& id = th.idx[static_cast<std::size_t>(i)];
            const auto& wt = th.w[static_cast<std::size_t>(i)];
            const double* row = plane + i * yd.w;
            for (int k = 0; k < 4; ++k) {
                double* mrow = mid.data() + id[static_cast<std::size_t>(k)] * yd.w;
                const double wv = wt[static_cast<std::size_t>(k)];
                for (std::int64_t j = 0; j < yd.w; ++j) {
                    mrow[j] += wv * row[j];
                }
            }
        }
        double* oplane = out.data() + nc * hi * wi;
        for (std::int64_t i = 0; i < hi; ++i) {
            const double* mrow = mid.data() + i * yd.w;
            double* orow = oplane + i * wi;
            for (std::int64_t j = 0; j < yd.w; ++j) {
                const auto& id = tw.idx[static_cast<std::size_t>(j)];
                const auto& wt = tw.w[static_cast<std::size_t>(j)];
                for (int k = 0; k < 4; ++k) {
                    orow[id[static_cast<std::size_t>(k)]] +=
                        wt[static_cast<std::size_t>(k)] * mrow[j];
                }
            }
        }
    }
    return make_op("upsample_bicubic_adjoint", {yd.n, yd.c, hi, wi}, std::move(out), {y},
                   [factor](const Tensor& g) -> std::vector<Tensor> {
                       return {upsample_bicubic(g, factor)};
                   });
}

Tensor embedding_scatter(const Tensor& g, const std::vector<std::int64_t>& labels, Shape table_shape) {
    std::vector<double> out(static_cast<std::size_t>(numel(table_shape)), 0.0);
    const std::int64_t d = table_shape[1];
    const auto gd = g.data();
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const double* src = gd.data() + static_cast<std::int64_t>(b) * d;
        double* dst = out.data() + labels[b] * d;
        for (std::int64_t j = 0; j < d; ++j) {
            dst[j] += src[j];
        }
    }
    return make_op("embedding_scatter", std::move(table_shape), std::move(out), {g},
                   [labels](const Tensor& gg) -> std::vector<Tensor> {
                       return {embedding_gather(gg, labels)};
                   });
}

} // namespace

Tensor embedding_gather(const Tensor& table, const std::vector<std::int64_t>& labels) {
    if (table.rank() != 2) {
        throw ShapeError("embedding_gather: table must be rank 2, got " +
                         shape_str(table.shape()));
    }
    const std::int64_t k = table.shape()[0];
    const std::int64_t d = table.shape()[1];
    for (const auto l : labels) {
        if (l < 0 || l >= k) {
            throw ValueError("embedding_gather: label " + std::to_string(l) +
                             " out of range [0, " + std::to_string(k) + ")");
        }
    }
    const std::int64_t b = static_cast<std::int64_t>(labels.size());
    if (b == 0) {
        throw ValueError("embedding_gather: empty label list");
    }
    std::vector<double> out(static_cast<std::size_t>(b * d));
    const auto td = table.data();
    for (std::int64_t i = 0; i < b; ++i) {
        std::memcpy(out.data() + i * d, td.data() + labels[static_cast<std::size_t>(i)] * d,
                    static_cast<std::size_t>(d) * sizeof(double));
    }
    Shape table_shape = table.shape();
    return make_op("embedding_gather", {b, d}, std::move(out), {table},
                   [labels, table_shape](const Tensor& g) -> std::vector<Tensor> {
                       return {embedding_scatter(g, labels, table_shape)};
                   });
}

} // namespace ops
} // namespace waveforge
