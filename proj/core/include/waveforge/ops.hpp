#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "waveforge/tensor.hpp"

namespace waveforge {

// Pair of per-axis values for the two spatial dimensions (H, W).
struct Hw {
    std::int64_t h = 1;
    std::int64_t w = 1;
};

namespace ops {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);
Tensor pow_scalar(const Tensor& a, double p);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);

// ---- reductions / broadcast ------------------------------------------------

Tensor reduce_sum(const Tensor& a);  // -> shape {1}
Tensor reduce_mean(const Tensor& a); // -> shape {1}

// Sum/mean over the given axes; reduced axes are removed from the shape.
Tensor reduce_sum_axes(const Tensor& a, std::vector<std::size_t> axes);
Tensor reduce_mean_axes(const Tensor& a, std::vector<std::size_t> axes);

// Inverse of reduce_*_axes: broadcast `a` (whose shape equals `full` minus
// `axes`) back to `full`.
Tensor expand_axes(const Tensor& a, Shape full, std::vector<std::size_t> axes);

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b); // [m,k] x [k,n] -> [m,n]
Tensor transpose2d(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// ---- convolution family ------------------------------------------------------
// Cross-correlation convention (no kernel flip). x is NCHW, kernel is
// [F, C, kh, kw]. The three maps below are mutual adjoints and each one's
// gradient rule is expressed through the other two, so the whole family
// supports repeated differentiation.

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Hw stride, Hw pad);

// Adjoint of conv2d in its data argument: spreads y back onto an input of
// spatial size `out_hw`. Also the forward map of the transposed convolution.
Tensor conv2d_data_adjoint(const Tensor& y, const Tensor& kernel, Hw stride, Hw pad, Hw out_hw);

// Adjoint of conv2d in its kernel argument.
Tensor conv2d_weight_adjoint(const Tensor& x, const Tensor& y, Hw stride, Hw pad, Hw kernel_hw);

// Transposed convolution. x is [N, Cin, H, W], kernel is [Cin, Cout, kh, kw].
// Output spatial size: (in - 1) * stride + k - 2 * pad + output_padding.
// Equivalent to inserting stride-1 zeros between neighbouring input values
// and convolving with stride 1; as a linear map it is the adjoint of the
// conv2d with the same kernel, stride and padding.
Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Hw stride,
                         Hw pad, Hw output_padding = {0, 0});

// ---- windowing ---------------------------------------------------------------

// Copy the window of spatial size `size` starting at `offset` (last two axes).
Tensor crop_window(const Tensor& x, Hw offset, Hw size);

// Embed x into a zero field of spatial size `full` at `offset`; adjoint of
// crop_window.
Tensor pad_window(const Tensor& x, Hw offset, Hw full);

// ---- resampling ---------------------------------------------------------------

// Integer-factor upsampling of the two trailing axes. Nearest repeats values;
// bicubic uses the Catmull-Rom kernel (a = -0.5) at half-pixel sample
// positions with clamp-to-edge handling.
Tensor upsample_nearest(const Tensor& x, Hw factor);
Tensor upsample_bicubic(const Tensor& x, Hw factor);

// ---- indexing ------------------------------------------------------------------

// Row lookup: table is [K, D], labels index its rows, result is [B, D].
// Gradient scatters back into the table.
Tensor embedding_gather(const Tensor& table, const std::vector<std::int64_t>& labels);

// ---- helpers -------------------------------------------------------------------

// Weights of the Catmull-Rom cubic kernel for a phase t in [0,1), applied to
// samples at offsets {-1, 0, 1, 2}.
std::array<double, 4> bicubic_weights(double t);

} // namespace ops
} // namespace waveforge
