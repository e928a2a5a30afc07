#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "waveforge/rng.hpp"
#include "waveforge/tensor.hpp"

namespace waveforge::testutil {

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false,
                            double scale = 1.0) {
    std::vector<double> data(static_cast<std::size_t>(numel(shape)));
    for (auto& v : data) {
        v = scale * rng.normal();
    }
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Central finite differences of a scalar-valued closure w.r.t. one leaf
// tensor. The closure must be deterministic and re-evaluate the expression
// from the current parameter values.
inline std::vector<double> finite_diff(const std::function<double()>& f, Tensor& param,
                                       double h = 1e-4) {
    auto data = param.mutable_data();
    std::vector<double> grad(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double saved = data[i];
        data[i] = saved + h;
        const double up = f();
        data[i] = saved - h;
        const double down = f();
        data[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

} // namespace waveforge::testutil
