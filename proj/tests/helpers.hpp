#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "gaitcast/tensor.hpp"

namespace testutil {

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = u(rng);
    }
    return v;
}

// Random values kept at least `gap` away from zero, for kinked primitives.
inline std::vector<double> away_from_zero(std::size_t n, std::uint64_t seed, double gap = 0.1)
{
    auto v = random_values(n, seed);
    for (auto& x : v) {
        x = std::copysign(gap + std::abs(x), x);
    }
    return v;
}

inline gaitcast::ad::Tensor random_tensor(gaitcast::ad::Shape shape, std::uint64_t seed, bool requires_grad = true)
{
    const auto n = gaitcast::ad::shape_numel(shape);
    return gaitcast::ad::Tensor::from(std::move(shape), random_values(n, seed), requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace testutil
