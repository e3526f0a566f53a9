#pragma once

// Central finite-difference audit of reverse-mode gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gaitcast/model.hpp"
#include "gaitcast/tensor.hpp"

namespace gaitcast::gradcheck {

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// entries whose true gradient is ~0 from reporting pure rounding noise as a
// large relative error.
inline constexpr double kRelativeFloor = 1e-6;

double relative_error(double analytic, double numeric, double floor = kRelativeFloor);

struct Report {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t entries = 0;
};

struct Leaf {
    std::string name;
    ad::Tensor tensor;
};

// `loss` must rebuild the graph from the current leaf values on every call and
// return a one-element tensor. Every entry of every leaf is perturbed by +-step.
Report check(const std::vector<Leaf>& leaves, const std::function<ad::Tensor()>& loss, double step = 1e-5);

// Audits L_c + L_f of a freshly initialized model (dropout off) on a random
// input window, forecast target and label derived from `seed`.
Report check_model(const model::ModelConfig& config, std::uint64_t seed, double step = 1e-5);

}  // namespace gaitcast::gradcheck
