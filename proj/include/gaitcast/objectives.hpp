#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gaitcast/tensor.hpp"

namespace gaitcast::loss {

using ad::Tensor;

// Per-class multipliers for the cross-entropy term.
using ClassWeights = std::vector<double>;

// Mean absolute error over every entry of an (M x N) forecast.
Tensor layerwise_l1(const Tensor& pred, const Tensor& target);

struct ForecastLoss {
    Tensor value;                    // mean of the per-layer losses
    std::vector<Tensor> per_layer;
};

ForecastLoss forecast_loss(const std::vector<Tensor>& per_layer_preds, const Tensor& target);

// -w[label] * log softmax(logits)[label]; empty weights means all ones.
Tensor cross_entropy(const Tensor& logits, int label, std::span<const double> weights = {});

enum class Mode { Pretrain, FineBoth, FineClass, Scratch };

std::string_view to_string(Mode mode);

struct LossBreakdown {
    std::vector<double> per_layer;   // empty in FineClass mode
    double forecast = 0.0;
    double classification = 0.0;
    double total = 0.0;
    Tensor total_tensor;             // differentiable total
};

// Pretrain, Scratch and FineBoth sum both terms; FineClass uses the
// classification term alone and never touches the forecast branch.
LossBreakdown combined_loss(Mode mode, const Tensor& classification, const ForecastLoss* forecast);

// w_c = total / (observed_classes * count_c) for observed classes, 0 otherwise,
// so that sum_c count_c * w_c == total.
ClassWeights inverse_frequency_weights(std::span<const int> labels, int classes);

}  // namespace gaitcast::loss
