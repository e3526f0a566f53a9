#include "gaitcast/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gaitcast/error.hpp"

namespace gaitcast::loss {

using namespace gaitcast::ad;

Tensor layerwise_l1(const Tensor& pred, const Tensor& target)
{
    if (pred.shape() != target.shape()) {
        throw ShapeError("layerwise_l1: shape mismatch between " + shape_string(pred.shape()) + " and " +
                         shape_string(target.shape()));
    }
    return mean(ad::abs(sub(pred, target)));
}

ForecastLoss forecast_loss(const std::vector<Tensor>& per_layer_preds, const Tensor& target)
{
    if (per_layer_preds.empty()) {
        throw Error("loss", "forecast_loss: no decoder layers");
    }
    ForecastLoss out;
    Tensor total;
    for (const auto& pred : per_layer_preds) {
        out.per_layer.push_back(layerwise_l1(pred, target));
        total = total.defined() ? add(total, out.per_layer.back()) : out.per_layer.back();
    }
    out.value = per_layer_preds.size() == 1 ? total
                                            : scale(total, 1.0 / static_cast<double>(per_layer_preds.size()));
    return out;
}

Tensor cross_entropy(const Tensor& logits, int label, std::span<const double> weights)
{
    const std::size_t classes = logits.cols();
    if (logits.numel() != classes) {
        throw ShapeError("cross_entropy: logits must be a single row, got " + shape_string(logits.shape()));
    }
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
        throw Error("loss", "cross_entropy: label " + std::to_string(label) + " outside [0," +
                                std::to_string(classes) + ")");
    }
    double w = 1.0;
    if (!weights.empty()) {
        if (weights.size() != classes) {
            throw ShapeError("cross_entropy: " + std::to_string(weights.size()) + " class weights for " +
                             std::to_string(classes) + " classes");
        }
        w = weights[static_cast<std::size_t>(label)];
    }
    const auto l = static_cast<std::size_t>(label);
    const Tensor picked = slice(log_softmax_lastdim(logits), logits.rank() - 1, l, l + 1);
    return scale(sum(picked), -w);
}

std::string_view to_string(Mode mode)
{
    switch (mode) {
    case Mode::Pretrain: return "pretrain";
    case Mode::FineBoth: return "fine_both";
    case Mode::FineClass: return "fine_class";
    case Mode::Scratch: return "scratch";
    }
    return "unknown";
}

LossBreakdown combined_loss(Mode mode, const Tensor& classification, const ForecastLoss* forecast)
{
    if (!classification.defined()) {
        throw Error("loss", "combined_loss: " + std::string(to_string(mode)) + " needs a classification term");
    }
    LossBreakdown out;
    out.classification = classification.item();
    if (mode == Mode::FineClass) {
        out.total_tensor = classification;
        out.total = out.classification;
        return out;
    }
    if (forecast == nullptr || !forecast->value.defined()) {
        throw Error("loss", "combined_loss: " + std::string(to_string(mode)) + " needs a forecast term");
    }
    for (const auto& l : forecast->per_layer) {
        out.per_layer.push_back(l.item());
    }
    out.forecast = forecast->value.item();
    out.total_tensor = add(classification, forecast->value);
    out.total = out.total_tensor.item();
    return out;
}

ClassWeights inverse_frequency_weights(std::span<const int> labels, int classes)
{
    if (labels.empty()) {
        throw Error("loss", "inverse_frequency_weights: no labels");
    }
    if (classes < 1) {
        throw Error("loss", "inverse_frequency_weights: class count must be positive");
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (int l : labels) {
        if (l < 0 || l >= classes) {
            throw Error("loss", "inverse_frequency_weights: label " + std::to_string(l) + " outside [0," +
                                    std::to_string(classes) + ")");
        }
        ++counts[static_cast<std::size_t>(l)];
    }
    const auto observed = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    const auto total = static_cast<double>(labels.size());
    ClassWeights w(counts.size(), 0.0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > 0) {
            w[c] = total / (observed * static_cast<double>(counts[c]));
        }
    }
    return w;
}

}  // namespace gaitcast::loss
