#include "gaitcast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gaitcast/error.hpp"
#include "gaitcast/objectives.hpp"

namespace gaitcast::gradcheck {

double relative_error(double analytic, double numeric, double floor)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

Report check(const std::vector<Leaf>& leaves, const std::function<ad::Tensor()>& loss, double step)
{
    if (!(step > 0.0)) {
        throw ConfigError("gradcheck: step must be positive");
    }
    std::vector<std::vector<double>> analytic;
    {
        ad::Tape tape;
        ad::TapeScope scope(tape);
        for (const auto& leaf : leaves) {
            ad::Tensor t = leaf.tensor;
            t.set_requires_grad(true);
            t.zero_grad();
        }
        tape.backward(loss());
        for (const auto& leaf : leaves) {
            analytic.push_back(leaf.tensor.grad());
        }
    }

    Report report;
    for (std::size_t p = 0; p < leaves.size(); ++p) {
        ad::Tensor t = leaves[p].tensor;
        auto values = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = loss().item();
            values[i] = saved - step;
            const double down = loss().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(analytic[p][i], numeric);
            ++report.entries;
            if (err > report.max_relative_error || report.worst_parameter.empty()) {
                report.max_relative_error = err;
                report.worst_parameter = leaves[p].name;
                report.worst_index = i;
                report.worst_analytic = analytic[p][i];
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

Report check_model(const model::ModelConfig& config, std::uint64_t seed, double step)
{
    auto cfg = config;
    cfg.dropout = 0.0;
    cfg.validate();
    const auto params = model::init_params(cfg, seed);

    std::mt19937_64 rng(seed ^ 0x5bd1e995u);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(cfg.input_frames * cfg.pose_dim);
    std::vector<double> y(cfg.forecast_frames * cfg.pose_dim);
    for (auto& v : x) {
        v = normal(rng);
    }
    for (auto& v : y) {
        v = normal(rng);
    }
    const int label = static_cast<int>(rng() % cfg.classes);
    const auto input = ad::Tensor::from({cfg.input_frames, cfg.pose_dim}, x);
    const auto target = ad::Tensor::from({cfg.forecast_frames, cfg.pose_dim}, y);

    std::vector<Leaf> leaves;
    for (const auto& nt : params.named()) {
        leaves.push_back({nt.name, nt.tensor});
    }
    const auto loss = [&] {
        const auto out = model::forward(input, cfg, params);
        const auto fl = loss::forecast_loss(out.per_layer_preds, target);
        const auto ce = loss::cross_entropy(out.logits, label);
        return loss::combined_loss(loss::Mode::Pretrain, ce, &fl).total_tensor;
    };
    return check(leaves, loss, step);
}

}  // namespace gaitcast::gradcheck
