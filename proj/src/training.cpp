#include "gaitcast/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "gaitcast/error.hpp"

namespace gaitcast::train {

namespace {

using loss::Mode;
using model::ModelConfig;
using model::ModelParams;

struct Stage {
    Mode mode;
    int epochs;
};

void check_clips(std::span<const data::LabeledClip> clips, const ModelConfig& config)
{
    if (clips.empty()) {
        throw TrainingError("training: empty dataset");
    }
    const std::size_t frames = config.input_frames + config.forecast_frames;
    for (const auto& c : clips) {
        if (c.poses.dims() != config.pose_dim) {
            throw DataError("training: clip from " + c.subject_id + " has pose dimension " +
                            std::to_string(c.poses.dims()) + ", model expects " + std::to_string(config.pose_dim));
        }
        if (c.poses.frames() != frames) {
            throw DataError("training: clip from " + c.subject_id + " has " + std::to_string(c.poses.frames()) +
                            " frames, model expects " + std::to_string(frames) + " (input + forecast)");
        }
        if (c.label < 0 || static_cast<std::size_t>(c.label) >= config.classes) {
            throw DataError("training: label " + std::to_string(c.label) + " outside [0," +
                            std::to_string(config.classes) + ")");
        }
    }
}

Checkpoint run_stages(ModelConfig config, ModelParams params, std::span<const data::LabeledClip> clips,
                      const std::vector<Stage>& stages, const loss::ClassWeights& weights,
                      const TrainConfig& tc, const EpochCallback& on_epoch)
{
    check_clips(clips, config);
    const std::size_t t = config.input_frames;

    // Inputs and targets do not depend on the epoch.
    std::vector<ad::Tensor> inputs, targets;
    inputs.reserve(clips.size());
    targets.reserve(clips.size());
    for (const auto& c : clips) {
        auto [in, target] = data::split_input_target(c.poses, t);
        inputs.push_back(pose_tensor(in));
        targets.push_back(pose_tensor(target));
    }

    std::mt19937_64 order_rng(tc.seed);
    std::mt19937_64 dropout_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamW optimizer(tc.optimizer, tc.learning_rate);
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(tc.batch_size);

    Checkpoint ckpt;
    int epoch = 0;
    for (const auto& stage : stages) {
        const bool with_forecast = stage.mode != Mode::FineClass;
        const auto update = trainable(params, stage.mode, tc.class_stage_trains_encoder);
        for (int e = 0; e < stage.epochs; ++e) {
            const auto started = std::chrono::steady_clock::now();
            std::shuffle(order.begin(), order.end(), order_rng);
            double sum_c = 0.0, sum_f = 0.0, sum_total = 0.0;
            for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
                const std::size_t b1 = std::min(order.size(), b0 + batch);
                const double inv_batch = 1.0 / static_cast<double>(b1 - b0);
                params.zero_grad();
                for (std::size_t k = b0; k < b1; ++k) {
                    const std::size_t i = order[k];
                    ad::Tape tape;
                    ad::TapeScope scope(tape);
                    model::ForwardOptions opts;
                    opts.training = true;
                    opts.rng = &dropout_rng;
                    opts.with_forecast = with_forecast;
                    const auto out = model::forward(inputs[i], config, params, opts);
                    const auto ce = loss::cross_entropy(out.logits, clips[i].label, weights);
                    std::optional<loss::ForecastLoss> fl;
                    if (with_forecast) {
                        fl = loss::forecast_loss(out.per_layer_preds, targets[i]);
                    }
                    const auto breakdown = loss::combined_loss(stage.mode, ce, fl ? &*fl : nullptr);
                    if (!std::isfinite(breakdown.total)) {
                        throw TrainingError("training: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                            " on clip from " + clips[i].subject_id);
                    }
                    tape.backward(ad::scale(breakdown.total_tensor, inv_batch));
                    sum_c += breakdown.classification;
                    sum_f += breakdown.forecast;
                    sum_total += breakdown.total;
                }
                try {
                    optimizer.step(update);
                } catch (const TrainingError& err) {
                    throw TrainingError("epoch " + std::to_string(epoch + 1) + " aborted: " + err.what());
                }
            }
            ++epoch;
            const double n = static_cast<double>(clips.size());
            EpochRecord rec;
            rec.epoch = epoch;
            rec.stage = std::string(loss::to_string(stage.mode));
            rec.classification = sum_c / n;
            if (with_forecast) {
                rec.forecast = sum_f / n;
            }
            rec.total = sum_total / n;
            ckpt.history.push_back(rec);
            if (on_epoch) {
                const std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
                on_epoch(rec, took.count());
            }
        }
    }
    params.zero_grad();
    ckpt.config = config;
    ckpt.params = std::move(params);
    ckpt.epoch = epoch;
    return ckpt;
}

std::vector<int> labels_of(std::span<const data::LabeledClip> clips)
{
    std::vector<int> labels;
    labels.reserve(clips.size());
    for (const auto& c : clips) {
        labels.push_back(c.label);
    }
    return labels;
}

}  // namespace

std::string_view to_string(Strategy strategy)
{
    switch (strategy) {
    case Strategy::Pretrain: return "pretrain";
    case Strategy::Scratch: return "scratch";
    case Strategy::FineClass: return "class";
    case Strategy::FineBoth: return "both";
    case Strategy::FineBothThenClass: return "both-then-class";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view text)
{
    if (text == "pretrain") return Strategy::Pretrain;
    if (text == "scratch") return Strategy::Scratch;
    if (text == "class" || text == "fine_class") return Strategy::FineClass;
    if (text == "both" || text == "fine_both") return Strategy::FineBoth;
    if (text == "both-then-class" || text == "fine_both_then_class") return Strategy::FineBothThenClass;
    throw ConfigError("unknown strategy '" + std::string(text) +
                      "' (expected pretrain, scratch, class, both or both-then-class)");
}

void TrainConfig::validate() const
{
    std::vector<std::string> problems;
    if (epochs < 1) problems.push_back("epochs must be at least 1");
    if (!(learning_rate > 0.0)) problems.push_back("learning_rate must be positive");
    if (batch_size < 1) problems.push_back("batch_size must be at least 1");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) problems.push_back("beta1 must lie in [0,1)");
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) problems.push_back("beta2 must lie in [0,1)");
    if (!(optimizer.epsilon > 0.0)) problems.push_back("epsilon must be positive");
    if (!(optimizer.weight_decay >= 0.0)) problems.push_back("weight_decay must be non-negative");
    if (strategy == Strategy::FineBothThenClass) {
        if (stage_split[0] < 1 || stage_split[1] < 1) {
            problems.push_back("stage epochs must both be positive");
        } else if (stage_split[0] + stage_split[1] != epochs) {
            problems.push_back("stage epochs " + std::to_string(stage_split[0]) + "+" +
                               std::to_string(stage_split[1]) + " must sum to epochs " + std::to_string(epochs));
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid training config:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ConfigError(msg);
    }
}

TrainConfig scratch_config()
{
    TrainConfig tc;
    tc.strategy = Strategy::Scratch;
    tc.epochs = kScratchEpochs;
    return tc;
}

// ---------------------------------------------------------------- optimizer

AdamW::AdamW(AdamWSettings settings, double learning_rate) : settings_(settings), learning_rate_(learning_rate) {}

void AdamW::step(std::span<const model::NamedTensor> params)
{
    for (const auto& nt : params) {
        if (!nt.tensor.has_grad()) {
            continue;
        }
        const auto& g = nt.tensor.storage()->grad;
        for (double v : g) {
            if (!std::isfinite(v)) {
                throw TrainingError("non-finite gradient in parameter '" + nt.name + "'");
            }
        }
    }
    const auto& s = settings_;
    for (const auto& nt : params) {
        auto& state = state_[nt.name];
        auto& storage = *nt.tensor.storage();
        const std::size_t n = storage.value.size();
        if (state.first.empty()) {
            state.first.assign(n, 0.0);
            state.second.assign(n, 0.0);
        }
        ++state.steps;
        const double bias1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.steps));
        const double bias2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.steps));
        const bool has_grad = !storage.grad.empty();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = has_grad ? storage.grad[i] : 0.0;
            double& m = state.first[i];
            double& v = state.second[i];
            m = s.beta1 * m + (1.0 - s.beta1) * g;
            v = s.beta2 * v + (1.0 - s.beta2) * g * g;
            double& p = storage.value[i];
            p -= learning_rate_ * s.weight_decay * p;
            p -= learning_rate_ * (m / bias1) / (std::sqrt(v / bias2) + s.epsilon);
        }
    }
}

long AdamW::steps(const std::string& name) const
{
    const auto it = state_.find(name);
    return it == state_.end() ? 0 : it->second.steps;
}

// ---------------------------------------------------------------- loops

std::string format_log_line(const EpochRecord& record, double seconds)
{
    char buf[256];
    char forecast[40] = "-";
    if (record.forecast) {
        std::snprintf(forecast, sizeof forecast, "%.10g", *record.forecast);
    }
    std::snprintf(buf, sizeof buf, "%d\t%s\t%.10g\t%s\t%.10g\t%.3f", record.epoch, record.stage.c_str(),
                  record.classification, forecast, record.total, seconds);
    return buf;
}

std::vector<model::NamedTensor> trainable(const ModelParams& params, Mode mode, bool class_stage_trains_encoder)
{
    auto all = params.named();
    if (mode != Mode::FineClass) {
        return all;
    }
    std::vector<model::NamedTensor> out;
    for (auto& nt : all) {
        const bool encoder_side = nt.branch == model::Branch::Embedding || nt.branch == model::Branch::Encoder;
        if (nt.branch == model::Branch::Classifier || (class_stage_trains_encoder && encoder_side)) {
            out.push_back(std::move(nt));
        }
    }
    return out;
}

Checkpoint pretrain(std::span<const data::LabeledClip> clips, const ModelConfig& config,
                    const TrainConfig& train_config, const EpochCallback& on_epoch)
{
    train_config.validate();
    if (train_config.strategy != Strategy::Pretrain) {
        throw ConfigError("pretrain: strategy must be pretrain, got " + std::string(to_string(train_config.strategy)));
    }
    if (clips.empty()) {
        throw TrainingError("pretrain: empty dataset");
    }
    auto params = model::init_params(config, train_config.seed);
    return run_stages(config, std::move(params), clips, {{Mode::Pretrain, train_config.epochs}}, {}, train_config,
                      on_epoch);
}

Checkpoint finetune(const Checkpoint& init, std::span<const data::LabeledClip> clips, int classes,
                    const TrainConfig& train_config, const EpochCallback& on_epoch)
{
    train_config.validate();
    if (clips.empty()) {
        throw TrainingError("finetune: empty dataset");
    }
    if (clips.front().poses.dims() != init.config.pose_dim) {
        throw DataError("finetune: pose dimension " + std::to_string(clips.front().poses.dims()) +
                        " cannot be transferred from a checkpoint with pose dimension " +
                        std::to_string(init.config.pose_dim));
    }
    if (classes < 2) {
        throw ConfigError("finetune: need at least 2 classes");
    }
    std::vector<Stage> stages;
    switch (train_config.strategy) {
    case Strategy::FineClass: stages = {{Mode::FineClass, train_config.epochs}}; break;
    case Strategy::FineBoth: stages = {{Mode::FineBoth, train_config.epochs}}; break;
    case Strategy::FineBothThenClass:
        stages = {{Mode::FineBoth, train_config.stage_split[0]}, {Mode::FineClass, train_config.stage_split[1]}};
        break;
    default:
        throw ConfigError("finetune: strategy must be class, both or both-then-class, got " +
                          std::string(to_string(train_config.strategy)));
    }

    ModelConfig config = init.config;
    ModelParams params = init.params.clone();
    if (static_cast<std::size_t>(classes) != config.classes) {
        config.classes = static_cast<std::size_t>(classes);
        params.classifier = model::init_classifier(config.d_model, config.classes, train_config.seed + 1);
    }
    const auto labels = labels_of(clips);
    const auto weights = loss::inverse_frequency_weights(labels, classes);
    return run_stages(config, std::move(params), clips, stages, weights, train_config, on_epoch);
}

Checkpoint train_scratch(std::span<const data::LabeledClip> clips, const ModelConfig& config,
                         const TrainConfig& train_config, const EpochCallback& on_epoch)
{
    train_config.validate();
    if (train_config.strategy != Strategy::Scratch) {
        throw ConfigError("train_scratch: strategy must be scratch, got " +
                          std::string(to_string(train_config.strategy)));
    }
    if (clips.empty()) {
        throw TrainingError("train_scratch: empty dataset");
    }
    auto params = model::init_params(config, train_config.seed);
    const auto labels = labels_of(clips);
    const auto weights = loss::inverse_frequency_weights(labels, static_cast<int>(config.classes));
    return run_stages(config, std::move(params), clips, {{Mode::Scratch, train_config.epochs}}, weights,
                      train_config, on_epoch);
}

ad::Tensor pose_tensor(const data::PoseSequence& seq)
{
    return ad::Tensor::from({seq.frames(), seq.dims()}, seq.values);
}

std::vector<double> predict_logits(const ModelConfig& config, const ModelParams& params,
                                   const data::PoseSequence& clip)
{
    if (clip.frames() < config.input_frames) {
        throw DataError("predict: clip has " + std::to_string(clip.frames()) + " frames, need " +
                        std::to_string(config.input_frames));
    }
    const auto input = clip.frames() == config.input_frames ? clip : clip.sub(0, config.input_frames);
    model::ForwardOptions opts;
    opts.with_forecast = false;
    const auto out = model::forward(pose_tensor(input), config, params, opts);
    return {out.logits.data().begin(), out.logits.data().end()};
}

}  // namespace gaitcast::train
