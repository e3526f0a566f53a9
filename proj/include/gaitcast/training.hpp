#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gaitcast/model.hpp"
#include "gaitcast/motion_data.hpp"
#include "gaitcast/objectives.hpp"

namespace gaitcast::train {

enum class Strategy { Pretrain, Scratch, FineClass, FineBoth, FineBothThenClass };

std::string_view to_string(Strategy strategy);
// Accepts the canonical names plus the CLI spellings class, both, both-then-class.
Strategy parse_strategy(std::string_view text);

inline constexpr int kDefaultEpochs = 100;
inline constexpr int kScratchEpochs = 200;
inline constexpr double kDefaultLearningRate = 1e-4;

struct AdamWSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct TrainConfig {
    int epochs = kDefaultEpochs;
    double learning_rate = kDefaultLearningRate;
    int batch_size = 16;
    std::uint64_t seed = 0;
    AdamWSettings optimizer;
    Strategy strategy = Strategy::Pretrain;
    std::array<int, 2> stage_split{50, 50};
    // Lets the class-only stage also update the embedding and encoder.
    bool class_stage_trains_encoder = false;

    void validate() const;
};

// Defaults for from-scratch training: the fine-tuning setup run for 200 epochs.
TrainConfig scratch_config();

struct EpochRecord {
    int epoch = 0;                  // 1-based, counted across stages
    std::string stage;              // objective mode active in this epoch
    double classification = 0.0;
    std::optional<double> forecast; // absent when the forecast branch is not evaluated
    double total = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    model::ModelConfig config;
    model::ModelParams params;
    int epoch = 0;
    std::vector<EpochRecord> history;
    std::string config_echo;        // resolved run configuration that produced this checkpoint

    // Binary container: magic "GAITCKPT", u32 version, u64 header length, a
    // JSON header (config, history, tensor table), then every tensor as raw
    // little-endian float64 in table order.
    std::string serialize() const;
    static Checkpoint deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

// Adaptive-moment update with decoupled weight decay and a constant rate.
class AdamW {
public:
    AdamW(AdamWSettings settings, double learning_rate);

    // Updates each tensor from its accumulated gradient. Tensors without a
    // gradient buffer are treated as having a zero gradient. Throws
    // TrainingError naming the parameter when a gradient is not finite.
    void step(std::span<const model::NamedTensor> params);

    long steps(const std::string& name) const;

private:
    struct Moments {
        std::vector<double> first;
        std::vector<double> second;
        long steps = 0;
    };
    AdamWSettings settings_;
    double learning_rate_;
    std::map<std::string, Moments> state_;
};

// Called once per finished epoch with the record and the epoch's wall time.
using EpochCallback = std::function<void(const EpochRecord&, double seconds)>;

// Tab-separated log line: epoch, stage, L_c, L_f (or -), total, wall seconds.
std::string format_log_line(const EpochRecord& record, double seconds);

// Parameters the given objective mode is allowed to update.
std::vector<model::NamedTensor> trainable(const model::ModelParams& params, loss::Mode mode,
                                          bool class_stage_trains_encoder);

// Joint classification + forecasting on activity labels with unweighted CE.
Checkpoint pretrain(std::span<const data::LabeledClip> clips, const model::ModelConfig& config,
                    const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// Continues from `init`; the classifier is re-initialized when `classes`
// differs from the checkpoint's. Class weights come from `clips` only.
Checkpoint finetune(const Checkpoint& init, std::span<const data::LabeledClip> clips, int classes,
                    const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// The both-branch fine-tuning objective from random initialization.
Checkpoint train_scratch(std::span<const data::LabeledClip> clips, const model::ModelConfig& config,
                         const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// Class logits for one clip; only its first input_frames frames are read.
std::vector<double> predict_logits(const model::ModelConfig& config, const model::ModelParams& params,
                                   const data::PoseSequence& clip);

// Input frames of a clip as a (t x N) tensor.
ad::Tensor pose_tensor(const data::PoseSequence& seq);

}  // namespace gaitcast::train
