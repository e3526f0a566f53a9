#pragma once

// Subject-level evaluation: macro metrics, leave-one-subject-out folds,
// class-balanced few-shot subsampling, repeated experiments and forecast
// export for plotting.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitcast/motion_data.hpp"
#include "gaitcast/training.hpp"

namespace gaitcast::eval {

struct Metrics {
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// Unweighted mean over all `classes` classes of per-class precision, recall
// and F1; 0/0 counts as 0.
Metrics macro_metrics(std::span<const int> preds, std::span<const int> labels, int classes);

// argmax of the mean logit vector over a subject's clips; ties go to the lower class.
int aggregate_subject(std::span<const std::vector<double>> clip_logits);

struct Fold {
    std::string test_subject;
    std::vector<std::string> train_subjects;
};

using FoldPlan = std::vector<Fold>;

// One fold per distinct subject, ordered by subject id.
FoldPlan plan_loocv(std::span<const std::string> subject_ids);
FoldPlan plan_loocv(const data::DatasetManifest& manifest);

inline constexpr double kFullFraction = 1.0;

// round-half-up of fraction * n.
std::size_t few_shot_target(double fraction, std::size_t n);

// Indices (ascending) of a class-balanced subsample of round(fraction * n)
// items. Items go one at a time to the least-filled class that still has
// supply, so class counts differ by at most one unless a class runs out.
// Fraction 1 returns every index.
std::vector<std::size_t> few_shot_sample(std::span<const int> labels, int classes, double fraction,
                                         std::uint64_t seed);
data::DatasetManifest few_shot_sample(const data::DatasetManifest& manifest, double fraction, std::uint64_t seed);

// Trains on `train` recordings and returns class logits for every test clip.
// Test clips carry no labels.
using Pipeline = std::function<std::vector<std::vector<double>>(
    std::span<const data::Recording> train, std::span<const data::PoseSequence> test_clips, std::uint64_t seed)>;

struct SubjectPrediction {
    std::string subject_id;
    int label = 0;
    int predicted = 0;
    std::vector<double> mean_logits;
};

struct LoocvResult {
    std::vector<SubjectPrediction> folds;  // in fold-plan order
    Metrics metrics;                       // pooled over all folds
};

struct LoocvOptions {
    int classes = data::kSeverityClasses;
    std::size_t window = data::kDefaultWindow;
    std::size_t stride = data::kDefaultWindow;
    double fraction = kFullFraction;   // few-shot share of each fold's training videos
    std::uint64_t sample_seed = 0;     // few-shot sampling
    std::uint64_t train_seed = 0;      // passed to the pipeline
};

LoocvResult run_loocv(std::span<const data::Recording> videos, const Pipeline& pipeline, const LoocvOptions& options);

struct ExperimentSpec {
    std::vector<double> fractions{0.25, 0.5, 0.75, kFullFraction};
    int runs = 3;
    std::uint64_t seed = 0;
    int classes = data::kSeverityClasses;
    std::size_t window = data::kDefaultWindow;
    std::size_t stride = data::kDefaultWindow;
};

struct RunResult {
    int run = 0;
    std::uint64_t sample_seed = 0;
    LoocvResult result;
};

struct Summary {
    Metrics mean;
    Metrics stddev;  // population standard deviation across runs
};

struct FractionResult {
    double fraction = kFullFraction;
    std::vector<RunResult> runs;
    Summary summary;
};

struct ExperimentReport {
    std::string config_echo;
    std::vector<FractionResult> fractions;
};

Summary summarize(std::span<const Metrics> runs);

// Each fraction is swept `runs` times with fresh sampling seeds; the
// training seed stays fixed so the full-data sweep repeats exactly.
ExperimentReport run_experiment(std::span<const data::Recording> videos, const Pipeline& pipeline,
                                const ExperimentSpec& spec);

void write_report(std::ostream& os, const ExperimentReport& report);
// Header `fraction,run,f1,precision,recall`, one row per run.
void write_plot_csv(std::ostream& os, const ExperimentReport& report);

// Fine-tunes `pretrained` (or trains from scratch when absent) on the
// windowed training videos and scores the test clips.
struct TransferPipelineSpec {
    std::optional<train::Checkpoint> pretrained;
    model::ModelConfig model;     // used when training from scratch
    train::TrainConfig train;
    std::size_t window = data::kDefaultWindow;
    std::size_t stride = data::kDefaultWindow;
    int classes = data::kSeverityClasses;
};

Pipeline make_transfer_pipeline(TransferPipelineSpec spec);

// Writes <stem>.input.clip, <stem>.truth.clip and <stem>.pred.clip for each
// clip: the t observed frames, the M true future frames and the last decoder
// layer's M predicted frames. Returns the written paths.
std::vector<std::filesystem::path> export_forecasts(const train::Checkpoint& checkpoint,
                                                    std::span<const data::LabeledClip> clips,
                                                    const std::filesystem::path& out_dir);

}  // namespace gaitcast::eval
