#pragma once

// Declarative run configuration: plain-text `key = value` lines grouped under
// `[section]` headers, `#` comments. Unknown sections and keys are rejected,
// and every problem in a file is reported in one ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gaitcast/model.hpp"
#include "gaitcast/motion_data.hpp"
#include "gaitcast/training.hpp"

namespace gaitcast::cli {

struct DataSection {
    std::string manifest;        // clip manifest consumed by training / evaluation
    std::size_t window = data::kDefaultWindow;
    std::size_t stride = data::kDefaultWindow;
    bool normalize = true;
};

struct IngestSection {
    std::string manifest;        // raw NTU-style skeleton files; label column may hold rater scores "a,b,c"
    std::size_t joints = data::kNtuJoints;
    // "class": the label column is a class id. "scores": it holds one or more
    // comma-separated rater scores resolved by majority vote.
    std::string labels = "class";
};

struct ExperimentSection {
    std::string pretrained;      // checkpoint to fine-tune; empty means from scratch
    std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    int runs = 3;
};

struct GradCheckSection {
    model::ModelConfig model;    // tiny model, dropout forced off
    double step = 1e-5;
    double tolerance = 1e-4;
};

struct RunConfig {
    std::uint64_t seed = 0;
    model::ModelConfig model;    // pose_dim and classes are taken from the data at run time
    train::TrainConfig train;
    bool epochs_set = false;     // scratch defaults to 200 epochs unless set
    DataSection data;
    data::SynthSpec synth;
    IngestSection ingest;
    ExperimentSection experiment;
    GradCheckSection gradcheck;

    RunConfig();

    static RunConfig parse(std::string_view text);
    // Relative paths in the file are taken relative to the file's directory.
    static RunConfig load(const std::filesystem::path& path);

    // Fills in values that depend on other keys: the training seed follows
    // run.seed, scratch runs default to 200 epochs and a two-stage run
    // defaults to the sum of its stages. Validates the training section.
    void resolve();

    // Fully resolved configuration in the same syntax; parse(echo()) reproduces it.
    std::string echo() const;
};

// Every accepted `section.key` with its default, for documentation and help.
std::vector<std::pair<std::string, std::string>> documented_defaults();

}  // namespace gaitcast::cli
