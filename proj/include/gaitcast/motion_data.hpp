#pragma once

// Skeleton motion data: ingestion of NTU-style text skeletons, the portable
// clip interchange format, dataset manifests, normalization, windowing,
// rater-label voting and a synthetic gait generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gaitcast::data {

inline constexpr std::size_t kNtuJoints = 25;
inline constexpr std::size_t kDefaultWindow = 100;
inline constexpr int kMaxRaterScore = 4;
inline constexpr int kSeverityClasses = 4;

// Time-ordered skeleton frames, each flattened to 3 * joints coordinates.
struct PoseSequence {
    std::size_t joints = 0;
    double frame_rate = 30.0;
    std::vector<double> values;  // frames x (3 * joints), row-major

    static PoseSequence zeros(std::size_t joints, std::size_t frames, double frame_rate = 30.0);

    std::size_t dims() const noexcept { return 3 * joints; }
    std::size_t frames() const noexcept { return joints == 0 ? 0 : values.size() / dims(); }
    std::span<const double> frame(std::size_t index) const;
    std::span<double> frame(std::size_t index);

    // Frames [begin, end) as a new sequence.
    PoseSequence sub(std::size_t begin, std::size_t end) const;
    void append(const PoseSequence& other);

    bool operator==(const PoseSequence&) const = default;
};

struct LabeledClip {
    PoseSequence poses;
    int label = 0;
    std::string subject_id;
    std::string source_id;
};

struct ManifestEntry {
    std::string path;
    std::string subject_id;
    int label = 0;
    std::string split;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int class_count = 0;
    std::size_t joints = kNtuJoints;

    // Throws DataError on empty subject ids or out-of-range labels.
    void validate() const;
};

// A recording with its identity; the evaluation unit ("video").
struct Recording {
    PoseSequence poses;
    int label = 0;
    std::string subject_id;
    std::string source_id;
};

// ---------------------------------------------------------------- NTU text

// Parses an NTU-style skeleton text file. Only the first body of each frame
// is kept and only x y z of every joint line are read. Frames with no
// tracked body repeat the previous pose; leading empty frames are zeros.
PoseSequence parse_skeleton_text(std::string_view text, std::size_t expected_joints = kNtuJoints);
PoseSequence read_skeleton_file(const std::filesystem::path& path, std::size_t expected_joints = kNtuJoints);

// ---------------------------------------------------------------- labels

// Modal rater score, ties drawn uniformly from the tied modes with `seed`.
// Scores 3 and 4 both map to class 3.
int majority_label(std::span<const int> scores, std::uint64_t seed);

// ---------------------------------------------------------------- preprocessing

// Joint index used as the "head" for scale normalization; 3 for the NTU
// layout and for every reduced synthetic layout with at least 4 joints.
std::size_t head_joint(std::size_t joints);

// Per-frame root centering (joint 0 at the origin) followed by one global
// scale making the mean root-to-head distance equal to 1.
PoseSequence normalize(const PoseSequence& seq);

// Maximal full windows of `window` frames every `stride` frames; a trailing
// remainder shorter than the window is dropped.
std::vector<PoseSequence> window(const PoseSequence& seq, std::size_t window = kDefaultWindow,
                                 std::size_t stride = kDefaultWindow);

// Splits a clip into the first `input_frames` frames and the rest.
std::pair<PoseSequence, PoseSequence> split_input_target(const PoseSequence& clip, std::size_t input_frames);

// Windows every recording, keeping its label and identity on each clip.
std::vector<LabeledClip> make_clips(std::span<const Recording> recordings, std::size_t window_frames,
                                    std::size_t stride);

// ---------------------------------------------------------------- clip files

// Portable clip format: a header line `joints=J frames=F label=L subject=S`
// followed by F lines of 3*J reals printed with 17 significant digits.
struct ClipFile {
    PoseSequence poses;
    int label = 0;
    std::string subject_id;
};

void write_clip(std::ostream& os, const PoseSequence& poses, int label, const std::string& subject_id);
ClipFile read_clip(std::istream& is);
void write_clip_file(const std::filesystem::path& path, const PoseSequence& poses, int label,
                     const std::string& subject_id);
ClipFile read_clip_file(const std::filesystem::path& path);

// ---------------------------------------------------------------- manifests

// Tab-separated `path subject_id label split` records. A leading comment line
// `#classes=C<TAB>joints=J` carries the dataset-level fields. Relative paths
// are resolved against the manifest's directory by load_recordings.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Reads every clip file the manifest points at; normalizes when asked.
std::vector<Recording> load_recordings(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                       bool normalize_poses);

// ---------------------------------------------------------------- synthetic data

struct SynthSpec {
    int classes = 4;
    int clips_per_class = 8;
    std::size_t joints = kNtuJoints;
    std::size_t frames = kDefaultWindow;
    std::uint64_t seed = 1;
    double frame_rate = 30.0;
    std::string subject_prefix = "S";
};

struct SynthDataset {
    DatasetManifest manifest;  // entry paths are file names relative to the output directory
    std::vector<Recording> recordings;
};

// Procedural walkers. Class c sits at severity c/(classes-1): slower cadence,
// shorter stride, less knee flexion and arm swing, more trunk lean, tremor and
// sensor noise as severity grows. Per-subject jitter makes neighbouring
// classes overlap. Every recording gets its own subject id.
SynthDataset synth_dataset(const SynthSpec& spec);

}  // namespace gaitcast::data
