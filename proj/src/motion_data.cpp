#include "gaitcast/motion_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "gaitcast/error.hpp"

namespace gaitcast::data {

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) {
            ++i;
        }
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') {
            ++i;
        }
        if (i > start) {
            out.push_back(s.substr(start, i - start));
        }
    }
    return out;
}

template <class T>
bool parse_number(std::string_view token, T& out)
{
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, out);
    return ec == std::errc() && ptr == end;
}

// Line cursor over a whole text buffer; skips blank lines, tracks 1-based numbers.
class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    bool next(std::string_view& line)
    {
        while (pos_ < text_.size()) {
            auto nl = text_.find('\n', pos_);
            if (nl == std::string_view::npos) {
                nl = text_.size();
            }
            line = trim(text_.substr(pos_, nl - pos_));
            pos_ = nl + 1;
            ++line_no_;
            if (!line.empty()) {
                return true;
            }
        }
        return false;
    }

    std::size_t line_no() const { return line_no_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

std::string_view expect_line(LineReader& reader, const char* what)
{
    std::string_view line;
    if (!reader.next(line)) {
        throw ParseError("skeleton: truncated input at line " + std::to_string(reader.line_no() + 1) +
                         " (expected " + what + ")");
    }
    return line;
}

long expect_count(LineReader& reader, const char* what)
{
    const auto line = expect_line(reader, what);
    const auto fields = split_ws(line);
    long value = 0;
    if (fields.empty() || !parse_number(fields[0], value) || value < 0) {
        throw ParseError("skeleton: malformed " + std::string(what) + " at line " +
                         std::to_string(reader.line_no()) + ": '" + std::string(line) + "'");
    }
    return value;
}

void format_real(std::string& out, double v)
{
    char buf[40];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

// ---------------------------------------------------------------- PoseSequence

PoseSequence PoseSequence::zeros(std::size_t joints, std::size_t frames, double frame_rate)
{
    PoseSequence seq;
    seq.joints = joints;
    seq.frame_rate = frame_rate;
    seq.values.assign(frames * 3 * joints, 0.0);
    return seq;
}

std::span<const double> PoseSequence::frame(std::size_t index) const
{
    return std::span<const double>(values).subspan(index * dims(), dims());
}

std::span<double> PoseSequence::frame(std::size_t index)
{
    return std::span<double>(values).subspan(index * dims(), dims());
}

PoseSequence PoseSequence::sub(std::size_t begin, std::size_t end) const
{
    PoseSequence out;
    out.joints = joints;
    out.frame_rate = frame_rate;
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * dims()),
                      values.begin() + static_cast<std::ptrdiff_t>(end * dims()));
    return out;
}

void PoseSequence::append(const PoseSequence& other)
{
    if (joints == 0) {
        joints = other.joints;
        frame_rate = other.frame_rate;
    }
    if (other.joints != joints) {
        throw DataError("append: joint count " + std::to_string(other.joints) + " differs from " +
                        std::to_string(joints));
    }
    values.insert(values.end(), other.values.begin(), other.values.end());
}

void DatasetManifest::validate() const
{
    if (class_count < 1) {
        throw DataError("manifest: class count must be positive");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.subject_id.empty()) {
            throw DataError("manifest: entry " + std::to_string(i) + " has an empty subject id");
        }
        if (e.label < 0 || e.label >= class_count) {
            throw DataError("manifest: entry " + std::to_string(i) + " label " + std::to_string(e.label) +
                            " outside [0," + std::to_string(class_count) + ")");
        }
    }
}

// ---------------------------------------------------------------- NTU parser

PoseSequence parse_skeleton_text(std::string_view text, std::size_t expected_joints)
{
    LineReader reader(text);
    const long frame_count = expect_count(reader, "frame count");

    PoseSequence seq = PoseSequence::zeros(expected_joints, static_cast<std::size_t>(frame_count));
    bool have_previous = false;
    for (long f = 0; f < frame_count; ++f) {
        const long bodies = expect_count(reader, "body count");
        auto out = seq.frame(static_cast<std::size_t>(f));
        for (long b = 0; b < bodies; ++b) {
            expect_line(reader, "body info line");
            const long joints = expect_count(reader, "joint count");
            if (static_cast<std::size_t>(joints) != expected_joints) {
                throw ParseError("skeleton: line " + std::to_string(reader.line_no()) + " declares " +
                                 std::to_string(joints) + " joints, expected " + std::to_string(expected_joints));
            }
            for (long j = 0; j < joints; ++j) {
                const auto line = expect_line(reader, "joint line");
                const auto fields = split_ws(line);
                std::array<double, 3> xyz{};
                if (fields.size() < 3 || !parse_number(fields[0], xyz[0]) || !parse_number(fields[1], xyz[1]) ||
                    !parse_number(fields[2], xyz[2])) {
                    throw ParseError("skeleton: malformed joint line " + std::to_string(reader.line_no()) + ": '" +
                                     std::string(line) + "'");
                }
                if (b == 0) {
                    std::copy(xyz.begin(), xyz.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * j));
                }
            }
        }
        if (bodies > 0) {
            have_previous = true;
        } else if (have_previous) {
            const auto prev = seq.frame(static_cast<std::size_t>(f - 1));
            std::copy(prev.begin(), prev.end(), out.begin());
        }
    }
    return seq;
}

PoseSequence read_skeleton_file(const std::filesystem::path& path, std::size_t expected_joints)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open skeleton file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_skeleton_text(ss.str(), expected_joints);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- labels

int majority_label(std::span<const int> scores, std::uint64_t seed)
{
    if (scores.empty()) {
        throw DataError("majority_label: empty score list");
    }
    std::array<int, kMaxRaterScore + 1> counts{};
    for (int s : scores) {
        if (s < 0 || s > kMaxRaterScore) {
            throw DataError("majority_label: score " + std::to_string(s) + " outside 0..4");
        }
        ++counts[static_cast<std::size_t>(s)];
    }
    const int best = *std::max_element(counts.begin(), counts.end());
    std::vector<int> modes;
    for (int s = 0; s <= kMaxRaterScore; ++s) {
        if (counts[static_cast<std::size_t>(s)] == best) {
            modes.push_back(s);
        }
    }
    int winner = modes.front();
    if (modes.size() > 1) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> pick(0, modes.size() - 1);
        winner = modes[pick(rng)];
    }
    return std::min(winner, kSeverityClasses - 1);
}

// ---------------------------------------------------------------- preprocessing

std::size_t head_joint(std::size_t joints) { return joints >= 4 ? 3 : joints - 1; }

PoseSequence normalize(const PoseSequence& seq)
{
    if (seq.joints == 0 || seq.frames() == 0) {
        throw DataError("normalize: empty sequence");
    }
    PoseSequence out = seq;
    const std::size_t head = head_joint(seq.joints);
    double total = 0.0;
    for (std::size_t f = 0; f < out.frames(); ++f) {
        auto fr = out.frame(f);
        const double rx = fr[0], ry = fr[1], rz = fr[2];
        for (std::size_t j = 0; j < out.joints; ++j) {
            fr[3 * j] -= rx;
            fr[3 * j + 1] -= ry;
            fr[3 * j + 2] -= rz;
        }
        total += std::sqrt(fr[3 * head] * fr[3 * head] + fr[3 * head + 1] * fr[3 * head + 1] +
                           fr[3 * head + 2] * fr[3 * head + 2]);
    }
    const double scale = total / static_cast<double>(out.frames());
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw DataError("normalize: degenerate skeleton (zero root-to-head extent in every frame)");
    }
    for (auto& v : out.values) {
        v /= scale;
    }
    return out;
}

std::vector<PoseSequence> window(const PoseSequence& seq, std::size_t window_frames, std::size_t stride)
{
    if (window_frames < 2) {
        throw DataError("window: length must be at least 2");
    }
    if (stride < 1) {
        throw DataError("window: stride must be positive");
    }
    std::vector<PoseSequence> clips;
    for (std::size_t start = 0; start + window_frames <= seq.frames(); start += stride) {
        clips.push_back(seq.sub(start, start + window_frames));
    }
    return clips;
}

std::pair<PoseSequence, PoseSequence> split_input_target(const PoseSequence& clip, std::size_t input_frames)
{
    if (input_frames < 1 || input_frames >= clip.frames()) {
        throw DataError("split_input_target: input length " + std::to_string(input_frames) +
                        " outside [1," + std::to_string(clip.frames()) + ")");
    }
    return {clip.sub(0, input_frames), clip.sub(input_frames, clip.frames())};
}

std::vector<LabeledClip> make_clips(std::span<const Recording> recordings, std::size_t window_frames,
                                    std::size_t stride)
{
    std::vector<LabeledClip> clips;
    for (const auto& rec : recordings) {
        for (auto& w : window(rec.poses, window_frames, stride)) {
            clips.push_back(LabeledClip{std::move(w), rec.label, rec.subject_id, rec.source_id});
        }
    }
    return clips;
}

// ---------------------------------------------------------------- clip files

void write_clip(std::ostream& os, const PoseSequence& poses, int label, const std::string& subject_id)
{
    if (subject_id.empty() || subject_id.find_first_of(" \t\r\n") != std::string::npos) {
        throw DataError("clip: subject id must be non-empty and contain no whitespace");
    }
    os << "joints=" << poses.joints << " frames=" << poses.frames() << " label=" << label
       << " subject=" << subject_id << '\n';
    std::string line;
    for (std::size_t f = 0; f < poses.frames(); ++f) {
        line.clear();
        const auto fr = poses.frame(f);
        for (std::size_t i = 0; i < fr.size(); ++i) {
            if (i) {
                line.push_back(' ');
            }
            format_real(line, fr[i]);
        }
        line.push_back('\n');
        os << line;
    }
}

ClipFile read_clip(std::istream& is)
{
    std::string header;
    if (!std::getline(is, header)) {
        throw ParseError("clip: missing header line");
    }
    const auto fields = split_ws(trim(header));
    const std::array<std::string_view, 4> keys{"joints=", "frames=", "label=", "subject="};
    if (fields.size() != keys.size()) {
        throw ParseError("clip: malformed header '" + header + "'");
    }
    std::array<std::string_view, 4> vals;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (!fields[i].starts_with(keys[i])) {
            throw ParseError("clip: header field " + std::to_string(i + 1) + " should start with '" +
                             std::string(keys[i]) + "'");
        }
        vals[i] = fields[i].substr(keys[i].size());
    }
    std::size_t joints = 0, frames = 0;
    ClipFile clip;
    if (!parse_number(vals[0], joints) || joints == 0 || !parse_number(vals[1], frames) ||
        !parse_number(vals[2], clip.label) || vals[3].empty()) {
        throw ParseError("clip: malformed header '" + header + "'");
    }
    clip.subject_id = std::string(vals[3]);
    clip.poses = PoseSequence::zeros(joints, frames);
    std::string line;
    for (std::size_t f = 0; f < frames; ++f) {
        if (!std::getline(is, line)) {
            throw ParseError("clip: truncated at frame " + std::to_string(f + 1) + " of " + std::to_string(frames));
        }
        const auto nums = split_ws(line);
        if (nums.size() != 3 * joints) {
            throw ParseError("clip: line " + std::to_string(f + 2) + " has " + std::to_string(nums.size()) +
                             " values, expected " + std::to_string(3 * joints));
        }
        auto fr = clip.poses.frame(f);
        for (std::size_t i = 0; i < nums.size(); ++i) {
            if (!parse_number(nums[i], fr[i]) || !std::isfinite(fr[i])) {
                throw ParseError("clip: bad value '" + std::string(nums[i]) + "' on line " + std::to_string(f + 2));
            }
        }
    }
    return clip;
}

void write_clip_file(const std::filesystem::path& path, const PoseSequence& poses, int label,
                     const std::string& subject_id)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write clip file " + path.string());
    }
    write_clip(out, poses, label, subject_id);
}

ClipFile read_clip_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open clip file " + path.string());
    }
    try {
        return read_clip(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------- manifests

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest)
{
    manifest.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write manifest " + path.string());
    }
    out << "#classes=" << manifest.class_count << "\tjoints=" << manifest.joints << '\n';
    for (const auto& e : manifest.entries) {
        out << e.path << '\t' << e.subject_id << '\t' << e.label << '\t' << e.split << '\n';
    }
}

DatasetManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    DatasetManifest manifest;
    manifest.class_count = -1;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line[0] == '#') {
            for (auto field : split_ws(std::string_view(line).substr(1))) {
                if (field.starts_with("classes=")) {
                    parse_number(field.substr(8), manifest.class_count);
                } else if (field.starts_with("joints=")) {
                    parse_number(field.substr(7), manifest.joints);
                }
            }
            continue;
        }
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) {
            cols.push_back(col);
        }
        ManifestEntry e;
        if (cols.size() < 3 || cols.size() > 4 || !parse_number(std::string_view(cols[2]), e.label)) {
            throw ParseError("manifest " + path.string() + ": malformed record on line " + std::to_string(line_no));
        }
        e.path = cols[0];
        e.subject_id = cols[1];
        e.split = cols.size() == 4 ? cols[3] : "";
        max_label = std::max(max_label, e.label);
        manifest.entries.push_back(std::move(e));
    }
    if (manifest.class_count < 0) {
        manifest.class_count = max_label + 1;
    }
    manifest.validate();
    return manifest;
}

std::vector<Recording> load_recordings(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                       bool normalize_poses)
{
    std::vector<Recording> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) {
            p = base_dir / p;
        }
        auto clip = read_clip_file(p);
        if (clip.poses.joints != manifest.joints) {
            throw DataError(p.string() + ": " + std::to_string(clip.poses.joints) + " joints, manifest declares " +
                            std::to_string(manifest.joints));
        }
        Recording rec;
        rec.poses = normalize_poses ? normalize(clip.poses) : std::move(clip.poses);
        rec.label = e.label;
        rec.subject_id = e.subject_id;
        rec.source_id = e.path;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace gaitcast::data
