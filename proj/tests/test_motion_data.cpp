#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gaitcast/error.hpp"
#include "gaitcast/motion_data.hpp"
#include "helpers.hpp"

using namespace gaitcast;
using namespace gaitcast::data;

namespace {

const std::filesystem::path kData = std::filesystem::path(GAITCAST_TEST_DATA) / "data";

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PoseSequence random_sequence(std::size_t joints, std::size_t frames, std::uint64_t seed)
{
    auto seq = PoseSequence::zeros(joints, frames);
    seq.values = testutil::random_values(seq.values.size(), seed, -2.0, 2.0);
    return seq;
}

std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("gaitcast_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("NTU skeleton parser matches the golden clip")
{
    const auto seq = read_skeleton_file(kData / "skeleton_sample.skeleton");
    const auto golden = read_clip_file(kData / "skeleton_sample.clip");
    CHECK(seq.joints == 25);
    CHECK(seq.frames() == 5);
    CHECK(seq.values == golden.poses.values);

    // Writing the parsed sequence reproduces the golden file byte for byte.
    std::ostringstream os;
    write_clip(os, seq, golden.label, golden.subject_id);
    CHECK(os.str() == slurp(kData / "skeleton_sample.clip"));
}

TEST_CASE("NTU parser keeps the first body and holds the last pose when none is tracked")
{
    const auto seq = read_skeleton_file(kData / "skeleton_sample.skeleton");
    // Frame 0 has no body and no history: zeros.
    for (double v : seq.frame(0)) {
        CHECK(v == 0.0);
    }
    // Frame 3 has no body: repeats frame 2.
    CHECK(std::equal(seq.frame(3).begin(), seq.frame(3).end(), seq.frame(2).begin()));
    CHECK_FALSE(std::equal(seq.frame(2).begin(), seq.frame(2).end(), seq.frame(1).begin()));
}

TEST_CASE("NTU parser reports malformed input with a line number")
{
    CHECK_THROWS_AS(parse_skeleton_text("2\n1\ninfo\n25\n"), ParseError);
    try {
        parse_skeleton_text("1\n1\n1 2 3 4 5 6 7 8 9 10\n25\n1 2\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 5") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_skeleton_text("1\n1\n1 2 3 4 5 6 7 8 9 10\n24\n"), ParseError);
    CHECK_THROWS_AS(parse_skeleton_text("x\n"), ParseError);
}

TEST_CASE("majority label picks the modal score and merges 3 and 4")
{
    const std::vector<int> a{1, 1, 2};
    CHECK(majority_label(a, 0) == 1);
    const std::vector<int> b{4, 4, 1};
    CHECK(majority_label(b, 0) == 3);
    const std::vector<int> c{3};
    CHECK(majority_label(c, 0) == 3);
    const std::vector<int> bad{5};
    CHECK_THROWS_AS((void)majority_label(bad, 0), DataError);
    CHECK_THROWS_AS((void)majority_label(std::vector<int>{}, 0), DataError);
    const std::vector<int> neg{-1, 2};
    CHECK_THROWS_AS((void)majority_label(neg, 0), DataError);
}

TEST_CASE("majority label breaks ties uniformly across seeds")
{
    const std::vector<int> tie{0, 1, 0, 1};
    const std::vector<int> three{0, 1, 2};
    std::map<int, int> two_way;
    std::map<int, int> three_way;
    const int n = 10000;
    for (int s = 0; s < n; ++s) {
        ++two_way[majority_label(tie, static_cast<std::uint64_t>(s))];
        ++three_way[majority_label(three, static_cast<std::uint64_t>(s))];
    }
    CHECK(two_way.size() == 2);
    // Binomial standard deviation at n = 10000 is 0.005; allow 4 sigma.
    CHECK(std::abs(two_way[0] / double(n) - 0.5) < 0.02);
    CHECK(three_way.size() == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(three_way[k] / double(n) - 1.0 / 3.0) < 0.02);
    }
}

TEST_CASE("majority label is invariant to the order of scores")
{
    std::vector<int> scores{2, 0, 1, 2, 0, 4, 1};
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        CHECK(majority_label(scores, seed) == majority_label(sorted, seed));
        std::next_permutation(scores.begin(), scores.end());
    }
}

TEST_CASE("head joint index")
{
    CHECK(head_joint(25) == 3);
    CHECK(head_joint(12) == 3);
    CHECK(head_joint(4) == 3);
    CHECK(head_joint(2) == 1);
}

TEST_CASE("normalize centers the root and scales the mean root-head distance to one")
{
    const auto seq = random_sequence(25, 30, 5);
    const auto n = normalize(seq);
    double mean_dist = 0.0;
    for (std::size_t f = 0; f < n.frames(); ++f) {
        const auto fr = n.frame(f);
        CHECK(fr[0] == 0.0);
        CHECK(fr[1] == 0.0);
        CHECK(fr[2] == 0.0);
        const std::size_t h = 3 * head_joint(25);
        mean_dist += std::sqrt(fr[h] * fr[h] + fr[h + 1] * fr[h + 1] + fr[h + 2] * fr[h + 2]);
    }
    CHECK(mean_dist / n.frames() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize is idempotent and translation invariant")
{
    const auto seq = random_sequence(25, 40, 9);
    const auto once = normalize(seq);
    const auto twice = normalize(once);
    CHECK(testutil::max_abs_diff(once.values, twice.values) <= 1e-12);

    auto shifted = seq;
    const double offset[3] = {12.5, -7.25, 3.0};
    for (std::size_t i = 0; i < shifted.values.size(); ++i) {
        shifted.values[i] += offset[i % 3];
    }
    CHECK(testutil::max_abs_diff(normalize(shifted).values, once.values) <= 1e-12);
}

TEST_CASE("normalize rejects a degenerate skeleton")
{
    const auto flat = PoseSequence::zeros(25, 10);
    CHECK_THROWS_AS((void)normalize(flat), DataError);
}

TEST_CASE("window index arithmetic")
{
    SUBCASE("100 frames make one clip")
    {
        CHECK(window(random_sequence(3, 100, 1)).size() == 1);
    }
    SUBCASE("250 frames make two clips covering frames 0-99 and 100-199")
    {
        const auto seq = random_sequence(3, 250, 2);
        const auto clips = window(seq, 100, 100);
        REQUIRE(clips.size() == 2);
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(clips[k].frames() == 100);
            for (std::size_t f = 0; f < 100; ++f) {
                CHECK(std::equal(clips[k].frame(f).begin(), clips[k].frame(f).end(),
                                 seq.frame(100 * k + f).begin()));
            }
        }
    }
    SUBCASE("99 frames make no clip")
    {
        CHECK(window(random_sequence(3, 99, 3)).empty());
    }
    SUBCASE("overlapping stride")
    {
        // floor((frames - window) / stride) + 1 windows
        CHECK(window(random_sequence(3, 250, 4), 100, 50).size() == 4);
    }
    SUBCASE("invalid arguments")
    {
        CHECK_THROWS_AS((void)window(random_sequence(3, 10, 5), 1, 1), DataError);
        CHECK_THROWS_AS((void)window(random_sequence(3, 10, 5), 5, 0), DataError);
    }
}

TEST_CASE("concatenated windows reproduce the covered prefix")
{
    for (std::size_t frames : {7u, 64u, 131u, 300u}) {
        const auto seq = random_sequence(4, frames, frames);
        const auto clips = window(seq, 32, 32);
        PoseSequence joined = PoseSequence::zeros(4, 0);
        for (const auto& c : clips) {
            CHECK(c.frames() == 32);
            joined.append(c);
        }
        CHECK(joined == seq.sub(0, (frames / 32) * 32));
    }
}

TEST_CASE("split into input and target")
{
    const auto clip = random_sequence(5, 100, 8);
    auto [x, y] = split_input_target(clip, 60);
    CHECK(x.frames() == 60);
    CHECK(y.frames() == 40);
    auto [x1, y1] = split_input_target(clip, 99);
    CHECK(y1.frames() == 1);
    CHECK_THROWS_AS((void)split_input_target(clip, 0), DataError);
    CHECK_THROWS_AS((void)split_input_target(clip, 100), DataError);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const std::size_t t = 1 + rng() % 99;
        auto [a, b] = split_input_target(clip, t);
        a.append(b);
        CHECK(a == clip);
    }
}

TEST_CASE("clip files round-trip bit for bit")
{
    auto seq = random_sequence(25, 12, 77);
    seq.values[0] = 1e-300;
    seq.values[1] = -0.0;
    seq.values[2] = 123456789.123456789;
    std::stringstream ss;
    write_clip(ss, seq, 3, "P042");
    const auto back = read_clip(ss);
    CHECK(back.label == 3);
    CHECK(back.subject_id == "P042");
    CHECK(back.poses.joints == 25);
    REQUIRE(back.poses.values.size() == seq.values.size());
    for (std::size_t i = 0; i < seq.values.size(); ++i) {
        CHECK(std::bit_cast<std::uint64_t>(back.poses.values[i]) == std::bit_cast<std::uint64_t>(seq.values[i]));
    }
}

TEST_CASE("clip reader rejects malformed files")
{
    std::istringstream missing_frame("joints=1 frames=2 label=0 subject=A\n1 2 3\n");
    CHECK_THROWS_AS((void)read_clip(missing_frame), ParseError);
    std::istringstream bad_header("joints=1 frames=1 subject=A\n1 2 3\n");
    CHECK_THROWS_AS((void)read_clip(bad_header), ParseError);
    std::istringstream short_row("joints=1 frames=1 label=0 subject=A\n1 2\n");
    CHECK_THROWS_AS((void)read_clip(short_row), ParseError);
}

TEST_CASE("manifest round-trip and validation")
{
    const auto dir = scratch_dir("manifest");
    DatasetManifest m;
    m.class_count = 4;
    m.joints = 12;
    m.entries = {{"a.clip", "S1", 0, "train"}, {"b.clip", "S2", 3, "test"}};
    write_manifest(dir / "m.tsv", m);
    const auto back = read_manifest(dir / "m.tsv");
    CHECK(back.class_count == 4);
    CHECK(back.joints == 12);
    CHECK(back.entries == m.entries);

    auto bad = m;
    bad.entries[1].label = 4;
    CHECK_THROWS_AS(bad.validate(), DataError);
    bad = m;
    bad.entries[0].subject_id.clear();
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("load_recordings reads and optionally normalizes every clip")
{
    const auto dir = scratch_dir("load");
    SynthSpec spec;
    spec.clips_per_class = 1;
    spec.joints = 12;
    spec.frames = 40;
    const auto ds = synth_dataset(spec);
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        write_clip_file(dir / ds.manifest.entries[i].path, ds.recordings[i].poses, ds.recordings[i].label,
                        ds.recordings[i].subject_id);
    }
    const auto raw = load_recordings(ds.manifest, dir, false);
    REQUIRE(raw.size() == ds.recordings.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(raw[i].poses.values == ds.recordings[i].poses.values);
        CHECK(raw[i].label == ds.recordings[i].label);
        CHECK(raw[i].subject_id == ds.recordings[i].subject_id);
    }
    const auto norm = load_recordings(ds.manifest, dir, true);
    CHECK(norm[0].poses == normalize(ds.recordings[0].poses));
}

TEST_CASE("make_clips keeps labels and identity and enforces the window")
{
    SynthSpec spec;
    spec.clips_per_class = 2;
    spec.joints = 12;
    spec.frames = 250;
    const auto ds = synth_dataset(spec);
    const auto clips = make_clips(ds.recordings, 100, 100);
    CHECK(clips.size() == 2 * ds.recordings.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto& rec = ds.recordings[i / 2];
        CHECK(clips[i].poses.frames() == 100);
        CHECK(clips[i].label == rec.label);
        CHECK(clips[i].subject_id == rec.subject_id);
        CHECK(clips[i].label < spec.classes);
    }
}

TEST_CASE("synthetic dataset: size, balance, determinism")
{
    SynthSpec spec;  // 4 classes, 8 clips, 25 joints, 100 frames, seed 1
    const auto a = synth_dataset(spec);
    CHECK(a.recordings.size() == 32);
    std::map<int, int> counts;
    std::set<std::string> subjects;
    for (const auto& r : a.recordings) {
        ++counts[r.label];
        subjects.insert(r.subject_id);
        CHECK(r.poses.frames() == 100);
        CHECK(r.poses.joints == 25);
        for (double v : r.poses.values) {
            REQUIRE(std::isfinite(v));
        }
    }
    CHECK(counts == std::map<int, int>{{0, 8}, {1, 8}, {2, 8}, {3, 8}});
    CHECK(subjects.size() == 32);
    CHECK(a.manifest.class_count == 4);
    CHECK_NOTHROW(a.manifest.validate());

    const auto b = synth_dataset(spec);
    for (std::size_t i = 0; i < a.recordings.size(); ++i) {
        CHECK(a.recordings[i].poses.values == b.recordings[i].poses.values);
    }
    auto other = spec;
    other.seed = 2;
    CHECK(synth_dataset(other).recordings[0].poses.values != a.recordings[0].poses.values);

    auto bad = spec;
    bad.classes = 1;
    CHECK_THROWS_AS((void)synth_dataset(bad), ConfigError);
}

TEST_CASE("synthetic classes carry signal a 1-NN classifier can find")
{
    SynthSpec spec;
    spec.classes = 4;
    spec.clips_per_class = 20;
    spec.joints = 25;
    spec.frames = 100;
    spec.seed = 11;
    const auto ds = synth_dataset(spec);

    // Mean pose of the normalized recording as the feature vector; only the
    // extreme classes 0 and 3, split alternately into reference and query.
    std::vector<std::pair<std::vector<double>, int>> ref, query;
    std::map<int, int> seen;
    for (const auto& r : ds.recordings) {
        if (r.label != 0 && r.label != 3) continue;
        const auto n = normalize(r.poses);
        std::vector<double> feat(n.dims(), 0.0);
        for (std::size_t f = 0; f < n.frames(); ++f) {
            for (std::size_t i = 0; i < n.dims(); ++i) feat[i] += n.frame(f)[i] / n.frames();
        }
        (seen[r.label]++ % 2 == 0 ? ref : query).emplace_back(feat, r.label);
    }
    int correct = 0;
    for (const auto& [q, label] : query) {
        double best = 1e300;
        int pred = -1;
        for (const auto& [x, l] : ref) {
            double d = 0;
            for (std::size_t i = 0; i < q.size(); ++i) d += (q[i] - x[i]) * (q[i] - x[i]);
            if (d < best) {
                best = d;
                pred = l;
            }
        }
        correct += pred == label;
    }
    CHECK(double(correct) / query.size() > 0.5);
}
