#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "gaitcast/error.hpp"
#include "gaitcast/evaluation.hpp"
#include "gaitcast/model.hpp"

using namespace gaitcast;
using namespace gaitcast::eval;

namespace {

// Confusion-matrix oracle, written independently of the library.
Metrics brute_force_metrics(const std::vector<int>& preds, const std::vector<int>& labels, int classes)
{
    std::vector<std::vector<int>> cm(classes, std::vector<int>(classes, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) cm[labels[i]][preds[i]]++;
    Metrics m;
    for (int k = 0; k < classes; ++k) {
        int col = 0, row = 0;
        for (int j = 0; j < classes; ++j) {
            col += cm[j][k];
            row += cm[k][j];
        }
        const double tp = cm[k][k];
        const double p = col ? tp / col : 0.0;
        const double r = row ? tp / row : 0.0;
        m.precision += p;
        m.recall += r;
        m.f1 += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    m.precision /= classes;
    m.recall /= classes;
    m.f1 /= classes;
    return m;
}

data::Recording recording(const std::string& subject, int label, std::size_t frames, double level)
{
    data::Recording r;
    r.poses = data::PoseSequence::zeros(1, frames);
    std::fill(r.poses.values.begin(), r.poses.values.end(), level);
    r.label = label;
    r.subject_id = subject;
    r.source_id = subject + "_rec";
    return r;
}

// Two recordings per subject, labels cycle over 4 classes, pose level encodes the label.
std::vector<data::Recording> toy_cohort(int subjects)
{
    std::vector<data::Recording> out;
    for (int s = 0; s < subjects; ++s) {
        const std::string id = "P" + std::to_string(100 + s);
        const int label = s % 4;
        out.push_back(recording(id, label, 20, label + 0.01 * s));
        out.push_back(recording(id, label, 30, label - 0.01 * s));
    }
    return out;
}

// Nearest class-mean on the first coordinate; unseen classes sit far away.
std::vector<std::vector<double>> centroid_logits(std::span<const data::Recording> train,
                                                 std::span<const data::PoseSequence> test, int classes)
{
    std::vector<double> sum(classes, 0.0), count(classes, 0.0);
    for (const auto& r : train) {
        sum[r.label] += r.poses.values[0];
        count[r.label] += 1;
    }
    std::vector<std::vector<double>> logits;
    for (const auto& clip : test) {
        std::vector<double> l(classes);
        for (int k = 0; k < classes; ++k) {
            l[k] = count[k] > 0 ? -std::abs(clip.values[0] - sum[k] / count[k]) : -1e9;
        }
        logits.push_back(l);
    }
    return logits;
}

}  // namespace

TEST_CASE("macro metrics hand cases")
{
    SUBCASE("perfect")
    {
        const std::vector<int> y{0, 1, 2, 3, 1};
        const auto m = macro_metrics(y, y, 4);
        CHECK(m.f1 == 1.0);
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
    }
    SUBCASE("constant prediction on balanced labels")
    {
        const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
        const std::vector<int> preds(8, 0);
        const auto m = macro_metrics(preds, labels, 4);
        CHECK(m.recall == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(m.precision == doctest::Approx(0.25 * 0.25).epsilon(1e-15));
        CHECK(m.f1 == doctest::Approx(0.25 * 0.4).epsilon(1e-15));
    }
    SUBCASE("six samples")
    {
        const std::vector<int> labels{0, 0, 0, 1, 1, 1};
        const std::vector<int> preds{0, 0, 1, 1, 1, 0};
        const auto m = macro_metrics(preds, labels, 2);
        CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(m.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(m.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("absent classes count as zero")
    {
        const std::vector<int> y{0, 0};
        const auto m = macro_metrics(y, y, 4);
        CHECK(m.f1 == doctest::Approx(0.25).epsilon(1e-15));
    }
}

TEST_CASE("macro metrics match a confusion-matrix oracle")
{
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const int classes = 2 + static_cast<int>(rng() % 4);
        const std::size_t n = 1 + rng() % 40;
        std::vector<int> preds(n), labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = static_cast<int>(rng() % classes);
            labels[i] = static_cast<int>(rng() % classes);
        }
        const auto a = macro_metrics(preds, labels, classes);
        const auto b = brute_force_metrics(preds, labels, classes);
        REQUIRE(a.f1 == b.f1);
        REQUIRE(a.precision == b.precision);
        REQUIRE(a.recall == b.recall);
    }
}

TEST_CASE("macro metrics reject bad input")
{
    const std::vector<int> ok{0, 1};
    const std::vector<int> bad{0, 4};
    CHECK_THROWS_AS((void)macro_metrics(bad, ok, 4), Error);
    CHECK_THROWS_AS((void)macro_metrics(ok, bad, 4), Error);
    CHECK_THROWS_AS((void)macro_metrics(std::vector<int>{0}, ok, 4), Error);
    CHECK_THROWS_AS((void)macro_metrics(std::vector<int>{}, std::vector<int>{}, 4), Error);
}

TEST_CASE("subject aggregation by mean logits")
{
    CHECK(aggregate_subject(std::vector<std::vector<double>>{{0.1, 0.7, 0.2}}) == 1);
    CHECK(aggregate_subject(std::vector<std::vector<double>>{{1, 0}, {0, 1}}) == 0);
    CHECK(aggregate_subject(std::vector<std::vector<double>>{{3, -10}, {-1, 1}, {-1, 1}}) == 0);
    CHECK_THROWS_AS((void)aggregate_subject(std::vector<std::vector<double>>{}), Error);
    CHECK_THROWS_AS((void)aggregate_subject(std::vector<std::vector<double>>{{1, 0}, {1}}), ShapeError);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<double>> clips(3, std::vector<double>(4));
        for (auto& c : clips)
            for (auto& v : c) v = u(rng);
        int best = 0;
        double best_sum = -1e300;
        for (int k = 0; k < 4; ++k) {
            const double s = clips[0][k] + clips[1][k] + clips[2][k];
            if (s > best_sum) {
                best_sum = s;
                best = k;
            }
        }
        CHECK(aggregate_subject(clips) == best);
    }
}

TEST_CASE("LOOCV fold plan partitions the subjects")
{
    std::vector<std::string> ids;
    for (int i = 0; i < 54; ++i) {
        ids.push_back("S" + std::to_string(i));
        ids.push_back("S" + std::to_string(i));  // several videos per subject
    }
    const auto plan = plan_loocv(ids);
    REQUIRE(plan.size() == 54);
    std::set<std::string> tests;
    for (const auto& f : plan) {
        CHECK(f.train_subjects.size() == 53);
        CHECK(std::find(f.train_subjects.begin(), f.train_subjects.end(), f.test_subject) == f.train_subjects.end());
        tests.insert(f.test_subject);
    }
    CHECK(tests.size() == 54);

    const auto two = plan_loocv(std::vector<std::string>{"b", "a"});
    REQUIRE(two.size() == 2);
    CHECK(two[0].test_subject == "a");
    CHECK(two[0].train_subjects == std::vector<std::string>{"b"});
    CHECK_THROWS_AS((void)plan_loocv(std::vector<std::string>{"a", "a"}), DataError);
    CHECK_THROWS_AS((void)plan_loocv(std::vector<std::string>{}), DataError);
}

TEST_CASE("few-shot target rounds half up")
{
    CHECK(few_shot_target(0.25, 53) == 13);
    CHECK(few_shot_target(0.5, 53) == 27);
    CHECK(few_shot_target(0.75, 53) == 40);
    CHECK(few_shot_target(1.0, 53) == 53);
    CHECK(few_shot_target(0.5, 4) == 2);
}

TEST_CASE("few-shot sampler is class balanced")
{
    std::vector<int> labels;
    for (int k = 0; k < 4; ++k) labels.insert(labels.end(), k == 1 ? 14 : 13, k);
    REQUIRE(labels.size() == 53);
    for (double f : {0.25, 0.5, 0.75}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto picked = few_shot_sample(labels, 4, f, seed);
            CHECK(picked.size() == few_shot_target(f, labels.size()));
            CHECK(std::is_sorted(picked.begin(), picked.end()));
            CHECK(std::set<std::size_t>(picked.begin(), picked.end()).size() == picked.size());
            std::vector<int> per(4, 0);
            for (auto i : picked) per[labels[i]]++;
            CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
        }
    }
}

TEST_CASE("few-shot sampler redistributes a short class")
{
    std::vector<int> labels{0};
    for (int k = 1; k < 4; ++k) labels.insert(labels.end(), 17 + (k == 1), k);  // 1 + 18 + 17 + 17 = 53
    REQUIRE(labels.size() == 53);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto picked = few_shot_sample(labels, 4, 0.25, seed);
        CHECK(picked.size() == 13);
        std::vector<int> per(4, 0);
        for (auto i : picked) per[labels[i]]++;
        CHECK(per[0] == 1);
        const auto [lo, hi] = std::minmax_element(per.begin() + 1, per.end());
        CHECK(*hi - *lo <= 1);
    }
}

TEST_CASE("few-shot sampler determinism, identity and errors")
{
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(i % 4);
    CHECK(few_shot_sample(labels, 4, 0.5, 9) == few_shot_sample(labels, 4, 0.5, 9));
    bool differs = false;
    for (std::uint64_t s = 1; s < 10 && !differs; ++s) {
        differs = few_shot_sample(labels, 4, 0.5, 0) != few_shot_sample(labels, 4, 0.5, s);
    }
    CHECK(differs);

    const auto all = few_shot_sample(labels, 4, 1.0, 3);
    REQUIRE(all.size() == 40);
    for (std::size_t i = 0; i < 40; ++i) CHECK(all[i] == i);

    CHECK_THROWS_AS((void)few_shot_sample(labels, 4, 0.3, 0), ConfigError);
    CHECK_THROWS_AS((void)few_shot_sample(std::vector<int>{}, 4, 0.5, 0), DataError);
    CHECK_THROWS_AS((void)few_shot_sample(std::vector<int>{0, 5}, 4, 0.5, 0), DataError);
}

TEST_CASE("few-shot sampling of a manifest keeps whole entries")
{
    data::DatasetManifest m;
    m.class_count = 2;
    for (int i = 0; i < 8; ++i) m.entries.push_back({"v" + std::to_string(i) + ".clip", "S" + std::to_string(i), i % 2, ""});
    const auto half = few_shot_sample(m, 0.5, 1);
    CHECK(half.entries.size() == 4);
    CHECK(half.class_count == 2);
    for (const auto& e : half.entries) {
        CHECK(std::find(m.entries.begin(), m.entries.end(), e) != m.entries.end());
    }
}

TEST_CASE("LOOCV never shows the test subject to the pipeline")
{
    const auto videos = toy_cohort(8);
    std::vector<std::string> seen_tests;
    Pipeline audit = [&](std::span<const data::Recording> train, std::span<const data::PoseSequence> test,
                         std::uint64_t) {
        // The test subject is the one missing from training.
        std::set<std::string> train_ids;
        for (const auto& r : train) train_ids.insert(r.subject_id);
        std::string missing;
        for (const auto& v : videos)
            if (!train_ids.count(v.subject_id)) missing = v.subject_id;
        seen_tests.push_back(missing);
        CHECK(train_ids.size() == 7);
        for (const auto& r : train) CHECK(r.subject_id != missing);
        // 20 frames -> 2 clips, 30 frames -> 3 clips of 10
        CHECK(test.size() == 5);
        return centroid_logits(train, test, 4);
    };
    LoocvOptions opts;
    opts.window = 10;
    opts.stride = 10;
    const auto res = run_loocv(videos, audit, opts);
    CHECK(res.folds.size() == 8);
    CHECK(seen_tests.size() == 8);
    CHECK(std::set<std::string>(seen_tests.begin(), seen_tests.end()).size() == 8);
    for (std::size_t f = 0; f < res.folds.size(); ++f) CHECK(res.folds[f].subject_id == seen_tests[f]);
    CHECK(res.metrics.f1 == 1.0);
}

TEST_CASE("LOOCV few-shot resamples only the training side")
{
    const auto videos = toy_cohort(9);
    Pipeline p = [&](std::span<const data::Recording> train, std::span<const data::PoseSequence> test,
                     std::uint64_t) {
        CHECK(train.size() == few_shot_target(0.5, 16));
        CHECK(test.size() == 5);
        return centroid_logits(train, test, 4);
    };
    LoocvOptions opts;
    opts.window = 10;
    opts.stride = 10;
    opts.fraction = 0.5;
    (void)run_loocv(videos, p, opts);
}

TEST_CASE("LOOCV rejects bad pipelines and cohorts")
{
    auto videos = toy_cohort(3);
    LoocvOptions opts;
    opts.window = 10;
    opts.stride = 10;
    Pipeline short_output = [](std::span<const data::Recording>, std::span<const data::PoseSequence>, std::uint64_t) {
        return std::vector<std::vector<double>>{{1, 0, 0, 0}};
    };
    CHECK_THROWS_AS((void)run_loocv(videos, short_output, opts), Error);

    Pipeline ok = [](std::span<const data::Recording> tr, std::span<const data::PoseSequence> te, std::uint64_t) {
        return centroid_logits(tr, te, 4);
    };
    opts.window = 50;
    CHECK_THROWS_AS((void)run_loocv(videos, ok, opts), DataError);
    opts.window = 10;
    videos[1].label = 3;
    CHECK_THROWS_AS((void)run_loocv(videos, ok, opts), DataError);
}

TEST_CASE("experiment runs, summaries and report format")
{
    const auto videos = toy_cohort(12);
    // A noisy pipeline so that few-shot runs differ.
    Pipeline p = [](std::span<const data::Recording> train, std::span<const data::PoseSequence> test,
                    std::uint64_t) {
        auto logits = centroid_logits(train, test, 4);
        std::size_t h = 0;
        for (const auto& r : train) h = h * 31 + std::hash<std::string>{}(r.source_id + r.subject_id);
        std::mt19937_64 rng(h);
        std::normal_distribution<double> n(0, 0.6);
        for (auto& l : logits)
            for (auto& v : l) v += n(rng);
        return logits;
    };
    ExperimentSpec spec;
    spec.fractions = {0.25, 1.0};
    spec.runs = 3;
    spec.seed = 5;
    spec.window = 10;
    spec.stride = 10;
    auto report = run_experiment(videos, p, spec);
    REQUIRE(report.fractions.size() == 2);
    for (const auto& fr : report.fractions) {
        REQUIRE(fr.runs.size() == 3);
        double mean = 0, var = 0;
        for (const auto& r : fr.runs) mean += r.result.metrics.f1 / 3.0;
        for (const auto& r : fr.runs) var += (r.result.metrics.f1 - mean) * (r.result.metrics.f1 - mean) / 3.0;
        CHECK(fr.summary.mean.f1 == doctest::Approx(mean).epsilon(1e-14));
        CHECK(fr.summary.stddev.f1 == doctest::Approx(std::sqrt(var)).epsilon(1e-12).scale(1e-15));
    }
    CHECK(report.fractions[0].runs[0].sample_seed != report.fractions[0].runs[1].sample_seed);
    CHECK(report.fractions[1].summary.stddev.f1 == 0.0);
    CHECK(report.fractions[1].summary.stddev.precision == 0.0);

    report.config_echo = "[run]\nseed = 5\n";
    std::ostringstream os;
    write_report(os, report);
    const auto text = os.str();
    CHECK(text.rfind("# gaitcast experiment report\n[config]\n  [run]\n  seed = 5\n[runs]\n", 0) == 0);
    CHECK(text.find("run fraction=0.25 run=0 sample_seed=") != std::string::npos);
    CHECK(text.find("fold fraction=1 run=2 subject=P111 label=3 predicted=") != std::string::npos);
    CHECK(text.find("[summary]\nfraction=0.25 runs=3 f1_mean=") != std::string::npos);

    std::ostringstream csv;
    write_plot_csv(csv, report);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "fraction,run,f1,precision,recall");
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    CHECK(rows == 6);

    spec.runs = 0;
    CHECK_THROWS_AS((void)run_experiment(videos, p, spec), ConfigError);
    spec.runs = 1;
    spec.fractions = {0.4};
    CHECK_THROWS_AS((void)run_experiment(videos, p, spec), ConfigError);
}

TEST_CASE("summary of identical runs has zero spread")
{
    const std::vector<Metrics> runs(3, Metrics{0.5, 0.25, 0.75});
    const auto s = summarize(runs);
    CHECK(s.mean.f1 == 0.5);
    CHECK(s.stddev.f1 == 0.0);
    CHECK(s.stddev.recall == 0.0);
    const std::vector<Metrics> spread{{0.2, 0, 0}, {0.4, 0, 0}, {0.9, 0, 0}};
    const double mean = 1.5 / 3.0;
    const double var = ((0.2 - mean) * (0.2 - mean) + (0.4 - mean) * (0.4 - mean) + (0.9 - mean) * (0.9 - mean)) / 3;
    CHECK(summarize(spread).stddev.f1 == doctest::Approx(std::sqrt(var)).epsilon(1e-14));
}

TEST_CASE("transfer pipeline argument checks")
{
    TransferPipelineSpec spec;
    spec.train.strategy = train::Strategy::FineBoth;
    CHECK_THROWS_AS((void)make_transfer_pipeline(spec), ConfigError);
    spec.train.strategy = train::Strategy::Scratch;
    CHECK_NOTHROW((void)make_transfer_pipeline(spec));
}

TEST_CASE("forecast export")
{
    model::ModelConfig c;
    c.pose_dim = 6;
    c.d_model = 8;
    c.layers = 2;
    c.heads = 2;
    c.ff_dim = 16;
    c.classes = 3;
    c.input_frames = 4;
    c.forecast_frames = 3;
    c.dropout = 0.0;
    train::Checkpoint ck;
    ck.config = c;
    ck.params = model::init_params(c, 3);
    for (auto& v : ck.params.pose_head.weight.mutable_data()) v = 0.0;
    for (auto& v : ck.params.pose_head.bias.mutable_data()) v = 0.0;

    std::vector<data::LabeledClip> clips;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 3; ++i) {
        data::LabeledClip clip;
        clip.poses = data::PoseSequence::zeros(2, 7);
        for (auto& v : clip.poses.values) v = u(rng);
        clip.label = i % 3;
        clip.subject_id = i < 2 ? "A" : "B";
        clips.push_back(clip);
    }
    const auto dir = std::filesystem::temp_directory_path() / "gaitcast_export_test";
    std::filesystem::remove_all(dir);
    const auto paths = export_forecasts(ck, clips, dir);
    REQUIRE(paths.size() == 9);
    CHECK(paths[0].filename() == "A_000.input.clip");
    CHECK(paths[3].filename() == "A_001.input.clip");
    CHECK(paths[6].filename() == "B_000.input.clip");
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto input = data::read_clip_file(paths[3 * i]);
        const auto truth = data::read_clip_file(paths[3 * i + 1]);
        const auto pred = data::read_clip_file(paths[3 * i + 2]);
        CHECK(input.poses.frames() == 4);
        CHECK(truth.poses.frames() == 3);
        CHECK(pred.poses.frames() == 3);
        CHECK(input.poses == clips[i].poses.sub(0, 4));
        CHECK(truth.poses == clips[i].poses.sub(4, 7));
        CHECK(pred.label == clips[i].label);
        // A zero pose head leaves only the residual: every row repeats x_t.
        const auto last = clips[i].poses.frame(3);
        for (std::size_t f = 0; f < 3; ++f) {
            const auto row = pred.poses.frame(f);
            CHECK(std::equal(row.begin(), row.end(), last.begin(), last.end()));
        }
    }

    auto wrong = clips;
    wrong[1].poses = data::PoseSequence::zeros(3, 7);
    CHECK_THROWS_AS((void)export_forecasts(ck, wrong, dir), DataError);
    wrong = clips;
    wrong[0].poses = data::PoseSequence::zeros(2, 8);
    CHECK_THROWS_AS((void)export_forecasts(ck, wrong, dir), DataError);
    std::filesystem::remove_all(dir);
}
