#include "gaitcast/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "gaitcast/error.hpp"

namespace gaitcast::eval {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a) { return splitmix(splitmix(base) ^ a); }

std::string fmt(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

bool is_supported_fraction(double f)
{
    return f == 0.25 || f == 0.5 || f == 0.75 || f == kFullFraction;
}

}  // namespace

Metrics macro_metrics(std::span<const int> preds, std::span<const int> labels, int classes)
{
    if (preds.size() != labels.size() || preds.empty()) {
        throw Error("metrics", "macro_metrics: need equal, non-empty prediction and label lists");
    }
    if (classes < 1) {
        throw Error("metrics", "macro_metrics: class count must be positive");
    }
    const auto c = static_cast<std::size_t>(classes);
    std::vector<double> tp(c, 0.0), fp(c, 0.0), fn(c, 0.0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || preds[i] >= classes || labels[i] < 0 || labels[i] >= classes) {
            throw Error("metrics", "macro_metrics: class id outside [0," + std::to_string(classes) + ")");
        }
        const auto p = static_cast<std::size_t>(preds[i]);
        const auto l = static_cast<std::size_t>(labels[i]);
        if (p == l) {
            tp[p] += 1.0;
        } else {
            fp[p] += 1.0;
            fn[l] += 1.0;
        }
    }
    Metrics m;
    for (std::size_t k = 0; k < c; ++k) {
        const double prec = tp[k] + fp[k] > 0.0 ? tp[k] / (tp[k] + fp[k]) : 0.0;
        const double rec = tp[k] + fn[k] > 0.0 ? tp[k] / (tp[k] + fn[k]) : 0.0;
        const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        m.precision += prec;
        m.recall += rec;
        m.f1 += f1;
    }
    m.precision /= static_cast<double>(c);
    m.recall /= static_cast<double>(c);
    m.f1 /= static_cast<double>(c);
    return m;
}

int aggregate_subject(std::span<const std::vector<double>> clip_logits)
{
    if (clip_logits.empty()) {
        throw Error("metrics", "aggregate_subject: no clips");
    }
    const std::size_t c = clip_logits.front().size();
    std::vector<double> mean(c, 0.0);
    for (const auto& l : clip_logits) {
        if (l.size() != c) {
            throw ShapeError("aggregate_subject: clips disagree on class count");
        }
        for (std::size_t k = 0; k < c; ++k) {
            mean[k] += l[k];
        }
    }
    // max_element returns the first maximum, i.e. the lowest class index.
    return static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
}

FoldPlan plan_loocv(std::span<const std::string> subject_ids)
{
    const std::set<std::string> subjects(subject_ids.begin(), subject_ids.end());
    if (subjects.size() < 2) {
        throw DataError("plan_loocv: need at least 2 distinct subjects, got " + std::to_string(subjects.size()));
    }
    FoldPlan plan;
    for (const auto& test : subjects) {
        Fold fold;
        fold.test_subject = test;
        for (const auto& s : subjects) {
            if (s != test) {
                fold.train_subjects.push_back(s);
            }
        }
        plan.push_back(std::move(fold));
    }
    return plan;
}

FoldPlan plan_loocv(const data::DatasetManifest& manifest)
{
    std::vector<std::string> ids;
    for (const auto& e : manifest.entries) {
        ids.push_back(e.subject_id);
    }
    return plan_loocv(ids);
}

std::size_t few_shot_target(double fraction, std::size_t n)
{
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

std::vector<std::size_t> few_shot_sample(std::span<const int> labels, int classes, double fraction,
                                         std::uint64_t seed)
{
    if (labels.empty()) {
        throw DataError("few_shot_sample: empty training set");
    }
    if (!is_supported_fraction(fraction)) {
        throw ConfigError("few_shot_sample: fraction must be one of 0.25, 0.5, 0.75, 1.0");
    }
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    if (fraction == kFullFraction) {
        return all;
    }

    const auto c = static_cast<std::size_t>(classes);
    std::vector<std::vector<std::size_t>> pools(c);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw DataError("few_shot_sample: label " + std::to_string(labels[i]) + " outside [0," +
                            std::to_string(classes) + ")");
        }
        pools[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    std::mt19937_64 rng(seed);
    for (auto& p : pools) {
        std::shuffle(p.begin(), p.end(), rng);
    }

    // Water-filling: each item goes to the least-filled class that still has
    // supply, ties broken by a seeded class order.
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> quota(c, 0);
    for (std::size_t remaining = few_shot_target(fraction, labels.size()); remaining > 0; --remaining) {
        std::size_t best = c;
        for (auto k : order) {
            if (quota[k] < pools[k].size() && (best == c || quota[k] < quota[best])) {
                best = k;
            }
        }
        if (best == c) {
            break;
        }
        ++quota[best];
    }

    std::vector<std::size_t> picked;
    for (std::size_t k = 0; k < c; ++k) {
        picked.insert(picked.end(), pools[k].begin(), pools[k].begin() + static_cast<std::ptrdiff_t>(quota[k]));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

data::DatasetManifest few_shot_sample(const data::DatasetManifest& manifest, double fraction, std::uint64_t seed)
{
    std::vector<int> labels;
    for (const auto& e : manifest.entries) {
        labels.push_back(e.label);
    }
    data::DatasetManifest out = manifest;
    out.entries.clear();
    for (auto i : few_shot_sample(labels, manifest.class_count, fraction, seed)) {
        out.entries.push_back(manifest.entries[i]);
    }
    return out;
}

LoocvResult run_loocv(std::span<const data::Recording> videos, const Pipeline& pipeline, const LoocvOptions& options)
{
    std::vector<std::string> ids;
    for (const auto& v : videos) {
        ids.push_back(v.subject_id);
    }
    const auto plan = plan_loocv(ids);

    LoocvResult result;
    std::vector<int> preds, labels;
    for (std::size_t f = 0; f < plan.size(); ++f) {
        const auto& fold = plan[f];
        std::vector<data::Recording> train;
        std::vector<const data::Recording*> test;
        for (const auto& v : videos) {
            if (v.subject_id == fold.test_subject) {
                test.push_back(&v);
            } else {
                train.push_back(v);
            }
        }
        if (options.fraction != kFullFraction) {
            std::vector<int> train_labels;
            for (const auto& v : train) {
                train_labels.push_back(v.label);
            }
            const auto keep = few_shot_sample(train_labels, options.classes, options.fraction,
                                              derive_seed(options.sample_seed, f));
            std::vector<data::Recording> subset;
            for (auto i : keep) {
                subset.push_back(std::move(train[i]));
            }
            train = std::move(subset);
        }

        std::vector<data::PoseSequence> test_clips;
        const int label = test.front()->label;
        for (const auto* v : test) {
            if (v->label != label) {
                throw DataError("run_loocv: subject " + fold.test_subject + " has recordings with different labels");
            }
            for (auto& w : data::window(v->poses, options.window, options.stride)) {
                test_clips.push_back(std::move(w));
            }
        }
        if (test_clips.empty()) {
            throw DataError("run_loocv: subject " + fold.test_subject + " has no full window of " +
                            std::to_string(options.window) + " frames");
        }

        const auto logits = pipeline(train, test_clips, options.train_seed);
        if (logits.size() != test_clips.size()) {
            throw Error("pipeline", "run_loocv: pipeline returned " + std::to_string(logits.size()) +
                                        " logit vectors for " + std::to_string(test_clips.size()) + " clips");
        }
        SubjectPrediction sp;
        sp.subject_id = fold.test_subject;
        sp.label = label;
        sp.predicted = aggregate_subject(logits);
        sp.mean_logits.assign(logits.front().size(), 0.0);
        for (const auto& l : logits) {
            for (std::size_t k = 0; k < l.size(); ++k) {
                sp.mean_logits[k] += l[k] / static_cast<double>(logits.size());
            }
        }
        preds.push_back(sp.predicted);
        labels.push_back(sp.label);
        result.folds.push_back(std::move(sp));
    }
    result.metrics = macro_metrics(preds, labels, options.classes);
    return result;
}

Summary summarize(std::span<const Metrics> runs)
{
    Summary s;
    if (runs.empty()) {
        return s;
    }
    const double n = static_cast<double>(runs.size());
    for (const auto& m : runs) {
        s.mean.f1 += m.f1 / n;
        s.mean.precision += m.precision / n;
        s.mean.recall += m.recall / n;
    }
    for (const auto& m : runs) {
        s.stddev.f1 += (m.f1 - s.mean.f1) * (m.f1 - s.mean.f1) / n;
        s.stddev.precision += (m.precision - s.mean.precision) * (m.precision - s.mean.precision) / n;
        s.stddev.recall += (m.recall - s.mean.recall) * (m.recall - s.mean.recall) / n;
    }
    s.stddev.f1 = std::sqrt(s.stddev.f1);
    s.stddev.precision = std::sqrt(s.stddev.precision);
    s.stddev.recall = std::sqrt(s.stddev.recall);
    return s;
}

ExperimentReport run_experiment(std::span<const data::Recording> videos, const Pipeline& pipeline,
                                const ExperimentSpec& spec)
{
    if (spec.runs < 1) {
        throw ConfigError("run_experiment: runs must be at least 1");
    }
    if (spec.fractions.empty()) {
        throw ConfigError("run_experiment: no fractions");
    }
    ExperimentReport report;
    for (double fraction : spec.fractions) {
        if (!is_supported_fraction(fraction)) {
            throw ConfigError("run_experiment: unsupported fraction " + fmt(fraction));
        }
        FractionResult fr;
        fr.fraction = fraction;
        std::vector<Metrics> metrics;
        for (int r = 0; r < spec.runs; ++r) {
            LoocvOptions opts;
            opts.classes = spec.classes;
            opts.window = spec.window;
            opts.stride = spec.stride;
            opts.fraction = fraction;
            opts.sample_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r));
            opts.train_seed = spec.seed;
            RunResult rr;
            rr.run = r;
            rr.sample_seed = opts.sample_seed;
            rr.result = run_loocv(videos, pipeline, opts);
            metrics.push_back(rr.result.metrics);
            fr.runs.push_back(std::move(rr));
        }
        fr.summary = summarize(metrics);
        report.fractions.push_back(std::move(fr));
    }
    return report;
}

void write_report(std::ostream& os, const ExperimentReport& report)
{
    os << "# gaitcast experiment report\n";
    // The echoed configuration is indented so its own section headers stay
    // distinct from the report's.
    os << "[config]\n";
    std::istringstream echo(report.config_echo);
    for (std::string line; std::getline(echo, line);) {
        os << "  " << line << '\n';
    }
    os << "[runs]\n";
    for (const auto& fr : report.fractions) {
        for (const auto& rr : fr.runs) {
            os << "run fraction=" << fmt(fr.fraction) << " run=" << rr.run << " sample_seed=" << rr.sample_seed
               << " f1=" << fmt(rr.result.metrics.f1) << " precision=" << fmt(rr.result.metrics.precision)
               << " recall=" << fmt(rr.result.metrics.recall) << '\n';
            for (const auto& sp : rr.result.folds) {
                os << "fold fraction=" << fmt(fr.fraction) << " run=" << rr.run << " subject=" << sp.subject_id
                   << " label=" << sp.label << " predicted=" << sp.predicted << '\n';
            }
        }
    }
    os << "[summary]\n";
    for (const auto& fr : report.fractions) {
        const auto& s = fr.summary;
        os << "fraction=" << fmt(fr.fraction) << " runs=" << fr.runs.size() << " f1_mean=" << fmt(s.mean.f1)
           << " f1_std=" << fmt(s.stddev.f1) << " precision_mean=" << fmt(s.mean.precision)
           << " precision_std=" << fmt(s.stddev.precision) << " recall_mean=" << fmt(s.mean.recall)
           << " recall_std=" << fmt(s.stddev.recall) << '\n';
    }
}

void write_plot_csv(std::ostream& os, const ExperimentReport& report)
{
    os << "fraction,run,f1,precision,recall\n";
    for (const auto& fr : report.fractions) {
        for (const auto& rr : fr.runs) {
            os << fmt(fr.fraction) << ',' << rr.run << ',' << fmt(rr.result.metrics.f1) << ','
               << fmt(rr.result.metrics.precision) << ',' << fmt(rr.result.metrics.recall) << '\n';
        }
    }
}

Pipeline make_transfer_pipeline(TransferPipelineSpec spec)
{
    if (!spec.pretrained && spec.train.strategy != train::Strategy::Scratch) {
        throw ConfigError("pipeline: strategy " + std::string(train::to_string(spec.train.strategy)) +
                          " needs a pretrained checkpoint");
    }
    if (spec.pretrained && spec.train.strategy == train::Strategy::Scratch) {
        throw ConfigError("pipeline: scratch training ignores the pretrained checkpoint; drop one of them");
    }
    return [spec = std::move(spec)](std::span<const data::Recording> train_videos,
                                    std::span<const data::PoseSequence> test_clips, std::uint64_t seed) {
        const auto clips = data::make_clips(train_videos, spec.window, spec.stride);
        auto tc = spec.train;
        tc.seed = seed;
        train::Checkpoint trained;
        if (spec.pretrained) {
            trained = train::finetune(*spec.pretrained, clips, spec.classes, tc);
        } else {
            auto config = spec.model;
            config.classes = static_cast<std::size_t>(spec.classes);
            trained = train::train_scratch(clips, config, tc);
        }
        std::vector<std::vector<double>> logits;
        logits.reserve(test_clips.size());
        for (const auto& clip : test_clips) {
            logits.push_back(train::predict_logits(trained.config, trained.params, clip));
        }
        return logits;
    };
}

std::vector<std::filesystem::path> export_forecasts(const train::Checkpoint& checkpoint,
                                                    std::span<const data::LabeledClip> clips,
                                                    const std::filesystem::path& out_dir)
{
    const auto& config = checkpoint.config;
    const std::size_t t = config.input_frames;
    const std::size_t m = config.forecast_frames;
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    std::map<std::string, int> per_subject;
    for (const auto& clip : clips) {
        if (clip.poses.dims() != config.pose_dim) {
            throw DataError("export_forecasts: clip pose dimension " + std::to_string(clip.poses.dims()) +
                            " does not match checkpoint pose dimension " + std::to_string(config.pose_dim));
        }
        if (clip.poses.frames() != t + m) {
            throw DataError("export_forecasts: clip has " + std::to_string(clip.poses.frames()) +
                            " frames, checkpoint expects " + std::to_string(t + m));
        }
        auto [input, truth] = data::split_input_target(clip.poses, t);
        const auto out = model::forward(train::pose_tensor(input), config, checkpoint.params);
        const auto& last = out.per_layer_preds.back();
        data::PoseSequence pred = data::PoseSequence::zeros(clip.poses.joints, m, clip.poses.frame_rate);
        std::copy(last.data().begin(), last.data().end(), pred.values.begin());

        char index[16];
        std::snprintf(index, sizeof index, "%03d", per_subject[clip.subject_id]++);
        const std::string stem = clip.subject_id + "_" + index;
        for (const auto& [role, seq] : {std::pair<const char*, const data::PoseSequence*>{"input", &input},
                                        {"truth", &truth},
                                        {"pred", &pred}}) {
            const auto path = out_dir / (stem + "." + role + ".clip");
            data::write_clip_file(path, *seq, clip.label, clip.subject_id);
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace gaitcast::eval
