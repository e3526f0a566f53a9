#include "cli.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "gaitcast/error.hpp"
#include "gaitcast/evaluation.hpp"
#include "gaitcast/gradcheck.hpp"
#include "gaitcast/run_config.hpp"

namespace gaitcast::cli {

namespace fs = std::filesystem;

namespace {

// Values collected from the command line. Only options the user actually
// passed override the configuration file.
struct Flags {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string manifest;
    std::string init;
    std::string strategy;
    std::string stage_epochs;
    double fraction = 1.0;
    int runs = 3;

    const CLI::App* command = nullptr;  // the subcommand that was invoked

    bool given(const char* name) const
    {
        for (const auto* opt : command->get_options()) {
            if (opt->check_lname(name + 2)) {
                return opt->count() > 0;
            }
        }
        return false;
    }
};

std::string absolute(const std::string& path)
{
    return path.empty() ? path : fs::absolute(path).lexically_normal().string();
}

std::string fmt(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

RunConfig build_config(const Flags& flags, bool manifest_is_ingest)
{
    RunConfig config = flags.config.empty() ? RunConfig{} : RunConfig::load(flags.config);
    if (flags.given("--seed")) {
        config.seed = flags.seed;
    }
    if (flags.given("--manifest")) {
        (manifest_is_ingest ? config.ingest.manifest : config.data.manifest) = flags.manifest;
    }
    if (flags.given("--init")) {
        config.experiment.pretrained = flags.init;
    }
    if (flags.given("--strategy")) {
        config.train.strategy = train::parse_strategy(flags.strategy);
    }
    if (flags.given("--stage-epochs")) {
        const auto comma = flags.stage_epochs.find(',');
        const std::string_view text = flags.stage_epochs;
        int a = 0;
        int b = 0;
        const bool ok =
            comma != std::string::npos &&
            std::from_chars(text.data(), text.data() + comma, a).ptr == text.data() + comma &&
            std::from_chars(text.data() + comma + 1, text.data() + text.size(), b).ptr == text.data() + text.size();
        if (!ok) {
            throw ConfigError("--stage-epochs expects two comma-separated integers, got '" + flags.stage_epochs + "'");
        }
        config.train.stage_split = {a, b};
        // Explicit stages define the length of a two-stage run.
        if (config.train.strategy == train::Strategy::FineBothThenClass) {
            config.train.epochs = a + b;
            config.epochs_set = true;
        }
    }
    if (flags.given("--fraction")) {
        config.experiment.fractions = {flags.fraction};
    }
    if (flags.given("--runs")) {
        config.experiment.runs = flags.runs;
    }
    config.data.manifest = absolute(config.data.manifest);
    config.ingest.manifest = absolute(config.ingest.manifest);
    config.experiment.pretrained = absolute(config.experiment.pretrained);
    return config;
}

fs::path prepare_out(const Flags& flags, const RunConfig& config)
{
    const fs::path out = flags.out;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    }
    std::ofstream echo(out / "config.ini");
    if (!(echo << config.echo())) {
        throw IoError("cannot write " + (out / "config.ini").string());
    }
    return out;
}

std::ofstream open_output(const fs::path& path)
{
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    return os;
}

struct Dataset {
    data::DatasetManifest manifest;
    std::vector<data::Recording> recordings;
};

Dataset load_dataset(const RunConfig& config)
{
    if (config.data.manifest.empty()) {
        throw ConfigError("no dataset manifest; pass --manifest or set [data] manifest");
    }
    Dataset ds;
    const fs::path path = config.data.manifest;
    ds.manifest = data::read_manifest(path);
    ds.recordings = data::load_recordings(ds.manifest, path.parent_path(), config.data.normalize);
    return ds;
}

void check_window(const model::ModelConfig& mc, std::size_t window)
{
    if (mc.input_frames + mc.forecast_frames != window) {
        throw ConfigError("input_frames + forecast_frames = " + std::to_string(mc.input_frames + mc.forecast_frames) +
                          " must equal data.window = " + std::to_string(window));
    }
}

model::ModelConfig model_for(const RunConfig& config, const data::DatasetManifest& manifest)
{
    auto mc = config.model;
    mc.pose_dim = 3 * manifest.joints;
    mc.classes = static_cast<std::size_t>(manifest.class_count);
    mc.validate();
    check_window(mc, config.data.window);
    return mc;
}

std::optional<train::Checkpoint> load_pretrained(const RunConfig& config)
{
    if (config.experiment.pretrained.empty()) {
        return std::nullopt;
    }
    return train::Checkpoint::load(config.experiment.pretrained);
}

// Writes one log line per epoch as training runs.
class TrainLog {
public:
    explicit TrainLog(const fs::path& path) : os_(open_output(path))
    {
        os_ << "epoch\tstage\tclassification\tforecast\ttotal\tseconds\n";
    }
    train::EpochCallback callback()
    {
        return [this](const train::EpochRecord& record, double seconds) {
            os_ << train::format_log_line(record, seconds) << '\n';
            os_.flush();
        };
    }

private:
    std::ofstream os_;
};

void report_training(std::ostream& out, const std::string& what, const train::Checkpoint& ckpt, const fs::path& path)
{
    out << what << ": " << ckpt.epoch << " epochs";
    if (!ckpt.history.empty()) {
        out << ", final total loss " << fmt(ckpt.history.back().total);
    }
    out << ", checkpoint " << path.string() << '\n';
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Flags& flags, std::ostream& out)
{
    auto config = build_config(flags, false);
    const auto dir = prepare_out(flags, config);
    auto spec = config.synth;
    spec.seed = config.seed;
    const auto ds = data::synth_dataset(spec);
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        const auto& rec = ds.recordings[i];
        data::write_clip_file(dir / ds.manifest.entries[i].path, rec.poses, rec.label, rec.subject_id);
    }
    data::write_manifest(dir / "manifest.tsv", ds.manifest);
    out << "synth: " << ds.recordings.size() << " recordings in " << spec.classes << " classes, manifest "
        << (dir / "manifest.tsv").string() << '\n';
    return 0;
}

std::vector<int> parse_scores(const std::string& field, std::size_t line)
{
    std::vector<int> scores;
    std::string_view rest = field;
    while (true) {
        const auto comma = rest.find(',');
        const auto token = rest.substr(0, comma);
        int v = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
            throw ParseError("ingest manifest line " + std::to_string(line) + ": bad label '" + field + "'");
        }
        scores.push_back(v);
        if (comma == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(comma + 1);
    }
    return scores;
}

int cmd_ingest(const Flags& flags, std::ostream& out)
{
    auto config = build_config(flags, true);
    if (config.ingest.manifest.empty()) {
        throw ConfigError("no raw skeleton manifest; pass --manifest or set [ingest] manifest");
    }
    const fs::path raw_path = config.ingest.manifest;
    std::ifstream in(raw_path);
    if (!in) {
        throw IoError("cannot open " + raw_path.string());
    }
    const auto dir = prepare_out(flags, config);
    const bool scores = config.ingest.labels == "scores";

    data::DatasetManifest manifest;
    manifest.joints = config.ingest.joints;
    int max_label = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream ls(line);
        for (std::string f; std::getline(ls, f, '\t');) {
            fields.push_back(f);
        }
        if (fields.size() != 4) {
            throw ParseError("ingest manifest line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                             std::to_string(fields.size()));
        }
        const auto values = parse_scores(fields[2], line_no);
        int label = 0;
        if (scores) {
            label = data::majority_label(values, config.seed ^ (0x9e3779b97f4a7c15ull * line_no));
        } else if (values.size() == 1 && values[0] >= 0) {
            label = values[0];
        } else {
            throw ParseError("ingest manifest line " + std::to_string(line_no) +
                             ": class labels must be one non-negative integer (set [ingest] labels = scores for rater "
                             "scores)");
        }
        fs::path source = fields[0];
        if (source.is_relative()) {
            source = raw_path.parent_path() / source;
        }
        auto poses = data::read_skeleton_file(source, config.ingest.joints);
        if (config.data.normalize) {
            poses = data::normalize(poses);
        }
        char prefix[16];
        std::snprintf(prefix, sizeof prefix, "%04zu_", manifest.entries.size());
        const std::string name = prefix + source.stem().string() + ".clip";
        data::write_clip_file(dir / name, poses, label, fields[1]);
        manifest.entries.push_back({name, fields[1], label, fields[3]});
        max_label = std::max(max_label, label);
    }
    manifest.class_count = scores ? data::kSeverityClasses : std::max(2, max_label + 1);
    manifest.validate();
    data::write_manifest(dir / "manifest.tsv", manifest);
    out << "ingest: " << manifest.entries.size() << " recordings, manifest " << (dir / "manifest.tsv").string()
        << '\n';
    return 0;
}

int cmd_pretrain(const Flags& flags, std::ostream& out)
{
    auto config = build_config(flags, false);
    config.train.strategy = train::Strategy::Pretrain;
    config.resolve();
    const auto ds = load_dataset(config);
    const auto mc = model_for(config, ds.manifest);
    const auto dir = prepare_out(flags, config);
    const auto clips = data::make_clips(ds.recordings, config.data.window, config.data.stride);
    TrainLog log(dir / "train.log");
    auto ckpt = train::pretrain(clips, mc, config.train, log.callback());
    ckpt.config_echo = config.echo();
    ckpt.save(dir / "checkpoint.gck");
    report_training(out, "pretrain", ckpt, dir / "checkpoint.gck");
    return 0;
}

int cmd_finetune(const Flags& flags, std::ostream& out)
{
    auto config = build_config(flags, false);
    if (config.train.strategy == train::Strategy::Pretrain) {
        throw ConfigError("finetune needs a fine-tuning strategy, not pretrain");
    }
    config.resolve();
    const auto ds = load_dataset(config);
    const auto pretrained = load_pretrained(config);
    const bool scratch = config.train.strategy == train::Strategy::Scratch;
    if (scratch && pretrained) {
        throw ConfigError("strategy scratch trains from random weights; drop the pretrained checkpoint");
    }
    if (!scratch && !pretrained) {
        throw ConfigError("strategy " + std::string(train::to_string(config.train.strategy)) +
                          " needs a pretrained checkpoint; pass --init");
    }
    const auto dir = prepare_out(flags, config);
    const auto clips = data::make_clips(ds.recordings, config.data.window, config.data.stride);
    TrainLog log(dir / "train.log");
    train::Checkpoint ckpt;
    if (scratch) {
        ckpt = train::train_scratch(clips, model_for(config, ds.manifest), config.train, log.callback());
    } else {
        check_window(pretrained->config, config.data.window);
        ckpt = train::finetune(*pretrained, clips, ds.manifest.class_count, config.train, log.callback());
    }
    ckpt.config_echo = config.echo();
    ckpt.save(dir / "checkpoint.gck");
    report_training(out, "finetune " + std::string(train::to_string(config.train.strategy)), ckpt,
                    dir / "checkpoint.gck");
    return 0;
}

int run_evaluation(const Flags& flags, std::ostream& out, bool single_run)
{
    auto config = build_config(flags, false);
    if (single_run) {
        if (!flags.given("--fraction")) {
            config.experiment.fractions = {eval::kFullFraction};
        }
        config.experiment.runs = 1;
    }
    if (config.train.strategy == train::Strategy::Pretrain) {
        throw ConfigError("evaluation needs a fine-tuning strategy, not pretrain");
    }
    config.resolve();
    const auto ds = load_dataset(config);

    eval::TransferPipelineSpec ps;
    ps.pretrained = load_pretrained(config);
    ps.train = config.train;
    ps.window = config.data.window;
    ps.stride = config.data.stride;
    ps.classes = ds.manifest.class_count;
    if (ps.pretrained) {
        check_window(ps.pretrained->config, config.data.window);
    } else {
        ps.model = model_for(config, ds.manifest);
    }
    const auto pipeline = eval::make_transfer_pipeline(std::move(ps));
    const auto dir = prepare_out(flags, config);

    eval::ExperimentSpec spec;
    spec.fractions = config.experiment.fractions;
    spec.runs = config.experiment.runs;
    spec.seed = config.seed;
    spec.classes = ds.manifest.class_count;
    spec.window = config.data.window;
    spec.stride = config.data.stride;
    auto report = eval::run_experiment(ds.recordings, pipeline, spec);
    report.config_echo = config.echo();

    auto report_os = open_output(dir / "report.txt");
    eval::write_report(report_os, report);
    auto csv_os = open_output(dir / "plot.csv");
    eval::write_plot_csv(csv_os, report);
    for (const auto& fr : report.fractions) {
        out << "fraction " << fmt(fr.fraction) << ": folds " << fr.runs.front().result.folds.size() << ", runs "
            << fr.runs.size() << ", f1 " << fmt(fr.summary.mean.f1) << " +- " << fmt(fr.summary.stddev.f1)
            << ", precision " << fmt(fr.summary.mean.precision) << ", recall " << fmt(fr.summary.mean.recall) << '\n';
    }
    out << "report " << (dir / "report.txt").string() << '\n';
    return 0;
}

int cmd_forecast(const Flags& flags, std::ostream& out)
{
    auto config = build_config(flags, false);
    const auto pretrained = load_pretrained(config);
    if (!pretrained) {
        throw ConfigError("forecast needs a checkpoint; pass --init");
    }
    const auto ds = load_dataset(config);
    const auto window = pretrained->config.input_frames + pretrained->config.forecast_frames;
    config.data.window = window;
    const auto dir = prepare_out(flags, config);
    const auto clips = data::make_clips(ds.recordings, window, config.data.stride);
    const auto written = eval::export_forecasts(*pretrained, clips, dir);
    out << "forecast: " << clips.size() << " clips, " << written.size() << " files in " << dir.string() << '\n';
    return 0;
}

int cmd_check_grad(const Flags& flags, std::ostream& out)
{
    const auto config = build_config(flags, false);
    const auto& gc = config.gradcheck;
    const auto report = gradcheck::check_model(gc.model, config.seed, gc.step);
    const bool ok = report.max_relative_error <= gc.tolerance;
    out << "max relative error " << fmt(report.max_relative_error) << " at " << report.worst_parameter << "["
        << report.worst_index << "] over " << report.entries << " entries (tolerance " << fmt(gc.tolerance)
        << "): " << (ok ? "ok" : "exceeded") << '\n';
    return ok ? 0 : 1;
}

// Messages go out on one line so callers can parse `error: <category>: ...`.
std::string one_line(std::string text)
{
    for (auto& c : text) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return text;
}

std::string config_footer()
{
    std::string text = "Configuration keys (section.key = default):\n";
    for (const auto& [key, value] : documented_defaults()) {
        text += "  " + key + " = " + (value.empty() ? "\"\"" : value) + "\n";
    }
    return text;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"gaitcast: pose forecasting and gait severity classification"};
    app.name("gaitcast");
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Print help for every command");
    app.footer(config_footer());

    Flags flags;
    const auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Run configuration file")->check(CLI::ExistingFile);
    };
    const auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", flags.seed, "Seed for every random choice (run.seed)")
                             ->default_str("0");
    };
    const auto add_out = [&](CLI::App* sub) {
        sub->add_option("--out", flags.out, "Output directory")->required();
    };
    const auto add_manifest = [&](CLI::App* sub, const char* what) {
        sub->add_option("--manifest", flags.manifest, what)->default_str("\"\"");
    };
    const auto add_init = [&](CLI::App* sub) {
        sub->add_option("--init", flags.init, "Pretrained checkpoint (experiment.pretrained)")
                             ->check(CLI::ExistingFile)
                             ->default_str("\"\"");
    };
    const auto add_strategy = [&](CLI::App* sub) {
        sub->add_option("--strategy", flags.strategy, "Fine-tuning strategy (train.strategy)")
                ->check(CLI::IsMember({"class", "both", "both-then-class", "scratch"}))
                ->default_str("both-then-class");
    };
    const auto add_stages = [&](CLI::App* sub) {
        sub->add_option("--stage-epochs", flags.stage_epochs,
                        "Epochs of the two both-then-class stages (train.stage_epochs)")
            ->default_str("50,50");
    };
    const auto add_fraction = [&](CLI::App* sub, const char* def) {
        sub->add_option("--fraction", flags.fraction, "Share of training videos kept per fold")
                ->check(CLI::IsMember({0.25, 0.5, 0.75, 1.0}))
                ->default_str(def);
    };

    const char* data_manifest = "Clip manifest (data.manifest)";

    auto* synth = app.add_subcommand("synth", "Generate a synthetic gait dataset");
    add_config(synth);
    add_seed(synth);
    add_out(synth);

    auto* ingest = app.add_subcommand("ingest", "Convert NTU-style skeleton files into normalized clip files");
    add_config(ingest);
    add_seed(ingest);
    add_out(ingest);
    add_manifest(ingest, "Raw skeleton manifest (ingest.manifest)");

    auto* pretrain = app.add_subcommand("pretrain", "Train classification and forecasting jointly");
    add_config(pretrain);
    add_seed(pretrain);
    add_out(pretrain);
    add_manifest(pretrain, data_manifest);

    auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint, or train from scratch");
    add_config(finetune);
    add_seed(finetune);
    add_out(finetune);
    add_manifest(finetune, data_manifest);
    add_init(finetune);
    add_strategy(finetune);
    add_stages(finetune);

    auto* evaluate = app.add_subcommand("eval", "Leave-one-subject-out evaluation");
    add_config(evaluate);
    add_seed(evaluate);
    add_out(evaluate);
    add_manifest(evaluate, data_manifest);
    add_init(evaluate);
    add_strategy(evaluate);
    add_stages(evaluate);
    add_fraction(evaluate, "1");

    auto* fewshot = app.add_subcommand("fewshot", "Repeated evaluation on class-balanced training subsets");
    add_config(fewshot);
    add_seed(fewshot);
    add_out(fewshot);
    add_manifest(fewshot, data_manifest);
    add_init(fewshot);
    add_strategy(fewshot);
    add_stages(fewshot);
    add_fraction(fewshot, "0.25,0.5,0.75,1");
    fewshot->add_option("--runs", flags.runs, "Repetitions per fraction (experiment.runs)")
                         ->check(CLI::PositiveNumber)
                         ->default_str("3");

    auto* forecast = app.add_subcommand("forecast", "Export observed, true and predicted poses for plotting");
    add_config(forecast);
    add_out(forecast);
    add_manifest(forecast, data_manifest);
    add_init(forecast);

    auto* check_grad = app.add_subcommand("check-grad", "Compare model gradients with finite differences");
    add_config(check_grad);
    add_seed(check_grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << one_line(e.what()) << '\n';
        return 2;
    }

    flags.command = app.get_subcommands().front();
    try {
        if (*synth) return cmd_synth(flags, out);
        if (*ingest) return cmd_ingest(flags, out);
        if (*pretrain) return cmd_pretrain(flags, out);
        if (*finetune) return cmd_finetune(flags, out);
        if (*evaluate) return run_evaluation(flags, out, true);
        if (*fewshot) return run_evaluation(flags, out, false);
        if (*forecast) return cmd_forecast(flags, out);
        if (*check_grad) return cmd_check_grad(flags, out);
    } catch (const Error& e) {
        err << "error: " << e.category() << ": " << one_line(e.what()) << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << '\n';
        return 2;
    }
    return 2;
}

}  // namespace gaitcast::cli
