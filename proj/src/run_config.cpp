#include "gaitcast/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gaitcast/error.hpp"

namespace gaitcast::cli {

namespace {

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
bool parse_int(std::string_view s, T& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string_view::npos) {
            comma = s.size();
        }
        out.push_back(trim(s.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

// Each key knows how to read itself into a RunConfig and print itself back.
struct Key {
    std::string section;
    std::string name;
    std::function<std::string(RunConfig&, const std::string&)> set;  // empty string on success
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Key size_key(std::string section, std::string name, T RunConfig::* group, std::size_t T::* field,
             std::size_t min_value = 0)
{
    return {section, name,
            [group, field, min_value](RunConfig& c, const std::string& v) -> std::string {
                std::size_t out = 0;
                if (!parse_int(v, out) || out < min_value) {
                    return "expected an integer >= " + std::to_string(min_value);
                }
                (c.*group).*field = out;
                return {};
            },
            [group, field](const RunConfig& c) { return std::to_string((c.*group).*field); }};
}

template <class T>
Key int_key(std::string section, std::string name, T RunConfig::* group, int T::* field, int min_value)
{
    return {section, name,
            [group, field, min_value](RunConfig& c, const std::string& v) -> std::string {
                int out = 0;
                if (!parse_int(v, out) || out < min_value) {
                    return "expected an integer >= " + std::to_string(min_value);
                }
                (c.*group).*field = out;
                return {};
            },
            [group, field](const RunConfig& c) { return std::to_string((c.*group).*field); }};
}

template <class T>
Key double_key(std::string section, std::string name, T RunConfig::* group, double T::* field)
{
    return {section, name,
            [group, field](RunConfig& c, const std::string& v) -> std::string {
                double out = 0;
                if (!parse_double(v, out)) {
                    return "expected a real number";
                }
                (c.*group).*field = out;
                return {};
            },
            [group, field](const RunConfig& c) { return fmt_double((c.*group).*field); }};
}

template <class T>
Key string_key(std::string section, std::string name, T RunConfig::* group, std::string T::* field)
{
    return {section, name,
            [group, field](RunConfig& c, const std::string& v) -> std::string {
                (c.*group).*field = v;
                return {};
            },
            [group, field](const RunConfig& c) { return (c.*group).*field; }};
}

template <class T>
Key bool_key(std::string section, std::string name, T RunConfig::* group, bool T::* field)
{
    return {section, name,
            [group, field](RunConfig& c, const std::string& v) -> std::string {
                if (v == "true") {
                    (c.*group).*field = true;
                } else if (v == "false") {
                    (c.*group).*field = false;
                } else {
                    return "expected true or false";
                }
                return {};
            },
            [group, field](const RunConfig& c) { return std::string((c.*group).*field ? "true" : "false"); }};
}

std::vector<Key> model_keys(const std::string& section, model::ModelConfig RunConfig::* m, bool with_shape_keys)
{
    using MC = model::ModelConfig;
    std::vector<Key> keys;
    if (with_shape_keys) {
        keys.push_back(size_key<MC>(section, "pose_dim", m, &MC::pose_dim, 1));
        keys.push_back(size_key<MC>(section, "classes", m, &MC::classes, 2));
    }
    keys.push_back(size_key<MC>(section, "d_model", m, &MC::d_model, 1));
    keys.push_back(size_key<MC>(section, "layers", m, &MC::layers, 1));
    keys.push_back(size_key<MC>(section, "heads", m, &MC::heads, 1));
    keys.push_back(size_key<MC>(section, "ff_dim", m, &MC::ff_dim, 1));
    keys.push_back(size_key<MC>(section, "input_frames", m, &MC::input_frames, 1));
    keys.push_back(size_key<MC>(section, "forecast_frames", m, &MC::forecast_frames, 1));
    if (!with_shape_keys) {
        keys.push_back(double_key<MC>(section, "dropout", m, &MC::dropout));
    }
    return keys;
}

const std::vector<Key>& registry()
{
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        k.push_back({"run", "seed",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         return parse_int(v, c.seed) ? "" : "expected a non-negative integer";
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }});

        for (auto& key : model_keys("model", &RunConfig::model, false)) {
            k.push_back(std::move(key));
        }

        using TC = train::TrainConfig;
        k.push_back({"train", "epochs",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         if (!parse_int(v, c.train.epochs) || c.train.epochs < 1) {
                             return "expected an integer >= 1";
                         }
                         c.epochs_set = true;
                         return {};
                     },
                     [](const RunConfig& c) { return std::to_string(c.train.epochs); }});
        k.push_back(double_key<TC>("train", "learning_rate", &RunConfig::train, &TC::learning_rate));
        k.push_back(int_key<TC>("train", "batch_size", &RunConfig::train, &TC::batch_size, 1));
        k.push_back({"train", "strategy",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         try {
                             c.train.strategy = train::parse_strategy(v);
                         } catch (const ConfigError& e) {
                             return e.what();
                         }
                         return {};
                     },
                     [](const RunConfig& c) { return std::string(train::to_string(c.train.strategy)); }});
        k.push_back({"train", "stage_epochs",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         const auto parts = split_list(v);
                         if (parts.size() != 2 || !parse_int(parts[0], c.train.stage_split[0]) ||
                             !parse_int(parts[1], c.train.stage_split[1])) {
                             return "expected two comma-separated integers";
                         }
                         return {};
                     },
                     [](const RunConfig& c) {
                         return std::to_string(c.train.stage_split[0]) + "," + std::to_string(c.train.stage_split[1]);
                     }});
        k.push_back(bool_key<TC>("train", "class_stage_trains_encoder", &RunConfig::train,
                                 &TC::class_stage_trains_encoder));
        k.push_back({"train", "beta1",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         return parse_double(v, c.train.optimizer.beta1) ? "" : "expected a real number";
                     },
                     [](const RunConfig& c) { return fmt_double(c.train.optimizer.beta1); }});
        k.push_back({"train", "beta2",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         return parse_double(v, c.train.optimizer.beta2) ? "" : "expected a real number";
                     },
                     [](const RunConfig& c) { return fmt_double(c.train.optimizer.beta2); }});
        k.push_back({"train", "epsilon",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         return parse_double(v, c.train.optimizer.epsilon) ? "" : "expected a real number";
                     },
                     [](const RunConfig& c) { return fmt_double(c.train.optimizer.epsilon); }});
        k.push_back({"train", "weight_decay",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         return parse_double(v, c.train.optimizer.weight_decay) ? "" : "expected a real number";
                     },
                     [](const RunConfig& c) { return fmt_double(c.train.optimizer.weight_decay); }});

        k.push_back(string_key<DataSection>("data", "manifest", &RunConfig::data, &DataSection::manifest));
        k.push_back(size_key<DataSection>("data", "window", &RunConfig::data, &DataSection::window, 2));
        k.push_back(size_key<DataSection>("data", "stride", &RunConfig::data, &DataSection::stride, 1));
        k.push_back(bool_key<DataSection>("data", "normalize", &RunConfig::data, &DataSection::normalize));

        using SS = data::SynthSpec;
        k.push_back(int_key<SS>("synth", "classes", &RunConfig::synth, &SS::classes, 2));
        k.push_back(int_key<SS>("synth", "clips_per_class", &RunConfig::synth, &SS::clips_per_class, 1));
        k.push_back(size_key<SS>("synth", "joints", &RunConfig::synth, &SS::joints, 1));
        k.push_back(size_key<SS>("synth", "frames", &RunConfig::synth, &SS::frames, 1));
        k.push_back(double_key<SS>("synth", "frame_rate", &RunConfig::synth, &SS::frame_rate));
        k.push_back(string_key<SS>("synth", "subject_prefix", &RunConfig::synth, &SS::subject_prefix));

        k.push_back(string_key<IngestSection>("ingest", "manifest", &RunConfig::ingest, &IngestSection::manifest));
        k.push_back(size_key<IngestSection>("ingest", "joints", &RunConfig::ingest, &IngestSection::joints, 1));
        k.push_back({"ingest", "labels",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         if (v != "class" && v != "scores") {
                             return "expected class or scores";
                         }
                         c.ingest.labels = v;
                         return {};
                     },
                     [](const RunConfig& c) { return c.ingest.labels; }});

        using ES = ExperimentSection;
        k.push_back(string_key<ES>("experiment", "pretrained", &RunConfig::experiment, &ES::pretrained));
        k.push_back({"experiment", "fractions",
                     [](RunConfig& c, const std::string& v) -> std::string {
                         std::vector<double> out;
                         for (const auto& p : split_list(v)) {
                             double f = 0;
                             if (!parse_double(p, f) || !(f == 0.25 || f == 0.5 || f == 0.75 || f == 1.0)) {
                                 return "expected a comma-separated subset of 0.25,0.5,0.75,1";
                             }
                             out.push_back(f);
                         }
                         c.experiment.fractions = std::move(out);
                         return {};
                     },
                     [](const RunConfig& c) {
                         std::string s;
                         for (double f : c.experiment.fractions) {
                             s += (s.empty() ? "" : ",") + fmt_double(f);
                         }
                         return s;
                     }});
        k.push_back(int_key<ES>("experiment", "runs", &RunConfig::experiment, &ES::runs, 1));

        for (auto& key : [] {
                 std::vector<Key> g;
                 using MC = model::ModelConfig;
                 auto field = [](std::string name, std::size_t MC::* f, std::size_t min_value) {
                     return Key{"gradcheck", name,
                                [f, min_value](RunConfig& c, const std::string& v) -> std::string {
                                    std::size_t out = 0;
                                    if (!parse_int(v, out) || out < min_value) {
                                        return "expected an integer >= " + std::to_string(min_value);
                                    }
                                    c.gradcheck.model.*f = out;
                                    return {};
                                },
                                [f](const RunConfig& c) { return std::to_string(c.gradcheck.model.*f); }};
                 };
                 g.push_back(field("pose_dim", &MC::pose_dim, 1));
                 g.push_back(field("d_model", &MC::d_model, 1));
                 g.push_back(field("layers", &MC::layers, 1));
                 g.push_back(field("heads", &MC::heads, 1));
                 g.push_back(field("ff_dim", &MC::ff_dim, 1));
                 g.push_back(field("classes", &MC::classes, 2));
                 g.push_back(field("input_frames", &MC::input_frames, 1));
                 g.push_back(field("forecast_frames", &MC::forecast_frames, 1));
                 return g;
             }()) {
            k.push_back(std::move(key));
        }
        k.push_back(double_key<GradCheckSection>("gradcheck", "step", &RunConfig::gradcheck, &GradCheckSection::step));
        k.push_back(double_key<GradCheckSection>("gradcheck", "tolerance", &RunConfig::gradcheck,
                                                 &GradCheckSection::tolerance));
        return k;
    }();
    return keys;
}

}  // namespace

RunConfig::RunConfig()
{
    train.strategy = train::Strategy::FineBothThenClass;
    synth.classes = 4;
    synth.clips_per_class = 8;
    synth.joints = data::kNtuJoints;
    synth.frames = data::kDefaultWindow;

    auto& g = gradcheck.model;
    g.pose_dim = 6;
    g.d_model = 8;
    g.layers = 2;
    g.heads = 2;
    g.ff_dim = 16;
    g.classes = 3;
    g.input_frames = 4;
    g.forecast_frames = 3;
    g.dropout = 0.0;
}

RunConfig RunConfig::parse(std::string_view text)
{
    std::map<std::pair<std::string, std::string>, const Key*> lookup;
    std::map<std::string, bool> sections;
    for (const auto& k : registry()) {
        lookup[{k.section, k.name}] = &k;
        sections[k.section] = true;
    }

    RunConfig config;
    std::vector<std::string> problems;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) {
            continue;
        }
        const std::string where = "line " + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') {
                problems.push_back(where + ": malformed section header '" + line + "'");
                continue;
            }
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (!sections.count(section)) {
                problems.push_back(where + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back(where + ": expected key = value");
            continue;
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (section.empty()) {
            problems.push_back(where + ": key '" + key + "' outside any section");
            continue;
        }
        if (!sections.count(section)) {
            continue;  // already reported
        }
        const auto it = lookup.find({section, key});
        if (it == lookup.end()) {
            problems.push_back(where + ": unknown key '" + key + "' in [" + section + "]");
            continue;
        }
        if (auto [pos, fresh] = seen.emplace(std::make_pair(section, key), line_no); !fresh) {
            problems.push_back(where + ": duplicate key '" + key + "' in [" + section + "] (first on line " +
                               std::to_string(pos->second) + ")");
            continue;
        }
        if (auto err = it->second->set(config, value); !err.empty()) {
            problems.push_back(where + ": " + section + "." + key + ": " + err);
        }
    }

    if (!problems.empty()) {
        std::string msg = std::to_string(problems.size()) + " configuration problem(s): ";
        for (std::size_t i = 0; i < problems.size(); ++i) {
            msg += (i ? "; " : "") + problems[i];
        }
        throw ConfigError(msg);
    }
    return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    auto config = parse(ss.str());
    const auto base = path.parent_path();
    for (auto* p : {&config.data.manifest, &config.ingest.manifest, &config.experiment.pretrained}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) {
            *p = (base / *p).lexically_normal().string();
        }
    }
    return config;
}

void RunConfig::resolve()
{
    train.seed = seed;
    if (!epochs_set) {
        if (train.strategy == train::Strategy::Scratch) {
            train.epochs = train::kScratchEpochs;
        } else if (train.strategy == train::Strategy::FineBothThenClass) {
            train.epochs = train.stage_split[0] + train.stage_split[1];
        }
        epochs_set = true;
    }
    train.validate();
}

std::string RunConfig::echo() const
{
    std::string out;
    std::string section;
    for (const auto& k : registry()) {
        if (k.section != section) {
            section = k.section;
            out += "[" + section + "]\n";
        }
        out += k.name + " = " + k.get(*this) + "\n";
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> documented_defaults()
{
    const RunConfig defaults;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : registry()) {
        out.emplace_back(k.section + "." + k.name, k.get(defaults));
    }
    return out;
}

}  // namespace gaitcast::cli
