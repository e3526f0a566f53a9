#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gaitcast/error.hpp"
#include "gaitcast/training.hpp"

namespace gaitcast::train {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'G', 'A', 'I', 'T', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::string& out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

template <class T>
T get_le(std::string_view bytes, std::size_t& pos)
{
    if (pos + sizeof(T) > bytes.size()) {
        throw ParseError("checkpoint: truncated at byte " + std::to_string(pos));
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    pos += sizeof(T);
    return value;
}

json config_to_json(const model::ModelConfig& c)
{
    return json{{"pose_dim", c.pose_dim},   {"d_model", c.d_model},
                {"layers", c.layers},       {"heads", c.heads},
                {"ff_dim", c.ff_dim},       {"classes", c.classes},
                {"input_frames", c.input_frames}, {"forecast_frames", c.forecast_frames},
                {"dropout", c.dropout}};
}

model::ModelConfig config_from_json(const json& j)
{
    model::ModelConfig c;
    c.pose_dim = j.at("pose_dim").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ff_dim = j.at("ff_dim").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.input_frames = j.at("input_frames").get<std::size_t>();
    c.forecast_frames = j.at("forecast_frames").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

std::string Checkpoint::serialize() const
{
    json header;
    header["format_version"] = kFormatVersion;
    header["config"] = config_to_json(config);
    header["epoch"] = epoch;
    header["config_echo"] = config_echo;
    json hist = json::array();
    for (const auto& r : history) {
        hist.push_back({{"epoch", r.epoch},
                        {"stage", r.stage},
                        {"classification", r.classification},
                        {"forecast", r.forecast ? json(*r.forecast) : json(nullptr)},
                        {"total", r.total}});
    }
    header["history"] = std::move(hist);
    json tensors = json::array();
    const auto named = params.named();
    for (const auto& nt : named) {
        tensors.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
    }
    header["tensors"] = std::move(tensors);
    const std::string text = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kFormatVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    for (const auto& nt : named) {
        for (double v : nt.tensor.data()) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes)
{
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw ParseError("checkpoint: bad magic; not a checkpoint file");
    }
    std::size_t pos = sizeof kMagic;
    const auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kFormatVersion) {
        throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(bytes, pos);
    if (pos + header_len > bytes.size()) {
        throw ParseError("checkpoint: truncated header");
    }
    json header;
    try {
        header = json::parse(bytes.substr(pos, header_len));
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
    }
    pos += header_len;

    Checkpoint ckpt;
    try {
        ckpt.config = config_from_json(header.at("config"));
        ckpt.epoch = header.at("epoch").get<int>();
        ckpt.config_echo = header.value("config_echo", std::string());
        for (const auto& r : header.at("history")) {
            EpochRecord rec;
            rec.epoch = r.at("epoch").get<int>();
            rec.stage = r.at("stage").get<std::string>();
            rec.classification = r.at("classification").get<double>();
            if (!r.at("forecast").is_null()) {
                rec.forecast = r.at("forecast").get<double>();
            }
            rec.total = r.at("total").get<double>();
            ckpt.history.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
    }

    // Expected layout comes from the config; the stored table must agree with it.
    ckpt.params = model::init_params(ckpt.config, 0);
    const auto named = ckpt.params.named();
    const auto& table = header.at("tensors");
    if (table.size() != named.size()) {
        throw ParseError("checkpoint: " + std::to_string(table.size()) + " tensors stored, config implies " +
                         std::to_string(named.size()));
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto name = table[i].at("name").get<std::string>();
        const auto shape = table[i].at("shape").get<ad::Shape>();
        if (name != named[i].name || shape != named[i].tensor.shape()) {
            throw ParseError("checkpoint: tensor " + name + " " + ad::shape_string(shape) +
                             " does not match config layout " + named[i].name + " " +
                             ad::shape_string(named[i].tensor.shape()));
        }
        ad::Tensor t = named[i].tensor;
        for (auto& v : t.mutable_data()) {
            v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
        }
    }
    if (pos != bytes.size()) {
        throw ParseError("checkpoint: " + std::to_string(bytes.size() - pos) + " trailing bytes");
    }
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const
{
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw IoError("cannot write checkpoint " + path.string());
    }
}

Checkpoint Checkpoint::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace gaitcast::train
