#include "gaitcast/model.hpp"

#include <cmath>

#include "gaitcast/error.hpp"

namespace gaitcast::model {

namespace {

using namespace gaitcast::ad;

Linear make_linear(std::size_t in, std::size_t out)
{
    return {Tensor::zeros({in, out}, true), Tensor::zeros({1, out}, true)};
}

Norm make_norm(std::size_t d)
{
    return {Tensor::filled({1, d}, 1.0, true), Tensor::zeros({1, d}, true)};
}

Attention make_attention(std::size_t d)
{
    return {make_linear(d, d), make_linear(d, d), make_linear(d, d), make_linear(d, d)};
}

void push_linear(std::vector<NamedTensor>& out, const std::string& name, const Linear& l, Branch b)
{
    out.push_back({name + ".weight", l.weight, b});
    out.push_back({name + ".bias", l.bias, b});
}

void push_norm(std::vector<NamedTensor>& out, const std::string& name, const Norm& n, Branch b)
{
    out.push_back({name + ".gamma", n.gamma, b});
    out.push_back({name + ".beta", n.beta, b});
}

void push_attention(std::vector<NamedTensor>& out, const std::string& name, const Attention& a, Branch b)
{
    push_linear(out, name + ".query", a.query, b);
    push_linear(out, name + ".key", a.key, b);
    push_linear(out, name + ".value", a.value, b);
    push_linear(out, name + ".output", a.output, b);
}

Linear clone_linear(const Linear& l) { return {l.weight.clone(), l.bias.clone()}; }
Norm clone_norm(const Norm& n) { return {n.gamma.clone(), n.beta.clone()}; }
Attention clone_attention(const Attention& a)
{
    return {clone_linear(a.query), clone_linear(a.key), clone_linear(a.value), clone_linear(a.output)};
}

void fill_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.mutable_data()) {
        v = dist(rng);
    }
}

Tensor dropout(const Tensor& x, double rate, const ForwardOptions& options)
{
    if (!options.training || rate <= 0.0) {
        return x;
    }
    if (options.rng == nullptr) {
        throw Error("model", "dropout: training forward needs an rng");
    }
    std::bernoulli_distribution keep(1.0 - rate);
    const double kept = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.numel());
    for (auto& m : mask) {
        m = keep(*options.rng) ? kept : 0.0;
    }
    return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor attention(const Tensor& queries, const Tensor& keys_values, const Attention& p, std::size_t heads,
                 const ForwardOptions& options)
{
    const Tensor q = linear(queries, p.query.weight, p.query.bias);
    const Tensor k = linear(keys_values, p.key.weight, p.key.bias);
    const Tensor v = linear(keys_values, p.value.weight, p.value.bias);
    const std::size_t d = q.cols();
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = heads == 1 ? q : slice(q, 1, h * dh, (h + 1) * dh);
        const Tensor kh = heads == 1 ? k : slice(k, 1, h * dh, (h + 1) * dh);
        const Tensor vh = heads == 1 ? v : slice(v, 1, h * dh, (h + 1) * dh);
        const Tensor probs = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_sqrt));
        if (options.trace) {
            options.trace->maps.push_back(probs);
        }
        outs.push_back(matmul(probs, vh));
    }
    const Tensor joined = heads == 1 ? outs.front() : concat(outs, 1);
    return linear(joined, p.output.weight, p.output.bias);
}

Tensor feed_forward(const Tensor& x, const Linear& in, const Linear& out)
{
    return linear(relu(linear(x, in.weight, in.bias)), out.weight, out.bias);
}

Tensor norm(const Tensor& x, const Norm& n) { return layer_norm(x, n.gamma, n.beta); }

}  // namespace

void ModelConfig::validate() const
{
    std::vector<std::string> problems;
    if (pose_dim < 1) problems.push_back("pose_dim must be positive");
    if (d_model < 1) problems.push_back("d_model must be positive");
    if (layers < 1) problems.push_back("layers must be positive");
    if (heads < 1) problems.push_back("heads must be positive");
    if (heads >= 1 && d_model % heads != 0) problems.push_back("d_model must be divisible by heads");
    if (ff_dim < 1) problems.push_back("ff_dim must be positive");
    if (classes < 2) problems.push_back("classes must be at least 2");
    if (input_frames < 1) problems.push_back("input_frames must be positive");
    if (forecast_frames < 1) problems.push_back("forecast_frames must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) problems.push_back("dropout must lie in [0,1)");
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ConfigError(msg);
    }
}

std::vector<NamedTensor> ModelParams::named() const
{
    std::vector<NamedTensor> out;
    push_linear(out, "embed", embed, Branch::Embedding);
    out.push_back({"encoder_pos", encoder_pos, Branch::Encoder});
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        const auto prefix = "encoder." + std::to_string(i);
        const auto& b = encoder[i];
        push_norm(out, prefix + ".norm_attn", b.norm_attn, Branch::Encoder);
        push_attention(out, prefix + ".self_attn", b.self_attn, Branch::Encoder);
        push_norm(out, prefix + ".norm_ff", b.norm_ff, Branch::Encoder);
        push_linear(out, prefix + ".ff_in", b.ff_in, Branch::Encoder);
        push_linear(out, prefix + ".ff_out", b.ff_out, Branch::Encoder);
    }
    push_norm(out, "encoder_norm", encoder_norm, Branch::Encoder);
    out.push_back({"decoder_pos", decoder_pos, Branch::Forecast});
    for (std::size_t i = 0; i < decoder.size(); ++i) {
        const auto prefix = "decoder." + std::to_string(i);
        const auto& b = decoder[i];
        push_norm(out, prefix + ".norm_self", b.norm_self, Branch::Forecast);
        push_attention(out, prefix + ".self_attn", b.self_attn, Branch::Forecast);
        push_norm(out, prefix + ".norm_cross", b.norm_cross, Branch::Forecast);
        push_attention(out, prefix + ".cross_attn", b.cross_attn, Branch::Forecast);
        push_norm(out, prefix + ".norm_ff", b.norm_ff, Branch::Forecast);
        push_linear(out, prefix + ".ff_in", b.ff_in, Branch::Forecast);
        push_linear(out, prefix + ".ff_out", b.ff_out, Branch::Forecast);
    }
    push_norm(out, "decoder_norm", decoder_norm, Branch::Forecast);
    push_linear(out, "pose_head", pose_head, Branch::Forecast);
    push_linear(out, "classifier", classifier, Branch::Classifier);
    return out;
}

ModelParams ModelParams::clone() const
{
    ModelParams p;
    p.embed = clone_linear(embed);
    p.encoder_pos = encoder_pos.clone();
    p.decoder_pos = decoder_pos.clone();
    for (const auto& b : encoder) {
        p.encoder.push_back({clone_norm(b.norm_attn), clone_norm(b.norm_ff), clone_attention(b.self_attn),
                             clone_linear(b.ff_in), clone_linear(b.ff_out)});
    }
    p.encoder_norm = clone_norm(encoder_norm);
    for (const auto& b : decoder) {
        p.decoder.push_back({clone_norm(b.norm_self), clone_norm(b.norm_cross), clone_norm(b.norm_ff),
                             clone_attention(b.self_attn), clone_attention(b.cross_attn), clone_linear(b.ff_in),
                             clone_linear(b.ff_out)});
    }
    p.decoder_norm = clone_norm(decoder_norm);
    p.pose_head = clone_linear(pose_head);
    p.classifier = clone_linear(classifier);
    return p;
}

std::size_t ModelParams::count() const
{
    std::size_t n = 0;
    for (const auto& nt : named()) {
        n += nt.tensor.numel();
    }
    return n;
}

void ModelParams::zero_grad() const
{
    for (const auto& nt : named()) {
        Tensor t = nt.tensor;
        t.zero_grad();
    }
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed)
{
    config.validate();
    const std::size_t d = config.d_model;
    ModelParams p;
    p.embed = make_linear(config.pose_dim, d);
    p.encoder_pos = Tensor::zeros({config.input_frames, d}, true);
    p.decoder_pos = Tensor::zeros({config.forecast_frames, d}, true);
    for (std::size_t i = 0; i < config.layers; ++i) {
        p.encoder.push_back({make_norm(d), make_norm(d), make_attention(d), make_linear(d, config.ff_dim),
                             make_linear(config.ff_dim, d)});
        p.decoder.push_back({make_norm(d), make_norm(d), make_norm(d), make_attention(d), make_attention(d),
                             make_linear(d, config.ff_dim), make_linear(config.ff_dim, d)});
    }
    p.encoder_norm = make_norm(d);
    p.decoder_norm = make_norm(d);
    p.pose_head = make_linear(d, config.pose_dim);
    p.classifier = make_linear(d, config.classes);

    std::mt19937_64 rng(seed);
    for (auto& nt : p.named()) {
        if (nt.name.ends_with(".weight")) {
            fill_uniform(nt.tensor, nt.tensor.rows(), rng);
        } else if (nt.name.ends_with("_pos")) {
            fill_uniform(nt.tensor, nt.tensor.cols(), rng);
        }
    }
    return p;
}

Linear init_classifier(std::size_t d_model, std::size_t classes, std::uint64_t seed)
{
    Linear l = make_linear(d_model, classes);
    std::mt19937_64 rng(seed);
    fill_uniform(l.weight, d_model, rng);
    return l;
}

Tensor embed(const Tensor& x, const ModelParams& params)
{
    if (x.rank() != 2 || x.cols() != params.embed.weight.rows()) {
        throw ShapeError("embed: input " + shape_string(x.shape()) + " does not match pose dimension " +
                         std::to_string(params.embed.weight.rows()));
    }
    if (x.rows() > params.encoder_pos.rows()) {
        throw ShapeError("embed: " + std::to_string(x.rows()) + " frames exceed the positional table of " +
                         std::to_string(params.encoder_pos.rows()));
    }
    const Tensor pos = x.rows() == params.encoder_pos.rows() ? params.encoder_pos
                                                             : slice(params.encoder_pos, 0, 0, x.rows());
    return add(linear(x, params.embed.weight, params.embed.bias), pos);
}

Tensor encode(const Tensor& embeddings, const ModelParams& params, const ModelConfig& config,
              const ForwardOptions& options)
{
    if (embeddings.rank() != 2 || embeddings.cols() != config.d_model) {
        throw ShapeError("encode: expected (t x " + std::to_string(config.d_model) + "), got " +
                         shape_string(embeddings.shape()));
    }
    Tensor h = embeddings;
    for (const auto& block : params.encoder) {
        const Tensor a = norm(h, block.norm_attn);
        h = add(h, dropout(attention(a, a, block.self_attn, config.heads, options), config.dropout, options));
        const Tensor f = norm(h, block.norm_ff);
        h = add(h, dropout(feed_forward(f, block.ff_in, block.ff_out), config.dropout, options));
    }
    return norm(h, params.encoder_norm);
}

Tensor classify(const Tensor& latents, const ModelParams& params)
{
    return linear(mean_rows(latents), params.classifier.weight, params.classifier.bias);
}

std::vector<Tensor> decode_forecast(const Tensor& latents, const ModelParams& params, const ModelConfig& config,
                                    const Tensor& last_pose, std::size_t forecast_frames,
                                    const ForwardOptions& options)
{
    if (forecast_frames < 1 || forecast_frames > params.decoder_pos.rows()) {
        throw ShapeError("decode_forecast: " + std::to_string(forecast_frames) +
                         " forecast frames exceed the decoder positional table of " +
                         std::to_string(params.decoder_pos.rows()));
    }
    if (last_pose.rank() != 2 || last_pose.rows() != 1 || last_pose.cols() != params.embed.weight.rows()) {
        throw ShapeError("decode_forecast: last pose must be (1 x N), got " + shape_string(last_pose.shape()));
    }
    const std::size_t m = forecast_frames;
    const Tensor pos = m == params.decoder_pos.rows() ? params.decoder_pos : slice(params.decoder_pos, 0, 0, m);
    const Tensor query = linear(last_pose, params.embed.weight, params.embed.bias);
    Tensor h = add(repeat_rows(query, m), pos);
    const Tensor hold = repeat_rows(last_pose, m);

    std::vector<Tensor> preds;
    preds.reserve(params.decoder.size());
    for (const auto& block : params.decoder) {
        const Tensor s = norm(h, block.norm_self);
        h = add(h, dropout(attention(s, s, block.self_attn, config.heads, options), config.dropout, options));
        const Tensor c = norm(h, block.norm_cross);
        h = add(h, dropout(attention(c, latents, block.cross_attn, config.heads, options), config.dropout, options));
        const Tensor f = norm(h, block.norm_ff);
        h = add(h, dropout(feed_forward(f, block.ff_in, block.ff_out), config.dropout, options));
        const Tensor out = norm(h, params.decoder_norm);
        preds.push_back(add(linear(out, params.pose_head.weight, params.pose_head.bias), hold));
    }
    return preds;
}

ForecastOutput forward(const Tensor& x, const ModelConfig& config, const ModelParams& params,
                       const ForwardOptions& options)
{
    ForecastOutput out;
    out.latents = encode(embed(x, params), params, config, options);
    out.logits = classify(out.latents, params);
    if (options.with_forecast) {
        const Tensor last = slice(x, 0, x.rows() - 1, x.rows());
        out.per_layer_preds = decode_forecast(out.latents, params, config, last, config.forecast_frames, options);
    }
    return out;
}

}  // namespace gaitcast::model
