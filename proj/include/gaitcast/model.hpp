#pragma once

// Forecasting transformer: a pose embedding, a self-attention encoder whose
// mean-pooled latents feed a single linear classifier, and a non-autoregressive
// decoder that turns M copies of the last observed pose into one forecast per
// decoder layer.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gaitcast/tensor.hpp"

namespace gaitcast::model {

using ad::Tensor;

struct ModelConfig {
    std::size_t pose_dim = 75;        // N = 3 * joints
    std::size_t d_model = 128;        // D
    std::size_t layers = 4;           // L, shared by encoder and decoder
    std::size_t heads = 4;
    std::size_t ff_dim = 256;
    std::size_t classes = 4;          // C
    std::size_t input_frames = 60;    // t
    std::size_t forecast_frames = 40; // M
    double dropout = 0.1;

    // Throws ConfigError listing every violated constraint.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct Linear {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
};

struct Norm {
    Tensor gamma;
    Tensor beta;
};

struct Attention {
    Linear query, key, value, output;
};

struct EncoderBlock {
    Norm norm_attn, norm_ff;
    Attention self_attn;
    Linear ff_in, ff_out;
};

struct DecoderBlock {
    Norm norm_self, norm_cross, norm_ff;
    Attention self_attn, cross_attn;
    Linear ff_in, ff_out;
};

// Which part of the network a parameter belongs to.
enum class Branch {
    Embedding,   // pose embedding, shared by encoder input and decoder queries
    Encoder,     // encoder positions, blocks and final norm
    Classifier,  // linear class head
    Forecast,    // decoder positions, blocks, output norm and pose decoder
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
    Branch branch;
};

struct ModelParams {
    Linear embed;           // N -> D
    Tensor encoder_pos;     // t x D
    Tensor decoder_pos;     // M x D
    std::vector<EncoderBlock> encoder;
    Norm encoder_norm;
    std::vector<DecoderBlock> decoder;
    Norm decoder_norm;
    Linear pose_head;       // D -> N, shared across decoder layers
    Linear classifier;      // D -> C

    // Every parameter in a fixed order with a stable name.
    std::vector<NamedTensor> named() const;
    ModelParams clone() const;
    std::size_t count() const;
    void zero_grad() const;
};

// Deterministic per seed: weights uniform in +-1/sqrt(fan_in), biases zero,
// norms at identity. Positional tables use their row width as fan-in.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Fresh classifier for a new class count.
Linear init_classifier(std::size_t d_model, std::size_t classes, std::uint64_t seed);

// Attention probabilities captured during a forward pass, one (queries x keys)
// matrix per head, in call order.
struct AttentionTrace {
    std::vector<Tensor> maps;
};

struct ForwardOptions {
    bool training = false;              // enables dropout
    std::mt19937_64* rng = nullptr;     // dropout masks; required when training with dropout > 0
    bool with_forecast = true;          // skip the decoder when false
    AttentionTrace* trace = nullptr;
};

struct ForecastOutput {
    Tensor latents;                     // t x D
    Tensor logits;                      // 1 x C
    std::vector<Tensor> per_layer_preds;  // L tensors of M x N
};

// embed(x_i) + pos_i for each of the t input frames.
Tensor embed(const Tensor& x, const ModelParams& params);
Tensor encode(const Tensor& embeddings, const ModelParams& params, const ModelConfig& config,
              const ForwardOptions& options = {});
Tensor classify(const Tensor& latents, const ModelParams& params);
// Decoder queries are M copies of the embedded last pose plus decoder
// positions; each layer's output goes through the shared pose head and the
// last pose is added back.
std::vector<Tensor> decode_forecast(const Tensor& latents, const ModelParams& params, const ModelConfig& config,
                                    const Tensor& last_pose, std::size_t forecast_frames,
                                    const ForwardOptions& options = {});
ForecastOutput forward(const Tensor& x, const ModelConfig& config, const ModelParams& params,
                       const ForwardOptions& options = {});

}  // namespace gaitcast::model
