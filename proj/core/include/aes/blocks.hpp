#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aes/attention.hpp"
#include "aes/rng.hpp"
#include "aes/tensor.hpp"

namespace aes {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 0;   // E; factored embedding when E != H
    std::size_t hidden_dim = 0;  // H
    std::size_t ff_dim = 0;      // F; 0 means the 4H default
    std::size_t num_layers = 0;
    std::size_t num_heads = 1;
    std::size_t max_len = 0;
    std::size_t bottleneck_dim = 0;  // B; 0 = no bottleneck
    bool share_layers = false;
    bool reversible = false;
    std::optional<LshConfig> lsh;  // presence selects shared-QK attention
    std::size_t num_segments = 2;

    void validate() const;
    bool factored_embedding() const { return embed_dim != hidden_dim; }
    /// Width the transformer unit operates at (B if bottlenecked, H/2 per
    /// stream if reversible, else H).
    std::size_t unit_width() const;
    std::size_t ff_width() const { return ff_dim != 0 ? ff_dim : 4 * hidden_dim; }
    AttentionConfig attention_config() const;
};

struct EmbeddingTables {
    Tensor word;        // V x E
    Tensor projection;  // E x H, defined iff E != H
    Tensor position;    // max_len x H
    Tensor segment;     // num_segments x H
};

struct EncoderLayerWeights {
    MultiHeadWeights attn;
    Tensor ff_w1, ff_b1;  // U x F, F
    Tensor ff_w2, ff_b2;  // F x U, U
    Tensor ln1_gain, ln1_bias;
    Tensor ln2_gain, ln2_bias;
    Tensor bottleneck_down, bottleneck_up;  // H x B / B x H, defined iff bottlenecked
};

struct Model {
    ModelConfig config;
    EmbeddingTables embeddings;
    // With share_layers every entry aliases the same weights object.
    std::vector<std::shared_ptr<EncoderLayerWeights>> layers;
};

EmbeddingTables make_embedding_tables(const ModelConfig& config, Rng& rng);
std::shared_ptr<EncoderLayerWeights> make_layer_weights(const ModelConfig& config, Rng& rng);
Model build_model(const ModelConfig& config, std::uint64_t seed);
Model clone_model(const Model& source);

/// Word (projected when factored) + position + segment embeddings, summed.
Tensor embed(std::span<const std::size_t> ids, std::span<const std::size_t> segments,
             const EmbeddingTables& tables);

/// Full encoder stack for any variant (plain, bottlenecked, reversible).
Tensor encoder_forward(const Tensor& x,
                       std::span<const std::shared_ptr<EncoderLayerWeights>> layers,
                       const ModelConfig& config, const AttentionMask& mask = {});

/// y1 = x1 + Attn(LN(x2)); y2 = x2 + FF(LN(y1)). Streams are L x H/2.
std::pair<Tensor, Tensor> reversible_forward(const Tensor& x1, const Tensor& x2,
                                             const EncoderLayerWeights& layer,
                                             const ModelConfig& config);
/// Exact algebraic inverse of reversible_forward.
std::pair<Tensor, Tensor> reversible_inverse(const Tensor& y1, const Tensor& y2,
                                             const EncoderLayerWeights& layer,
                                             const ModelConfig& config);

/// Backward through a reversible stack without retained activations: inputs
/// are recomputed layer by layer from the outputs. Seeds grad_y1/grad_y2 at
/// the top, accumulates into the layer weights' grads, and returns the
/// gradient reaching (x1, x2) at the bottom.
std::pair<std::vector<double>, std::vector<double>> reversible_backward(
    const Tensor& y1, const Tensor& y2, std::vector<double> grad_y1,
    std::vector<double> grad_y2, std::span<const std::shared_ptr<EncoderLayerWeights>> layers,
    const ModelConfig& config, std::pair<std::vector<double>, std::vector<double>>* inputs_out);

/// Exact count of trainable scalars in the encoder (head excluded).
std::uint64_t count_parameters(const ModelConfig& config);

/// Unique trainable tensors with stable names (shared layers listed once).
std::vector<std::pair<std::string, Tensor>> named_parameters(const Model& model);

}  // namespace aes
