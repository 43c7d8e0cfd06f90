#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aes/rng.hpp"
#include "aes/tensor.hpp"

namespace aes {

struct AttentionConfig {
    std::size_t head_dim = 0;  // d_k, per-head key/query width
    std::size_t num_heads = 1;
    std::size_t max_len = 0;

    std::size_t width() const { return head_dim * num_heads; }
    void validate() const;
};

struct LshConfig {
    std::size_t num_hashes = 4;   // hash rounds
    std::size_t num_buckets = 8;  // even, >= 2
    std::size_t chunk_size = 16;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Row-major L_q x L_k mask; nonzero means "may attend". Empty = no mask.
using AttentionMask = std::vector<std::uint8_t>;

/// softmax(Q K^T / sqrt(d_k)) V with optional masking. Masked-out entries get
/// zero weight; a fully masked row throws ContractError.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionMask& mask = {});

struct MultiHeadWeights {
    std::vector<Tensor> w_q;  // per head [width x d_k]; holds the shared Q=K projection
                              // when shared_qk is set
    std::vector<Tensor> w_k;  // empty when shared_qk
    std::vector<Tensor> w_v;  // per head [width x d_k]
    Tensor w_o;               // [width x width]
    bool shared_qk = false;
};

MultiHeadWeights make_multi_head_weights(std::size_t width, std::size_t num_heads,
                                         bool shared_qk, Rng& rng);

Tensor multi_head(const Tensor& x, const MultiHeadWeights& w, const AttentionConfig& cfg,
                  const AttentionMask& mask = {});

/// Positions each query may attend to, per the bucket/chunk scheme, after
/// merging rounds. Sets are sorted, deduplicated, exclude the position itself
/// unless it has no other candidate. `qk_values` is the L x d_k shared
/// query/key matrix (raw values; the plan is not differentiated through).
std::vector<std::vector<std::uint32_t>> lsh_attended_sets(
    const std::vector<double>& qk_values, std::size_t seq_len, std::size_t head_dim,
    const LshConfig& cfg, std::span<const std::uint64_t> round_seeds);

/// Shared-QK LSH attention: Q = K = X W_qk, V = X W_v; each position attends
/// only within its merged bucket/chunk candidate set.
Tensor lsh_attention(const Tensor& x, const Tensor& w_qk, const Tensor& w_v,
                     const LshConfig& lsh, const AttentionConfig& att);

/// Multi-head wrapper over lsh_attention (one shared W_qk per head).
Tensor multi_head_lsh(const Tensor& x, const MultiHeadWeights& w, const LshConfig& lsh,
                      const AttentionConfig& cfg);

}  // namespace aes
