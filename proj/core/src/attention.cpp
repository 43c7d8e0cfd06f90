#include "aes/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aes/error.hpp"

namespace aes {

void AttentionConfig::validate() const {
    if (head_dim == 0 || num_heads == 0 || max_len == 0) {
        throw InputError("attention config: head_dim, num_heads and max_len must be positive");
    }
}

void LshConfig::validate() const {
    if (num_hashes == 0) throw InputError("lsh config: num_hashes must be positive");
    if (num_buckets < 2 || num_buckets % 2 != 0) {
        throw InputError("lsh config: num_buckets must be even and >= 2");
    }
    if (chunk_size == 0) throw InputError("lsh config: chunk_size must be positive");
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) {
    const std::size_t lq = q.rows(), lk = k.rows();
    if (q.cols() != k.cols()) {
        throw ShapeError("attention: query width " + std::to_string(q.cols()) +
                         " != key width " + std::to_string(k.cols()));
    }
    if (v.rows() != lk) {
        throw ShapeError("attention: value rows " + std::to_string(v.rows()) +
                         " != key rows " + std::to_string(lk));
    }
    if (!mask.empty() && mask.size() != lq * lk) {
        throw ShapeError("attention: mask size does not match L_q x L_k");
    }
    op_stats().qk_dot_products += static_cast<std::uint64_t>(lq) * lk;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores = scale(matmul_nt(q, k), inv_sqrt_dk);
    Tensor weights = mask.empty() ? softmax_rows(scores) : masked_softmax_rows(scores, mask);
    return matmul(weights, v);
}

MultiHeadWeights make_multi_head_weights(std::size_t width, std::size_t num_heads,
                                         bool shared_qk, Rng& rng) {
    if (num_heads == 0 || width % num_heads != 0) {
        throw InputError("multi_head: width must be divisible by num_heads");
    }
    const std::size_t d_k = width / num_heads;
    const double bound = std::sqrt(6.0 / static_cast<double>(width + d_k));
    auto draw = [&](std::size_t rows, std::size_t cols, double b) {
        std::vector<double> v(rows * cols);
        for (double& x : v) x = rng.uniform(-b, b);
        return Tensor::from({rows, cols}, std::move(v));
    };
    MultiHeadWeights w;
    w.shared_qk = shared_qk;
    for (std::size_t h = 0; h < num_heads; ++h) {
        w.w_q.push_back(draw(width, d_k, bound));
        if (!shared_qk) w.w_k.push_back(draw(width, d_k, bound));
        w.w_v.push_back(draw(width, d_k, bound));
    }
    const double bound_o = std::sqrt(6.0 / static_cast<double>(width + width));
    w.w_o = draw(width, width, bound_o);
    return w;
}

Tensor multi_head(const Tensor& x, const MultiHeadWeights& w, const AttentionConfig& cfg,
                  const AttentionMask& mask) {
    cfg.validate();
    const std::size_t width = cfg.width();
    if (x.cols() != width) {
        throw ShapeError("multi_head: input width " + std::to_string(x.cols()) +
                         " != num_heads * head_dim");
    }
    if (x.rows() > cfg.max_len) {
        throw InputError("multi_head: sequence length exceeds max_len");
    }
    if (w.w_q.size() != cfg.num_heads || w.w_v.size() != cfg.num_heads) {
        throw ShapeError("multi_head: weight count does not match num_heads");
    }
    std::vector<Tensor> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        Tensor qh = matmul(x, w.w_q[h]);
        Tensor kh = w.shared_qk ? qh : matmul(x, w.w_k[h]);
        Tensor vh = matmul(x, w.w_v[h]);
        heads.push_back(attention(qh, kh, vh, mask));
    }
    Tensor cat = cfg.num_heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, w.w_o);
}

namespace {

// One hash round: bucket by argmax over projections onto num_buckets/2 random
// rotations and their negations, sort by (bucket, position), chunk, and give
// every position its own chunk plus the preceding one as candidates.
void add_round_candidates(const std::vector<double>& qk, std::size_t seq_len,
                          std::size_t head_dim, const LshConfig& cfg, std::uint64_t round_seed,
                          std::vector<std::vector<std::uint32_t>>& sets) {
    const std::size_t half = cfg.num_buckets / 2;
    Rng rng(round_seed);
    std::vector<double> rotations(head_dim * half);
    for (double& r : rotations) r = rng.gaussian();

    std::vector<std::uint32_t> bucket(seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) {
        const double* row = qk.data() + i * head_dim;
        double best = -std::numeric_limits<double>::infinity();
        std::uint32_t best_b = 0;
        for (std::size_t b = 0; b < half; ++b) {
            double dot = 0.0;
            for (std::size_t d = 0; d < head_dim; ++d) dot += row[d] * rotations[d * half + b];
            if (dot > best) {
                best = dot;
                best_b = static_cast<std::uint32_t>(b);
            }
            if (-dot > best) {
                best = -dot;
                best_b = static_cast<std::uint32_t>(b + half);
            }
        }
        bucket[i] = best_b;
    }

    std::vector<std::uint32_t> order(seq_len);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return bucket[a] != bucket[b] ? bucket[a] < bucket[b] : a < b;
    });

    const std::size_t chunk = cfg.chunk_size;
    for (std::size_t si = 0; si < seq_len; ++si) {
        const std::size_t c = si / chunk;
        const std::size_t begin = c == 0 ? 0 : (c - 1) * chunk;
        const std::size_t end = std::min((c + 1) * chunk, seq_len);
        auto& set = sets[order[si]];
        for (std::size_t sj = begin; sj < end; ++sj) set.push_back(order[sj]);
    }
}

}  // namespace

std::vector<std::vector<std::uint32_t>> lsh_attended_sets(
    const std::vector<double>& qk_values, std::size_t seq_len, std::size_t head_dim,
    const LshConfig& cfg, std::span<const std::uint64_t> round_seeds) {
    cfg.validate();
    if (qk_values.size() != seq_len * head_dim) {
        throw ShapeError("lsh_attended_sets: qk size does not match L x d_k");
    }
    std::vector<std::vector<std::uint32_t>> sets(seq_len);
    for (std::uint64_t seed : round_seeds) {
        add_round_candidates(qk_values, seq_len, head_dim, cfg, seed, sets);
    }
    for (std::size_t i = 0; i < seq_len; ++i) {
        auto& set = sets[i];
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
        // Under Q=K the self dot-product dominates, so a position only keeps
        // itself when there is no other candidate.
        set.erase(std::remove(set.begin(), set.end(), static_cast<std::uint32_t>(i)), set.end());
        if (set.empty()) set.push_back(static_cast<std::uint32_t>(i));
    }
    return sets;
}

Tensor lsh_attention(const Tensor& x, const Tensor& w_qk, const Tensor& w_v,
                     const LshConfig& lsh, const AttentionConfig& att) {
    att.validate();
    lsh.validate();
    const std::size_t seq_len = x.rows();
    if (seq_len > att.max_len) {
        throw InputError("lsh_attention: sequence length exceeds max_len");
    }
    Tensor q = matmul(x, w_qk);  // Q = K
    Tensor v = matmul(x, w_v);
    const std::size_t d_k = q.cols();

    std::vector<std::uint64_t> round_seeds(lsh.num_hashes);
    for (std::size_t r = 0; r < lsh.num_hashes; ++r) round_seeds[r] = Rng::mix(lsh.rng_seed, r);
    const auto sets = lsh_attended_sets(q.values(), seq_len, d_k, lsh, round_seeds);

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
    std::vector<Tensor> out_rows;
    out_rows.reserve(seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) {
        const auto& set = sets[i];
        op_stats().qk_dot_products += set.size();
        std::vector<std::size_t> ids(set.begin(), set.end());
        Tensor keys = gather_rows(q, ids);
        Tensor vals = gather_rows(v, ids);
        Tensor qi = slice_rows(q, i, 1);
        Tensor weights = softmax_rows(scale(matmul_nt(qi, keys), inv_sqrt_dk));
        out_rows.push_back(matmul(weights, vals));
    }
    return concat_rows(out_rows);
}

Tensor multi_head_lsh(const Tensor& x, const MultiHeadWeights& w, const LshConfig& lsh,
                      const AttentionConfig& cfg) {
    cfg.validate();
    if (!w.shared_qk) throw ContractError("multi_head_lsh: weights must be shared-QK");
    if (x.cols() != cfg.width()) {
        throw ShapeError("multi_head_lsh: input width != num_heads * head_dim");
    }
    std::vector<Tensor> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        LshConfig per_head = lsh;
        per_head.rng_seed = Rng::mix(lsh.rng_seed, 0x68656164ULL + h);
        heads.push_back(lsh_attention(x, w.w_q[h], w.w_v[h], per_head, cfg));
    }
    Tensor cat = cfg.num_heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, w.w_o);
}

}  // namespace aes
