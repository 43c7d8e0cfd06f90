#include "aes/blocks.hpp"

#include <cmath>

#include "aes/error.hpp"

namespace aes {

namespace {

constexpr double kLayerNormEps = 1e-6;

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from({rows, cols}, std::move(v));
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0 || max_len == 0) {
        throw InputError("model config: vocab_size, embed_dim, hidden_dim, max_len must be positive");
    }
    if (num_heads == 0) throw InputError("model config: num_heads must be positive");
    if (num_segments == 0) throw InputError("model config: num_segments must be positive");
    if (bottleneck_dim > hidden_dim) {
        throw InputError("model config: bottleneck_dim must not exceed hidden_dim");
    }
    if (reversible && hidden_dim % 2 != 0) {
        throw InputError("model config: reversible stream split needs an even hidden_dim");
    }
    if (reversible && bottleneck_dim > 0) {
        throw InputError("model config: reversible and bottleneck variants cannot be combined");
    }
    if (unit_width() % num_heads != 0) {
        throw InputError("model config: unit width must be divisible by num_heads");
    }
    if (lsh) lsh->validate();
}

std::size_t ModelConfig::unit_width() const {
    if (bottleneck_dim > 0) return bottleneck_dim;
    if (reversible) return hidden_dim / 2;
    return hidden_dim;
}

AttentionConfig ModelConfig::attention_config() const {
    AttentionConfig att;
    att.num_heads = num_heads;
    att.head_dim = unit_width() / num_heads;
    att.max_len = max_len;
    return att;
}

EmbeddingTables make_embedding_tables(const ModelConfig& config, Rng& rng) {
    EmbeddingTables t;
    t.word = xavier(config.vocab_size, config.embed_dim, rng);
    if (config.factored_embedding()) {
        t.projection = xavier(config.embed_dim, config.hidden_dim, rng);
    }
    t.position = xavier(config.max_len, config.hidden_dim, rng);
    t.segment = xavier(config.num_segments, config.hidden_dim, rng);
    return t;
}

std::shared_ptr<EncoderLayerWeights> make_layer_weights(const ModelConfig& config, Rng& rng) {
    const std::size_t u = config.unit_width();
    const std::size_t f = config.ff_width();
    auto layer = std::make_shared<EncoderLayerWeights>();
    layer->attn = make_multi_head_weights(u, config.num_heads, config.lsh.has_value(), rng);
    layer->ff_w1 = xavier(u, f, rng);
    layer->ff_b1 = Tensor::zeros({f});
    layer->ff_w2 = xavier(f, u, rng);
    layer->ff_b2 = Tensor::zeros({u});
    layer->ln1_gain = Tensor::full({u}, 1.0);
    layer->ln1_bias = Tensor::zeros({u});
    layer->ln2_gain = Tensor::full({u}, 1.0);
    layer->ln2_bias = Tensor::zeros({u});
    if (config.bottleneck_dim > 0) {
        layer->bottleneck_down = xavier(config.hidden_dim, config.bottleneck_dim, rng);
        layer->bottleneck_up = xavier(config.bottleneck_dim, config.hidden_dim, rng);
    }
    return layer;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    Model m;
    m.config = config;
    m.embeddings = make_embedding_tables(config, rng);
    if (config.num_layers > 0) {
        if (config.share_layers) {
            auto shared = make_layer_weights(config, rng);
            m.layers.assign(config.num_layers, shared);
        } else {
            for (std::size_t i = 0; i < config.num_layers; ++i) {
                m.layers.push_back(make_layer_weights(config, rng));
            }
        }
    }
    return m;
}

namespace {

Tensor copy_tensor(const Tensor& t) {
    if (!t.defined()) return {};
    return Tensor::from(t.shape(), t.values());
}

std::shared_ptr<EncoderLayerWeights> clone_layer(const EncoderLayerWeights& src) {
    auto out = std::make_shared<EncoderLayerWeights>();
    out->attn.shared_qk = src.attn.shared_qk;
    for (const auto& t : src.attn.w_q) out->attn.w_q.push_back(copy_tensor(t));
    for (const auto& t : src.attn.w_k) out->attn.w_k.push_back(copy_tensor(t));
    for (const auto& t : src.attn.w_v) out->attn.w_v.push_back(copy_tensor(t));
    out->attn.w_o = copy_tensor(src.attn.w_o);
    out->ff_w1 = copy_tensor(src.ff_w1);
    out->ff_b1 = copy_tensor(src.ff_b1);
    out->ff_w2 = copy_tensor(src.ff_w2);
    out->ff_b2 = copy_tensor(src.ff_b2);
    out->ln1_gain = copy_tensor(src.ln1_gain);
    out->ln1_bias = copy_tensor(src.ln1_bias);
    out->ln2_gain = copy_tensor(src.ln2_gain);
    out->ln2_bias = copy_tensor(src.ln2_bias);
    out->bottleneck_down = copy_tensor(src.bottleneck_down);
    out->bottleneck_up = copy_tensor(src.bottleneck_up);
    return out;
}

}  // namespace

Model clone_model(const Model& source) {
    Model out;
    out.config = source.config;
    out.embeddings.word = copy_tensor(source.embeddings.word);
    out.embeddings.projection = copy_tensor(source.embeddings.projection);
    out.embeddings.position = copy_tensor(source.embeddings.position);
    out.embeddings.segment = copy_tensor(source.embeddings.segment);
    std::shared_ptr<EncoderLayerWeights> shared;
    for (const auto& layer : source.layers) {
        if (source.config.share_layers) {
            if (!shared) shared = clone_layer(*layer);
            out.layers.push_back(shared);
        } else {
            out.layers.push_back(clone_layer(*layer));
        }
    }
    return out;
}

Tensor embed(std::span<const std::size_t> ids, std::span<const std::size_t> segments,
             const EmbeddingTables& tables) {
    if (ids.size() != segments.size()) {
        throw InputError("embed: ids and segments must have equal length");
    }
    if (ids.empty()) throw InputError("embed: empty id sequence");
    if (ids.size() > tables.position.rows()) {
        throw InputError("embed: sequence longer than the position table");
    }
    Tensor words = gather_rows(tables.word, {ids.begin(), ids.end()});
    if (tables.projection.defined()) words = matmul(words, tables.projection);
    Tensor pos = slice_rows(tables.position, 0, ids.size());
    Tensor seg = gather_rows(tables.segment, {segments.begin(), segments.end()});
    return add(add(words, pos), seg);
}

namespace {

Tensor feed_forward(const Tensor& x, const EncoderLayerWeights& layer) {
    Tensor h = gelu(add_row(matmul(x, layer.ff_w1), layer.ff_b1));
    return add_row(matmul(h, layer.ff_w2), layer.ff_b2);
}

Tensor attention_sublayer(const Tensor& x, const EncoderLayerWeights& layer,
                          const ModelConfig& config, const AttentionMask& mask) {
    const AttentionConfig att = config.attention_config();
    if (config.lsh) return multi_head_lsh(x, layer.attn, *config.lsh, att);
    return multi_head(x, layer.attn, att, mask);
}

// Figure-style post-norm unit: norm(x + Attn(x)) then norm(s + FF(s)).
Tensor transformer_unit(const Tensor& x, const EncoderLayerWeights& layer,
                        const ModelConfig& config, const AttentionMask& mask) {
    Tensor s = layer_norm(add(x, attention_sublayer(x, layer, config, mask)), layer.ln1_gain,
                          layer.ln1_bias, kLayerNormEps);
    return layer_norm(add(s, feed_forward(s, layer)), layer.ln2_gain, layer.ln2_bias,
                      kLayerNormEps);
}

// Pre-norm sublayers for the reversible wiring (keeps the residual exact).
Tensor rev_f1(const Tensor& z, const EncoderLayerWeights& layer, const ModelConfig& config) {
    return attention_sublayer(layer_norm(z, layer.ln1_gain, layer.ln1_bias, kLayerNormEps),
                              layer, config, {});
}

Tensor rev_f2(const Tensor& z, const EncoderLayerWeights& layer) {
    return feed_forward(layer_norm(z, layer.ln2_gain, layer.ln2_bias, kLayerNormEps), layer);
}

}  // namespace

std::pair<Tensor, Tensor> reversible_forward(const Tensor& x1, const Tensor& x2,
                                             const EncoderLayerWeights& layer,
                                             const ModelConfig& config) {
    Tensor y1 = add(x1, rev_f1(x2, layer, config));
    Tensor y2 = add(x2, rev_f2(y1, layer));
    return {y1, y2};
}

std::pair<Tensor, Tensor> reversible_inverse(const Tensor& y1, const Tensor& y2,
                                             const EncoderLayerWeights& layer,
                                             const ModelConfig& config) {
    Tensor x2 = sub(y2, rev_f2(y1, layer));
    Tensor x1 = sub(y1, rev_f1(x2, layer, config));
    return {x1, x2};
}

Tensor encoder_forward(const Tensor& x,
                       std::span<const std::shared_ptr<EncoderLayerWeights>> layers,
                       const ModelConfig& config, const AttentionMask& mask) {
    config.validate();
    if (x.cols() != config.hidden_dim) {
        throw ShapeError("encoder_forward: input width != hidden_dim");
    }
    if (config.reversible) {
        Tensor s1 = take_cols_strided(x, 0, 2);
        Tensor s2 = take_cols_strided(x, 1, 2);
        for (const auto& layer : layers) {
            auto [y1, y2] = reversible_forward(s1, s2, *layer, config);
            s1 = y1;
            s2 = y2;
        }
        return interleave_cols(s1, s2);
    }
    Tensor h = x;
    for (const auto& layer : layers) {
        if (config.bottleneck_dim > 0) {
            Tensor u = matmul(h, layer->bottleneck_down);
            u = transformer_unit(u, *layer, config, mask);
            h = matmul(u, layer->bottleneck_up);
        } else {
            h = transformer_unit(h, *layer, config, mask);
        }
    }
    return h;
}

std::pair<std::vector<double>, std::vector<double>> reversible_backward(
    const Tensor& y1, const Tensor& y2, std::vector<double> grad_y1,
    std::vector<double> grad_y2, std::span<const std::shared_ptr<EncoderLayerWeights>> layers,
    const ModelConfig& config, std::pair<std::vector<double>, std::vector<double>>* inputs_out) {
    const auto& shape = y1.shape();
    std::vector<double> y1v = y1.values();
    std::vector<double> y2v = y2.values();
    for (std::size_t li = layers.size(); li-- > 0;) {
        const EncoderLayerWeights& layer = *layers[li];
        // Recompute inputs from outputs (no stored activations).
        Tensor y1_leaf = Tensor::from(shape, y1v);
        std::vector<double> x2v(y2v.size());
        {
            const Tensor f2 = rev_f2(y1_leaf, layer);
            for (std::size_t i = 0; i < x2v.size(); ++i) x2v[i] = y2v[i] - f2.values()[i];
        }
        Tensor x2_leaf = Tensor::from(shape, x2v);
        std::vector<double> x1v(y1v.size());
        {
            const Tensor f1 = rev_f1(x2_leaf, layer, config);
            for (std::size_t i = 0; i < x1v.size(); ++i) x1v[i] = y1v[i] - f1.values()[i];
        }
        // Fresh local graph for the vector-Jacobian products.
        Tensor x1_node = Tensor::from(shape, x1v);
        Tensor x2_node = Tensor::from(shape, x2v);
        Tensor y1_node = add(x1_node, rev_f1(x2_node, layer, config));
        Tensor y2_node = add(x2_node, rev_f2(y1_node, layer));
        const Tensor roots[] = {y1_node, y2_node};
        const std::vector<double> seeds[] = {std::move(grad_y1), std::move(grad_y2)};
        backward_seeded(roots, seeds);
        grad_y1 = x1_node.grad();
        grad_y2 = x2_node.grad();
        y1v = std::move(x1v);
        y2v = std::move(x2v);
    }
    if (inputs_out) *inputs_out = {y1v, y2v};
    return {std::move(grad_y1), std::move(grad_y2)};
}

std::uint64_t count_parameters(const ModelConfig& config) {
    config.validate();
    const std::uint64_t v = config.vocab_size;
    const std::uint64_t e = config.embed_dim;
    const std::uint64_t h = config.hidden_dim;
    const std::uint64_t u = config.unit_width();
    const std::uint64_t f = config.ff_width();

    std::uint64_t total = v * e;
    if (config.factored_embedding()) total += e * h;
    total += static_cast<std::uint64_t>(config.max_len) * h;
    total += static_cast<std::uint64_t>(config.num_segments) * h;

    if (config.num_layers > 0) {
        const std::uint64_t d_k = u / config.num_heads;
        std::uint64_t per_layer = 0;
        const std::uint64_t projections = config.lsh.has_value() ? 2 : 3;  // shared QK drops one
        per_layer += projections * config.num_heads * u * d_k;
        per_layer += u * u;          // output projection
        per_layer += u * f + f;      // ff_w1 + bias
        per_layer += f * u + u;      // ff_w2 + bias
        per_layer += 4 * u;          // two layer-norm (gain, bias) pairs
        if (config.bottleneck_dim > 0) per_layer += 2 * h * config.bottleneck_dim;
        total += per_layer * (config.share_layers ? 1 : config.num_layers);
    }
    return total;
}

std::vector<std::pair<std::string, Tensor>> named_parameters(const Model& model) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embeddings.word", model.embeddings.word);
    if (model.embeddings.projection.defined()) {
        out.emplace_back("embeddings.projection", model.embeddings.projection);
    }
    out.emplace_back("embeddings.position", model.embeddings.position);
    out.emplace_back("embeddings.segment", model.embeddings.segment);
    const std::size_t unique = model.config.share_layers && !model.layers.empty()
                                   ? 1
                                   : model.layers.size();
    for (std::size_t i = 0; i < unique; ++i) {
        const auto& layer = *model.layers[i];
        const std::string p = "layers." + std::to_string(i) + ".";
        for (std::size_t head = 0; head < layer.attn.w_q.size(); ++head) {
            out.emplace_back(p + "attn.q." + std::to_string(head), layer.attn.w_q[head]);
        }
        for (std::size_t head = 0; head < layer.attn.w_k.size(); ++head) {
            out.emplace_back(p + "attn.k." + std::to_string(head), layer.attn.w_k[head]);
        }
        for (std::size_t head = 0; head < layer.attn.w_v.size(); ++head) {
            out.emplace_back(p + "attn.v." + std::to_string(head), layer.attn.w_v[head]);
        }
        out.emplace_back(p + "attn.o", layer.attn.w_o);
        out.emplace_back(p + "ff.w1", layer.ff_w1);
        out.emplace_back(p + "ff.b1", layer.ff_b1);
        out.emplace_back(p + "ff.w2", layer.ff_w2);
        out.emplace_back(p + "ff.b2", layer.ff_b2);
        out.emplace_back(p + "ln1.gain", layer.ln1_gain);
        out.emplace_back(p + "ln1.bias", layer.ln1_bias);
        out.emplace_back(p + "ln2.gain", layer.ln2_gain);
        out.emplace_back(p + "ln2.bias", layer.ln2_bias);
        if (layer.bottleneck_down.defined()) {
            out.emplace_back(p + "bottleneck.down", layer.bottleneck_down);
            out.emplace_back(p + "bottleneck.up", layer.bottleneck_up);
        }
    }
    return out;
}

}  // namespace aes
