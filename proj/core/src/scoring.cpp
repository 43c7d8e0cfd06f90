#include "aes/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aes/error.hpp"
#include "aes/evaluation.hpp"
#include "aes/model_io.hpp"
#include "aes/rng.hpp"

namespace aes {

void ScoreScale::validate() const {
    if (max_score <= min_score) {
        throw InputError("score scale: max_score must exceed min_score");
    }
}

double score_to_unit(int s, const ScoreScale& scale) {
    scale.validate();
    if (!scale.contains(s)) {
        throw InputError("score_to_unit: score " + std::to_string(s) + " outside scale " +
                         std::to_string(scale.min_score) + ".." + std::to_string(scale.max_score));
    }
    return (static_cast<double>(s - scale.min_score) + 0.5) / static_cast<double>(scale.n());
}

int unit_to_score(double y, const ScoreScale& scale) {
    scale.validate();
    if (!(y >= 0.0 && y <= 1.0)) {
        throw InputError("unit_to_score: value " + std::to_string(y) + " outside [0,1]");
    }
    const int n = scale.n();
    int idx = static_cast<int>(std::floor(y * static_cast<double>(n)));
    idx = std::clamp(idx, 0, n - 1);
    return scale.min_score + idx;
}

void TrainSpec::validate() const {
    if (learning_rates.empty() || batch_sizes.empty()) {
        throw InputError("train spec: learning_rates and batch_sizes must be nonempty");
    }
    for (double lr : learning_rates) {
        if (!(lr > 0.0)) throw InputError("train spec: learning rates must be positive");
    }
    for (std::size_t b : batch_sizes) {
        if (b == 0) throw InputError("train spec: batch sizes must be positive");
    }
    if (epochs == 0) throw InputError("train spec: epochs must be positive");
}

Tensor pool_first(const Tensor& encoded) {
    if (!encoded.defined() || encoded.rank() != 2 || encoded.rows() == 0) {
        throw InputError("pool_first: empty sequence");
    }
    return reshape(slice_rows(encoded, 0, 1), {encoded.cols()});
}

Tensor head_forward(const Tensor& features, const Tensor& w, const Tensor& b) {
    const std::size_t h = features.size();
    if (w.rank() != 2 || w.rows() != h || w.cols() != 1) {
        throw ShapeError("head_forward: weight shape does not match features");
    }
    Tensor z = matmul(reshape(features, {1, h}), w);  // 1 x 1
    return sigmoid(add(reshape(z, {1}), b));
}

ScoringModel build_scoring_model(const ModelConfig& config, std::uint64_t seed) {
    ScoringModel m;
    m.encoder = build_model(config, seed);
    Rng rng(Rng::mix(seed, 0x6865616400ULL));
    const double bound = std::sqrt(6.0 / static_cast<double>(config.hidden_dim + 1));
    std::vector<double> w(config.hidden_dim);
    for (double& x : w) x = rng.uniform(-bound, bound);
    m.head_w = Tensor::from({config.hidden_dim, 1}, std::move(w));
    m.head_b = Tensor::zeros({1});
    return m;
}

ScoringModel clone_scoring_model(const ScoringModel& source) {
    ScoringModel out;
    out.encoder = clone_model(source.encoder);
    out.head_w = Tensor::from(source.head_w.shape(), source.head_w.values());
    out.head_b = Tensor::from(source.head_b.shape(), source.head_b.values());
    return out;
}

std::vector<Tensor> trainable_tensors(ScoringModel& model) {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters(model.encoder)) out.push_back(t);
    out.push_back(model.head_w);
    out.push_back(model.head_b);
    return out;
}

namespace {

std::vector<std::size_t> to_size_t(const std::vector<int>& ids) {
    std::vector<std::size_t> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = static_cast<std::size_t>(ids[i]);
    return out;
}

Tensor forward_scalar(const ScoringModel& m, std::span<const std::size_t> ids) {
    const std::vector<std::size_t> segments(ids.size(), 0);
    Tensor x = embed(ids, segments, m.encoder.embeddings);
    Tensor enc = encoder_forward(x, m.encoder.layers, m.encoder.config);
    return head_forward(pool_first(enc), m.head_w, m.head_b);
}

// Reversible training forward: the encoder stack runs on detached leaves so
// no layer graph survives; the embedding graph and the stack outputs are kept
// for the two seeded backward passes.
struct RevActivation {
    Tensor x1_graph, x2_graph;  // connected to the embedding graph
    Tensor y1_leaf, y2_leaf;    // stack outputs as fresh leaves
};

RevActivation reversible_train_forward(const ScoringModel& m, std::span<const std::size_t> ids) {
    const std::vector<std::size_t> segments(ids.size(), 0);
    Tensor x = embed(ids, segments, m.encoder.embeddings);
    RevActivation act;
    act.x1_graph = take_cols_strided(x, 0, 2);
    act.x2_graph = take_cols_strided(x, 1, 2);
    Tensor a = Tensor::from(act.x1_graph.shape(), act.x1_graph.values());
    Tensor b = Tensor::from(act.x2_graph.shape(), act.x2_graph.values());
    for (const auto& layer : m.encoder.layers) {
        auto [y1, y2] = reversible_forward(a, b, *layer, m.encoder.config);
        a = Tensor::from(y1.shape(), y1.values());
        b = Tensor::from(y2.shape(), y2.values());
    }
    act.y1_leaf = a;
    act.y2_leaf = b;
    return act;
}

class Adam {
public:
    Adam(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
        for (auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor& p = params_[pi];
            auto& vals = p.values_mut();
            const bool has_grad = p.has_grad();
            const std::vector<double>* g = has_grad ? &p.grad() : nullptr;
            for (std::size_t i = 0; i < vals.size(); ++i) {
                const double gi = g ? (*g)[i] : 0.0;
                m_[pi][i] = kBeta1 * m_[pi][i] + (1.0 - kBeta1) * gi;
                v_[pi][i] = kBeta2 * v_[pi][i] + (1.0 - kBeta2) * gi * gi;
                vals[i] -= lr_ * (m_[pi][i] / bc1) / (std::sqrt(v_[pi][i] / bc2) + kEps);
            }
            p.zero_grad();
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_;
    std::uint64_t t_ = 0;
};

std::vector<std::vector<double>> snapshot_values(std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.values());
    return out;
}

void restore_values(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].values_mut() = snap[i];
}

double dev_qwk_or_sentinel(const ScoringModel& model,
                           const std::vector<std::vector<std::size_t>>& dev_tokens,
                           const std::vector<int>& dev_gold, const ScoreScale& scale) {
    if (dev_tokens.empty()) return -2.0;
    std::vector<int> pred(dev_tokens.size());
    for (std::size_t i = 0; i < dev_tokens.size(); ++i) {
        pred[i] = unit_to_score(forward_scalar(model, dev_tokens[i]).item(), scale);
    }
    try {
        return qwk(confusion(pred, dev_gold, scale));
    } catch (const UndefinedStatisticError&) {
        return -2.0;  // worse than any defined kappa
    }
}

struct CellOutcome {
    ScoringModel model;
    double dev_qwk = -std::numeric_limits<double>::infinity();
};

CellOutcome train_cell(const ScoringModel& init,
                       const std::vector<std::vector<std::size_t>>& train_tokens,
                       const std::vector<double>& train_targets,
                       const std::vector<std::vector<std::size_t>>& dev_tokens,
                       const std::vector<int>& dev_gold, const ScoreScale& scale, double lr,
                       std::size_t batch_size, const TrainSpec& spec, std::uint64_t cell_seed) {
    CellOutcome out{clone_scoring_model(init), -std::numeric_limits<double>::infinity()};
    ScoringModel& model = out.model;
    const bool reversible = model.encoder.config.reversible;
    std::vector<Tensor> params = trainable_tensors(model);
    Adam adam(params, lr);
    Rng rng(cell_seed);

    std::vector<std::vector<double>> best_snapshot;
    std::size_t stale_epochs = 0;

    std::vector<std::size_t> order(train_tokens.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(start + batch_size, order.size());
            Tensor loss_sum;
            std::vector<RevActivation> acts;
            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t idx = order[bi];
                Tensor pred;
                if (reversible) {
                    acts.push_back(reversible_train_forward(model, train_tokens[idx]));
                    const RevActivation& act = acts.back();
                    Tensor merged = interleave_cols(act.y1_leaf, act.y2_leaf);
                    pred = head_forward(pool_first(merged), model.head_w, model.head_b);
                } else {
                    pred = forward_scalar(model, train_tokens[idx]);
                }
                Tensor diff = sub(pred, Tensor::scalar(train_targets[idx]));
                Tensor sq = mul(diff, diff);
                loss_sum = loss_sum.defined() ? add(loss_sum, sq) : sq;
            }
            Tensor loss = aes::scale(loss_sum, 1.0 / static_cast<double>(end - start));
            backward(loss);
            if (reversible) {
                // Pull gradients back through the stack (recomputing inputs),
                // then through each essay's embedding graph.
                for (RevActivation& act : acts) {
                    auto [g1, g2] = reversible_backward(
                        act.y1_leaf, act.y2_leaf, act.y1_leaf.grad(), act.y2_leaf.grad(),
                        model.encoder.layers, model.encoder.config, nullptr);
                    const Tensor roots[] = {act.x1_graph, act.x2_graph};
                    const std::vector<double> seeds[] = {std::move(g1), std::move(g2)};
                    backward_seeded(roots, seeds);
                }
            }
            adam.step();
        }
        if (dev_tokens.empty()) {
            // No dev signal: train to completion and keep the final weights.
            out.dev_qwk = -2.0;
            continue;
        }
        const double dev = dev_qwk_or_sentinel(model, dev_tokens, dev_gold, scale);
        if (dev > out.dev_qwk) {
            out.dev_qwk = dev;
            best_snapshot = snapshot_values(params);
            stale_epochs = 0;
        } else {
            ++stale_epochs;
            if (spec.patience > 0 && stale_epochs >= spec.patience) break;
        }
    }
    if (!best_snapshot.empty()) restore_values(params, best_snapshot);
    return out;
}

void check_scores_in_scale(const std::vector<EssayRecord>& records, const ScoreScale& scale) {
    for (const auto& rec : records) {
        if (!scale.contains(rec.resolved)) {
            throw DataError("train: resolved score " + std::to_string(rec.resolved) +
                            " outside scale for essay_id " + std::to_string(rec.essay_id));
        }
    }
}

}  // namespace

double predict_raw(const ScoringModel& model, std::span<const std::size_t> token_ids) {
    return forward_scalar(model, token_ids).item();
}

std::vector<Prediction> predict(const ScoringModel& model, const Vocabulary& vocab,
                                const std::vector<EssayRecord>& records,
                                const ScoreScale& scale) {
    std::vector<Prediction> out;
    out.reserve(records.size());
    const std::size_t max_len = model.encoder.config.max_len;
    for (const auto& rec : records) {
        const double raw = predict_raw(model, to_size_t(encode(rec.text, vocab, max_len)));
        out.push_back({rec.essay_id, raw, unit_to_score(raw, scale)});
    }
    return out;
}

TrainResult train(const ScoringModel& init, const Vocabulary& vocab,
                  const std::vector<EssayRecord>& train_data,
                  const std::vector<EssayRecord>& dev_data, const ScoreScale& scale,
                  const TrainSpec& spec) {
    spec.validate();
    scale.validate();
    if (train_data.empty()) throw InputError("train: no training records");
    check_scores_in_scale(train_data, scale);
    check_scores_in_scale(dev_data, scale);

    const std::size_t max_len = init.encoder.config.max_len;
    std::vector<std::vector<std::size_t>> train_tokens, dev_tokens;
    std::vector<double> train_targets;
    std::vector<int> dev_gold;
    for (const auto& rec : train_data) {
        train_tokens.push_back(to_size_t(encode(rec.text, vocab, max_len)));
        train_targets.push_back(score_to_unit(rec.resolved, scale));
    }
    for (const auto& rec : dev_data) {
        dev_tokens.push_back(to_size_t(encode(rec.text, vocab, max_len)));
        dev_gold.push_back(rec.resolved);
    }

    TrainResult result;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t cell = 0;
    for (double lr : spec.learning_rates) {
        for (std::size_t batch : spec.batch_sizes) {
            CellOutcome outcome =
                train_cell(init, train_tokens, train_targets, dev_tokens, dev_gold, scale, lr,
                           batch, spec, Rng::mix(spec.rng_seed, cell));
            if (outcome.dev_qwk > best) {
                best = outcome.dev_qwk;
                result.model = std::move(outcome.model);
                result.best_learning_rate = lr;
                result.best_batch_size = batch;
                result.best_dev_qwk = outcome.dev_qwk;
            }
            ++cell;
        }
    }
    return result;
}

TrainResult train_with_split(const ScoringModel& init, const Vocabulary& vocab,
                             const std::vector<EssayRecord>& data, const ScoreScale& scale,
                             const TrainSpec& spec) {
    if (data.empty()) throw InputError("train: no training records");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(spec.rng_seed, 0xde0ULL));
    rng.shuffle(order);
    const std::size_t dev_count = data.size() >= 2 ? std::max<std::size_t>(1, data.size() / 10) : 0;
    std::vector<EssayRecord> dev, train_part;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < dev_count ? dev : train_part).push_back(data[order[i]]);
    }
    return train(init, vocab, train_part, dev, scale, spec);
}

Prediction ensemble(long long essay_id, std::span<const double> raws, const ScoreScale& scale) {
    if (raws.empty()) throw InputError("ensemble: empty output list");
    // Extended-precision accumulation keeps the mean of identical outputs
    // bit-exact (the sum stays representable for any realistic member count).
    long double sum = 0.0L;
    for (double r : raws) {
        if (!(r >= 0.0 && r <= 1.0)) {
            throw InputError("ensemble: raw output outside [0,1]");
        }
        sum += r;
    }
    const double mean_raw = static_cast<double>(sum / static_cast<long double>(raws.size()));
    return {essay_id, mean_raw, unit_to_score(mean_raw, scale)};
}

void save_scoring_model(const std::string& path, const ScoringModel& model) {
    save_model(path, model.encoder, {{"head.weight", model.head_w}, {"head.bias", model.head_b}});
}

ScoringModel load_scoring_model(const std::string& path) {
    LoadedModel loaded = load_model(path);
    auto w = loaded.extra.find("head.weight");
    auto b = loaded.extra.find("head.bias");
    if (w == loaded.extra.end() || b == loaded.extra.end()) {
        throw FormatError("model container: missing scoring head arrays");
    }
    ScoringModel out;
    out.encoder = std::move(loaded.model);
    out.head_w = w->second;
    out.head_b = b->second;
    return out;
}

}  // namespace aes
