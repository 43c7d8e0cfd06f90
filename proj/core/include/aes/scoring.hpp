#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aes/blocks.hpp"
#include "aes/data.hpp"
#include "aes/score_scale.hpp"
#include "aes/tensor.hpp"
#include "aes/tokenizer.hpp"

namespace aes {

struct Prediction {
    long long essay_id = 0;
    double raw = 0.0;  // sigmoid output in [0,1]
    int score = 0;     // unit_to_score(raw)
};

struct TrainSpec {
    std::vector<double> learning_rates{1e-3, 3e-4};
    std::vector<std::size_t> batch_sizes{8, 16};
    std::size_t epochs = 4;
    std::size_t patience = 2;  // epochs without dev improvement before stopping
    std::uint64_t rng_seed = 42;

    void validate() const;
};

/// Row 0 of the encoded sequence, as a rank-1 feature vector.
Tensor pool_first(const Tensor& encoded);

/// sigmoid(features . w + b); scalar in (0,1).
Tensor head_forward(const Tensor& features, const Tensor& w, const Tensor& b);

struct ScoringModel {
    Model encoder;
    Tensor head_w;  // H x 1
    Tensor head_b;  // scalar
};

ScoringModel build_scoring_model(const ModelConfig& config, std::uint64_t seed);
ScoringModel clone_scoring_model(const ScoringModel& source);
std::vector<Tensor> trainable_tensors(ScoringModel& model);

/// Raw sigmoid output for one tokenized essay.
double predict_raw(const ScoringModel& model, std::span<const std::size_t> token_ids);

std::vector<Prediction> predict(const ScoringModel& model, const Vocabulary& vocab,
                                const std::vector<EssayRecord>& records,
                                const ScoreScale& scale);

struct TrainResult {
    ScoringModel model;
    double best_learning_rate = 0.0;
    std::size_t best_batch_size = 0;
    double best_dev_qwk = 0.0;
};

/// Grid search over (learning rate, batch size): each cell minimizes the mean
/// squared error between the sigmoid output and the score midpoint by Adam,
/// with per-epoch early stopping on dev QWK; the cell with the best dev QWK
/// wins. Deterministic under spec.rng_seed.
TrainResult train(const ScoringModel& init, const Vocabulary& vocab,
                  const std::vector<EssayRecord>& train_data,
                  const std::vector<EssayRecord>& dev_data, const ScoreScale& scale,
                  const TrainSpec& spec);

/// Splits off a seeded 10% dev portion, then trains as above.
TrainResult train_with_split(const ScoringModel& init, const Vocabulary& vocab,
                             const std::vector<EssayRecord>& data, const ScoreScale& scale,
                             const TrainSpec& spec);

/// Arithmetic mean of per-model raw outputs, then the usual rounding.
Prediction ensemble(long long essay_id, std::span<const double> raws, const ScoreScale& scale);

void save_scoring_model(const std::string& path, const ScoringModel& model);
ScoringModel load_scoring_model(const std::string& path);

}  // namespace aes
