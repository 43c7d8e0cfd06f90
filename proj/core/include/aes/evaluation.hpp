#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "aes/data.hpp"
#include "aes/score_scale.hpp"

namespace aes {

/// The matrices behind the kappa statistic: observed joint proportions x,
/// chance-expected proportions m (outer product of the marginals), quadratic
/// agreement weights w_ij = 1 - (i-j)^2/(k-1)^2.
struct AgreementTables {
    std::size_t k = 0;
    std::vector<double> observed;
    std::vector<double> expected;
    std::vector<double> weights;
};

struct AgreementReport {
    double qwk = 0.0;
    double smd = 0.0;
    double acc = 0.0;
    std::size_t n = 0;
};

struct FoldSplit {
    std::unordered_map<long long, int> fold_of;  // essay_id -> 0..4
    int num_folds = 5;
};

AgreementTables confusion(std::span<const int> a, std::span<const int> b,
                          const ScoreScale& scale);

/// Quadratically weighted kappa in agreement form: (p_o - p_e)/(1 - p_e) with
/// p_o = sum w.x and p_e = sum w.m. 1 on perfect agreement, 0 at independence.
double qwk(const AgreementTables& tables);

/// (mean(pred) - mean(human)) / sqrt((var(pred) + var(human)) / 2), population
/// variances.
double smd(std::span<const int> pred, std::span<const int> human);

double acc(std::span<const int> pred, std::span<const int> human);

AgreementReport agreement(std::span<const int> pred, std::span<const int> human,
                          const ScoreScale& scale);

using Predictor = std::function<std::vector<int>(const std::vector<EssayRecord>&)>;
using Trainer = std::function<Predictor(const std::vector<EssayRecord>& train,
                                        const std::vector<EssayRecord>& dev)>;

struct KfoldResult {
    std::vector<AgreementReport> folds;
    double average_qwk = 0.0;
};

/// Per fold: train on the non-test portion (10% of it held out as dev, seeded),
/// score the test portion against resolved scores. Summary QWK is the plain
/// mean over folds.
KfoldResult kfold_evaluate(const std::vector<EssayRecord>& records, const FoldSplit& split,
                           const Trainer& trainer, const ScoreScale& scale, std::uint64_t seed);

}  // namespace aes
