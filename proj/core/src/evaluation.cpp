#include "aes/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aes/error.hpp"
#include "aes/rng.hpp"

namespace aes {

AgreementTables confusion(std::span<const int> a, std::span<const int> b,
                          const ScoreScale& scale) {
    scale.validate();
    if (a.size() != b.size()) {
        throw InputError("confusion: sequence lengths disagree (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    }
    if (a.empty()) throw InputError("confusion: empty sequences");
    const std::size_t k = static_cast<std::size_t>(scale.n());

    AgreementTables t;
    t.k = k;
    t.observed.assign(k * k, 0.0);
    t.expected.assign(k * k, 0.0);
    t.weights.assign(k * k, 0.0);

    for (std::size_t idx = 0; idx < a.size(); ++idx) {
        if (!scale.contains(a[idx]) || !scale.contains(b[idx])) {
            throw InputError("confusion: value out of scale at position " + std::to_string(idx));
        }
        const std::size_t i = static_cast<std::size_t>(a[idx] - scale.min_score);
        const std::size_t j = static_cast<std::size_t>(b[idx] - scale.min_score);
        t.observed[i * k + j] += 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(a.size());
    for (double& v : t.observed) v *= inv_n;

    std::vector<double> row_marginal(k, 0.0), col_marginal(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            row_marginal[i] += t.observed[i * k + j];
            col_marginal[j] += t.observed[i * k + j];
        }
    }
    const double denom = static_cast<double>(k - 1) * static_cast<double>(k - 1);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            t.expected[i * k + j] = row_marginal[i] * col_marginal[j];
            const double d = static_cast<double>(i) - static_cast<double>(j);
            t.weights[i * k + j] = 1.0 - d * d / denom;
        }
    }
    return t;
}

double qwk(const AgreementTables& t) {
    if (t.k < 2) throw InputError("qwk: need at least 2 classes");
    double p_o = 0.0, p_e = 0.0;
    for (std::size_t i = 0; i < t.k * t.k; ++i) {
        p_o += t.weights[i] * t.observed[i];
        p_e += t.weights[i] * t.expected[i];
    }
    if (p_e >= 1.0 - 1e-15) {
        throw UndefinedStatisticError("qwk: degenerate marginals (chance agreement is 1)");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

namespace {

std::pair<double, double> mean_and_var(std::span<const int> v) {
    double mean = 0.0;
    for (int x : v) mean += static_cast<double>(x);
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (int x : v) {
        const double d = static_cast<double>(x) - mean;
        var += d * d;
    }
    var /= static_cast<double>(v.size());
    return {mean, var};
}

}  // namespace

double smd(std::span<const int> pred, std::span<const int> human) {
    if (pred.size() != human.size()) throw InputError("smd: sequence lengths disagree");
    if (pred.empty()) throw InputError("smd: empty sequences");
    const auto [mp, vp] = mean_and_var(pred);
    const auto [mh, vh] = mean_and_var(human);
    const double pooled = (vp + vh) / 2.0;
    if (pooled <= 0.0) {
        throw UndefinedStatisticError("smd: zero pooled variance");
    }
    return (mp - mh) / std::sqrt(pooled);
}

double acc(std::span<const int> pred, std::span<const int> human) {
    if (pred.size() != human.size()) throw InputError("acc: sequence lengths disagree");
    if (pred.empty()) throw InputError("acc: empty sequences");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == human[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

AgreementReport agreement(std::span<const int> pred, std::span<const int> human,
                          const ScoreScale& scale) {
    AgreementReport r;
    r.qwk = qwk(confusion(pred, human, scale));
    r.smd = smd(pred, human);
    r.acc = acc(pred, human);
    r.n = pred.size();
    return r;
}

KfoldResult kfold_evaluate(const std::vector<EssayRecord>& records, const FoldSplit& split,
                           const Trainer& trainer, const ScoreScale& scale, std::uint64_t seed) {
    if (split.num_folds < 2) throw InputError("kfold: need at least 2 folds");
    for (const auto& rec : records) {
        if (!split.fold_of.count(rec.essay_id)) {
            throw DataError("kfold: essay_id " + std::to_string(rec.essay_id) +
                            " has no fold assignment");
        }
    }

    KfoldResult result;
    double qwk_sum = 0.0;
    for (int fold = 0; fold < split.num_folds; ++fold) {
        std::vector<EssayRecord> test, rest;
        for (const auto& rec : records) {
            (split.fold_of.at(rec.essay_id) == fold ? test : rest).push_back(rec);
        }
        if (test.empty()) {
            throw DataError("kfold: fold " + std::to_string(fold) + " has no test records");
        }
        if (rest.empty()) {
            throw DataError("kfold: fold " + std::to_string(fold) + " has no training records");
        }
        // Dev portion is derived, not stored: seeded shuffle, 10% (at least 1).
        std::vector<std::size_t> order(rest.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(fold)));
        rng.shuffle(order);
        const std::size_t dev_count = std::max<std::size_t>(1, rest.size() / 10);
        std::vector<EssayRecord> dev, train;
        for (std::size_t i = 0; i < order.size(); ++i) {
            (i < dev_count ? dev : train).push_back(rest[order[i]]);
        }
        if (train.empty()) throw DataError("kfold: fold " + std::to_string(fold) +
                                           " has no records left to train on");

        const Predictor predictor = trainer(train, dev);
        const std::vector<int> pred = predictor(test);
        if (pred.size() != test.size()) {
            throw ContractError("kfold: predictor returned wrong number of scores");
        }
        std::vector<int> gold(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) gold[i] = test[i].resolved;

        result.folds.push_back(agreement(pred, gold, scale));
        qwk_sum += result.folds.back().qwk;
    }
    result.average_qwk = qwk_sum / static_cast<double>(split.num_folds);
    return result;
}

}  // namespace aes
