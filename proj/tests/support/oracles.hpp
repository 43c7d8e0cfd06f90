#pragma once

#include <span>
#include <vector>

#include "aes/error.hpp"
#include "aes/rng.hpp"
#include "aes/score_scale.hpp"

namespace aes::test {

/// Independent route to the weighted kappa: the squared-distance form
/// 1 - sum(d.x)/sum(d.m) with d_ij = (i-j)^2/(k-1)^2, computed from raw
/// tallies without the AgreementTables machinery.
inline double reference_qwk(std::span<const int> a, std::span<const int> b,
                            const ScoreScale& scale) {
    const int k = scale.n();
    std::vector<double> counts(static_cast<std::size_t>(k) * k, 0.0);
    std::vector<double> row(k, 0.0), col(k, 0.0);
    for (std::size_t t = 0; t < a.size(); ++t) {
        const int i = a[t] - scale.min_score;
        const int j = b[t] - scale.min_score;
        counts[static_cast<std::size_t>(i) * k + j] += 1.0;
        row[i] += 1.0;
        col[j] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    double num = 0.0, den = 0.0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double d = static_cast<double>((i - j) * (i - j)) /
                             (static_cast<double>(k - 1) * (k - 1));
            num += d * counts[static_cast<std::size_t>(i) * k + j] / n;
            den += d * (row[i] / n) * (col[j] / n);
        }
    }
    if (den == 0.0) throw UndefinedStatisticError("reference_qwk: degenerate");
    return 1.0 - num / den;
}

inline std::vector<int> random_scores(Rng& rng, std::size_t n, const ScoreScale& scale) {
    std::vector<int> out(n);
    for (int& s : out) {
        s = scale.min_score + static_cast<int>(rng.below(static_cast<std::uint64_t>(scale.n())));
    }
    return out;
}

}  // namespace aes::test
