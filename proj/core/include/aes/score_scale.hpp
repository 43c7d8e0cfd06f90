#pragma once

namespace aes {

/// Inclusive integer score range (part of the scoring module's surface; kept
/// in its own header because data ingestion and evaluation share it).
struct ScoreScale {
    int min_score = 0;
    int max_score = 0;

    int n() const { return max_score - min_score + 1; }
    bool contains(int s) const { return s >= min_score && s <= max_score; }
    void validate() const;
};

/// Midpoint of the s-th of n even subintervals of [0,1]: (s - min + 0.5)/n.
double score_to_unit(int s, const ScoreScale& scale);

/// min + clamp(floor(y*n), 0, n-1); monotone, left inverse of score_to_unit.
int unit_to_score(double y, const ScoreScale& scale);

}  // namespace aes
