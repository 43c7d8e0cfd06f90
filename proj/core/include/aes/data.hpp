#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "aes/score_scale.hpp"

namespace aes {

struct EssayRecord {
    long long essay_id = 0;
    int prompt_id = 0;  // 1..8
    std::string text;
    int rater1 = 0;
    int rater2 = 0;
    int resolved = 0;
};

struct PromptSpec {
    ScoreScale rater_range;
    ScoreScale resolved_range;
    std::size_t training_examples = 0;
};

/// The eight ASAP prompts: rater and resolved score ranges plus the published
/// training-set sizes.
struct PromptCatalog {
    std::array<PromptSpec, 8> prompts;

    const PromptSpec& prompt(int id) const;
};

PromptCatalog asap_catalog();

struct IngestResult {
    std::vector<EssayRecord> records;
    std::vector<std::string> rejected;  // one line per rejected row, with row number
};

/// Reads a tab-separated essay file (header must name essay_id, essay_set,
/// essay, the two rater columns and the resolved-score column), keeps rows of
/// `prompt_id`, validates scores against the catalog. Bad rows never abort
/// the run; they are reported in `rejected`.
IngestResult ingest(const std::string& path, int prompt_id, const PromptCatalog& catalog);

// ---- small file formats ----------------------------------------------------

struct PredictionRow {
    long long essay_id = 0;
    double raw = 0.0;
    int score = 0;
};

void write_predictions(const std::string& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(const std::string& path);

/// essay_id -> integer score from any TSV with an essay_id column and one of
/// score/resolved/domain1_score.
std::unordered_map<long long, int> read_score_column(const std::string& path);

void write_folds(const std::string& path, const std::vector<std::pair<long long, int>>& folds);
std::unordered_map<long long, int> read_folds(const std::string& path);

/// Atomic write (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace aes
