#include "aes/data.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aes/error.hpp"

namespace aes {

const PromptSpec& PromptCatalog::prompt(int id) const {
    if (id < 1 || id > 8) throw InputError("prompt id must be 1..8, got " + std::to_string(id));
    return prompts[static_cast<std::size_t>(id - 1)];
}

PromptCatalog asap_catalog() {
    PromptCatalog c;
    c.prompts = {{
        {{1, 6}, {2, 12}, 1783},
        {{1, 6}, {1, 6}, 1800},
        {{0, 3}, {0, 3}, 1726},
        {{0, 3}, {0, 3}, 1772},
        {{0, 4}, {0, 4}, 1805},
        {{0, 4}, {0, 4}, 1800},
        {{0, 12}, {2, 24}, 1569},
        {{5, 30}, {10, 60}, 723},
    }};
    return c;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

bool parse_int(const std::string& s, long long& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && !s.empty();
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::vector<std::string>& candidates) {
    for (const std::string& want : candidates) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == want) return i;
        }
    }
    return header.size();
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

IngestResult ingest(const std::string& path, int prompt_id, const PromptCatalog& catalog) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("ingest: cannot open " + path);
    const PromptSpec& spec = catalog.prompt(prompt_id);

    std::string line;
    if (!std::getline(f, line)) throw FormatError("ingest: empty file " + path);
    const auto header = split_tabs(strip_cr(line));

    const std::size_t col_id = find_column(header, {"essay_id"});
    const std::size_t col_set = find_column(header, {"essay_set"});
    const std::size_t col_text = find_column(header, {"essay"});
    const std::size_t col_r1 = find_column(header, {"rater1_domain1", "rater1"});
    const std::size_t col_r2 = find_column(header, {"rater2_domain1", "rater2"});
    const std::size_t col_res = find_column(header, {"domain1_score", "resolved", "resolved_score"});
    const std::size_t miss = header.size();
    if (col_id == miss || col_set == miss || col_text == miss || col_r1 == miss ||
        col_r2 == miss || col_res == miss) {
        throw FormatError("ingest: header is missing a required column "
                          "(essay_id/essay_set/essay/rater1/rater2/resolved)");
    }

    IngestResult out;
    std::size_t row = 1;
    while (std::getline(f, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        auto reject = [&](const std::string& why) {
            out.rejected.push_back("row " + std::to_string(row) + ": " + why);
        };
        if (fields.size() <= std::max({col_id, col_set, col_text, col_r1, col_r2, col_res})) {
            reject("too few columns");
            continue;
        }
        long long set_id = 0;
        if (!parse_int(fields[col_set], set_id)) {
            reject("essay_set is not an integer");
            continue;
        }
        if (set_id != prompt_id) continue;  // other prompts are simply excluded

        EssayRecord rec;
        long long tmp = 0;
        if (!parse_int(fields[col_id], tmp)) {
            reject("essay_id is not an integer");
            continue;
        }
        rec.essay_id = tmp;
        rec.prompt_id = prompt_id;
        rec.text = fields[col_text];
        bool ok = true;
        for (auto [col, target, name] :
             {std::tuple{col_r1, &rec.rater1, "rater1"}, std::tuple{col_r2, &rec.rater2, "rater2"},
              std::tuple{col_res, &rec.resolved, "resolved"}}) {
            if (!parse_int(fields[col], tmp)) {
                reject(std::string(name) + " is not an integer (essay_id " +
                       std::to_string(rec.essay_id) + ")");
                ok = false;
                break;
            }
            *target = static_cast<int>(tmp);
        }
        if (!ok) continue;
        if (!spec.rater_range.contains(rec.rater1) || !spec.rater_range.contains(rec.rater2)) {
            reject("rater score out of range (essay_id " + std::to_string(rec.essay_id) + ")");
            continue;
        }
        if (!spec.resolved_range.contains(rec.resolved)) {
            reject("resolved score out of range (essay_id " + std::to_string(rec.essay_id) + ")");
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("cannot open " + tmp + " for writing");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw FormatError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("rename failed for " + path);
    }
}

void write_predictions(const std::string& path, const std::vector<PredictionRow>& rows) {
    std::ostringstream os;
    os << "essay_id\traw\tscore\n";
    char buf[32];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.raw);
        os << r.essay_id << '\t' << buf << '\t' << r.score << '\n';
    }
    write_file_atomic(path, os.str());
}

std::vector<PredictionRow> read_predictions(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("read_predictions: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || strip_cr(line) != "essay_id\traw\tscore") {
        throw FormatError("read_predictions: bad header in " + path);
    }
    std::vector<PredictionRow> out;
    std::size_t row = 1;
    while (std::getline(f, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 3) {
            throw FormatError("read_predictions: row " + std::to_string(row) + " malformed");
        }
        PredictionRow r;
        long long tmp = 0;
        if (!parse_int(fields[0], tmp)) {
            throw FormatError("read_predictions: bad essay_id at row " + std::to_string(row));
        }
        r.essay_id = tmp;
        try {
            r.raw = std::stod(fields[1]);
        } catch (const std::exception&) {
            throw FormatError("read_predictions: bad raw value at row " + std::to_string(row));
        }
        if (!parse_int(fields[2], tmp)) {
            throw FormatError("read_predictions: bad score at row " + std::to_string(row));
        }
        r.score = static_cast<int>(tmp);
        out.push_back(r);
    }
    return out;
}

std::unordered_map<long long, int> read_score_column(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw FormatError("empty file " + path);
    const auto header = split_tabs(strip_cr(line));
    const std::size_t col_id = find_column(header, {"essay_id"});
    const std::size_t col_score = find_column(header, {"score", "resolved", "domain1_score"});
    if (col_id == header.size() || col_score == header.size()) {
        throw FormatError(path + ": header needs essay_id and a score column");
    }
    std::unordered_map<long long, int> out;
    std::size_t row = 1;
    while (std::getline(f, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() <= std::max(col_id, col_score)) {
            throw FormatError(path + ": row " + std::to_string(row) + " has too few columns");
        }
        long long id = 0, score = 0;
        if (!parse_int(fields[col_id], id) || !parse_int(fields[col_score], score)) {
            throw FormatError(path + ": row " + std::to_string(row) + " is not numeric");
        }
        out[id] = static_cast<int>(score);
    }
    return out;
}

void write_folds(const std::string& path, const std::vector<std::pair<long long, int>>& folds) {
    std::ostringstream os;
    os << "essay_id\tfold\n";
    for (const auto& [id, fold] : folds) os << id << '\t' << fold << '\n';
    write_file_atomic(path, os.str());
}

std::unordered_map<long long, int> read_folds(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("read_folds: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || strip_cr(line) != "essay_id\tfold") {
        throw FormatError("read_folds: bad header in " + path);
    }
    std::unordered_map<long long, int> out;
    std::size_t row = 1;
    while (std::getline(f, line)) {
        ++row;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        long long id = 0, fold = 0;
        if (fields.size() != 2 || !parse_int(fields[0], id) || !parse_int(fields[1], fold)) {
            throw FormatError("read_folds: row " + std::to_string(row) + " malformed");
        }
        if (fold < 0 || fold > 4) {
            throw DataError("read_folds: fold must be 0..4 at row " + std::to_string(row));
        }
        out[id] = static_cast<int>(fold);
    }
    return out;
}

}  // namespace aes
