#include "aes/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "aes/error.hpp"

namespace aes {

namespace {

struct TokenPair {
    TokenString left, right;
    bool operator==(const TokenPair& o) const { return left == o.left && right == o.right; }
    bool operator<(const TokenPair& o) const {
        return left != o.left ? left < o.left : right < o.right;
    }
};

struct TokenPairHash {
    std::size_t operator()(const TokenPair& p) const {
        const std::size_t h1 = std::hash<TokenString>{}(p.left);
        const std::size_t h2 = std::hash<TokenString>{}(p.right);
        return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
    }
};

Vocabulary base_vocabulary() {
    Vocabulary v;
    v.id_to_token = {TokenString{kClsSymbol}, TokenString{kSepSymbol}, TokenString{kPadSymbol},
                     TokenString{kUnkSymbol}, TokenString{kMarkerSymbol}};
    for (int b = 0; b < 256; ++b) v.id_to_token.push_back(TokenString{static_cast<TokenSymbol>(b)});
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i) {
        v.token_to_id.emplace(v.id_to_token[i], static_cast<int>(i));
    }
    return v;
}

// Replace all non-overlapping (left, right) adjacencies left-to-right.
std::vector<TokenString> apply_merge(const std::vector<TokenString>& tokens,
                                     const TokenString& left, const TokenString& right,
                                     const TokenString& merged) {
    std::vector<TokenString> out;
    out.reserve(tokens.size());
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (i + 1 < tokens.size() && tokens[i] == left && tokens[i + 1] == right) {
            out.push_back(merged);
            i += 2;
        } else {
            out.push_back(tokens[i]);
            ++i;
        }
    }
    return out;
}

}  // namespace

std::vector<TokenString> pre_tokenize(std::string_view text) {
    std::vector<TokenString> pieces;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c == ' ') {
            if (i + 1 < n && text[i + 1] != ' ') {
                // Space absorbed by the following word as a marker.
                TokenString piece{kMarkerSymbol};
                ++i;
                while (i < n && text[i] != ' ') {
                    piece.push_back(static_cast<TokenSymbol>(static_cast<unsigned char>(text[i])));
                    ++i;
                }
                pieces.push_back(std::move(piece));
            } else {
                pieces.push_back(TokenString{static_cast<TokenSymbol>(' ')});
                ++i;
            }
        } else {
            TokenString piece;
            while (i < n && text[i] != ' ') {
                piece.push_back(static_cast<TokenSymbol>(static_cast<unsigned char>(text[i])));
                ++i;
            }
            pieces.push_back(std::move(piece));
        }
    }
    return pieces;
}

Vocabulary train_bpe(const std::vector<std::string>& corpus, std::size_t target_size,
                     std::uint64_t rng_seed) {
    (void)rng_seed;  // training is deterministic; the seed is part of the interface
    if (corpus.empty()) throw InputError("train_bpe: empty corpus");
    if (target_size < Vocabulary::base_size) {
        throw InputError("train_bpe: target_size must be at least " +
                         std::to_string(Vocabulary::base_size));
    }

    Vocabulary vocab = base_vocabulary();

    // Unique pieces with frequencies; training operates on piece types.
    struct Word {
        std::vector<TokenString> tokens;
        std::uint64_t freq = 0;
    };
    std::vector<Word> words;
    std::unordered_map<TokenString, std::size_t> word_index;
    for (const std::string& doc : corpus) {
        for (TokenString& piece : pre_tokenize(doc)) {
            auto [it, inserted] = word_index.emplace(piece, words.size());
            if (inserted) {
                Word w;
                w.tokens.reserve(piece.size());
                for (TokenSymbol s : piece) w.tokens.push_back(TokenString{s});
                w.freq = 1;
                words.push_back(std::move(w));
            } else {
                ++words[it->second].freq;
            }
        }
    }

    struct PairState {
        std::uint64_t count = 0;
        std::unordered_set<std::size_t> words;
    };
    std::unordered_map<TokenPair, PairState, TokenPairHash> pairs;

    struct HeapEntry {
        std::uint64_t count;
        TokenPair pair;
        bool operator<(const HeapEntry& o) const {
            // max-heap on count; lexicographically smallest pair wins ties
            return count != o.count ? count < o.count : o.pair < pair;
        }
    };
    std::priority_queue<HeapEntry> heap;

    auto add_word_pairs = [&](std::size_t wi, int sign) {
        const Word& w = words[wi];
        for (std::size_t i = 0; i + 1 < w.tokens.size(); ++i) {
            const TokenPair p{w.tokens[i], w.tokens[i + 1]};
            auto& st = pairs[p];
            if (sign > 0) {
                st.count += w.freq;
                st.words.insert(wi);
            } else {
                st.count -= w.freq;
            }
        }
    };

    for (std::size_t wi = 0; wi < words.size(); ++wi) add_word_pairs(wi, +1);
    for (const auto& [p, st] : pairs) {
        if (st.count >= 2) heap.push({st.count, p});
    }

    while (vocab.size() < target_size && !heap.empty()) {
        const HeapEntry top = heap.top();
        heap.pop();
        auto it = pairs.find(top.pair);
        if (it == pairs.end() || it->second.count != top.count) continue;  // stale entry
        if (top.count < 2) continue;

        const TokenString merged = top.pair.left + top.pair.right;
        vocab.token_to_id.emplace(merged, static_cast<int>(vocab.size()));
        vocab.id_to_token.push_back(merged);
        vocab.merges.emplace_back(top.pair.left, top.pair.right);

        // Recount pairs of every word containing the merged pair.
        const std::vector<std::size_t> touched(it->second.words.begin(), it->second.words.end());
        std::unordered_set<TokenPair, TokenPairHash> dirty;
        for (std::size_t wi : touched) {
            Word& w = words[wi];
            for (std::size_t i = 0; i + 1 < w.tokens.size(); ++i) {
                dirty.insert(TokenPair{w.tokens[i], w.tokens[i + 1]});
            }
            add_word_pairs(wi, -1);
            w.tokens = apply_merge(w.tokens, top.pair.left, top.pair.right, merged);
            add_word_pairs(wi, +1);
            for (std::size_t i = 0; i + 1 < w.tokens.size(); ++i) {
                dirty.insert(TokenPair{w.tokens[i], w.tokens[i + 1]});
            }
        }
        pairs.erase(top.pair);
        for (const TokenPair& p : dirty) {
            if (p == top.pair) continue;
            auto pit = pairs.find(p);
            if (pit == pairs.end()) continue;
            if (pit->second.count == 0) {
                pairs.erase(pit);
            } else if (pit->second.count >= 2) {
                heap.push({pit->second.count, p});
            }
        }
    }
    return vocab;
}

std::vector<int> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len == 0) throw InputError("encode: max_len must be positive");
    std::unordered_map<TokenPair, std::size_t, TokenPairHash> rank;
    for (std::size_t r = 0; r < vocab.merges.size(); ++r) {
        rank.emplace(TokenPair{vocab.merges[r].first, vocab.merges[r].second}, r);
    }

    std::vector<int> ids{Vocabulary::cls_id};
    for (const TokenString& piece : pre_tokenize(text)) {
        std::vector<TokenString> tokens;
        tokens.reserve(piece.size());
        for (TokenSymbol s : piece) tokens.push_back(TokenString{s});
        // Replay merges: always apply the earliest-learned applicable merge.
        while (tokens.size() > 1) {
            std::size_t best_rank = vocab.merges.size();
            for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
                auto it = rank.find(TokenPair{tokens[i], tokens[i + 1]});
                if (it != rank.end() && it->second < best_rank) best_rank = it->second;
            }
            if (best_rank == vocab.merges.size()) break;
            const auto& [left, right] = vocab.merges[best_rank];
            tokens = apply_merge(tokens, left, right, left + right);
        }
        for (const TokenString& t : tokens) {
            auto it = vocab.token_to_id.find(t);
            if (it == vocab.token_to_id.end()) {
                throw Error(ErrorCategory::internal, "encode: merge produced unknown token");
            }
            ids.push_back(it->second);
            if (ids.size() == max_len) return ids;
        }
    }
    return ids;
}

std::string decode(std::span<const int> ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            throw InputError("decode: unknown token id " + std::to_string(id));
        }
        if (id == Vocabulary::cls_id || id == Vocabulary::sep_id || id == Vocabulary::pad_id ||
            id == Vocabulary::unk_id) {
            continue;
        }
        for (TokenSymbol s : vocab.id_to_token[id]) {
            if (s == kMarkerSymbol) {
                out.push_back(' ');
            } else if (s < 0x100) {
                out.push_back(static_cast<char>(static_cast<unsigned char>(s)));
            }
        }
    }
    return out;
}

std::string render_token(const TokenString& token) {
    if (token == TokenString{kClsSymbol}) return "<cls>";
    if (token == TokenString{kSepSymbol}) return "<sep>";
    if (token == TokenString{kPadSymbol}) return "<pad>";
    if (token == TokenString{kUnkSymbol}) return "<unk>";
    std::string out;
    for (TokenSymbol s : token) {
        if (s == kMarkerSymbol) {
            out += "\\_";
        } else if (s == static_cast<TokenSymbol>('\\')) {
            out += "\\\\";
        } else if (s == static_cast<TokenSymbol>('<')) {
            out += "\\x3C";
        } else if (s >= 0x21 && s <= 0x7E) {
            out.push_back(static_cast<char>(s));
        } else if (s < 0x100) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\x%02X", static_cast<unsigned>(s));
            out += buf;
        } else {
            throw FormatError("render_token: unexpected symbol");
        }
    }
    return out;
}

TokenString parse_token(const std::string& line) {
    if (line == "<cls>") return TokenString{kClsSymbol};
    if (line == "<sep>") return TokenString{kSepSymbol};
    if (line == "<pad>") return TokenString{kPadSymbol};
    if (line == "<unk>") return TokenString{kUnkSymbol};
    TokenString out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (c == '\\') {
            if (i + 1 >= line.size()) throw FormatError("vocabulary: dangling escape");
            const char e = line[i + 1];
            if (e == '_') {
                out.push_back(kMarkerSymbol);
                i += 2;
            } else if (e == '\\') {
                out.push_back(static_cast<TokenSymbol>('\\'));
                i += 2;
            } else if (e == 'x') {
                if (i + 3 >= line.size()) throw FormatError("vocabulary: truncated \\xNN escape");
                auto hex = [](char h) -> int {
                    if (h >= '0' && h <= '9') return h - '0';
                    if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                    if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                    throw FormatError("vocabulary: bad hex digit in escape");
                };
                out.push_back(static_cast<TokenSymbol>(hex(line[i + 2]) * 16 + hex(line[i + 3])));
                i += 4;
            } else {
                throw FormatError("vocabulary: unknown escape");
            }
        } else if (static_cast<unsigned char>(c) >= 0x21 && static_cast<unsigned char>(c) <= 0x7E) {
            out.push_back(static_cast<TokenSymbol>(static_cast<unsigned char>(c)));
            ++i;
        } else {
            throw FormatError("vocabulary: unescaped byte in token line");
        }
    }
    if (out.empty()) throw FormatError("vocabulary: empty token line");
    return out;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
    std::ostringstream os;
    for (const TokenString& t : vocab.id_to_token) os << render_token(t) << '\n';
    os << '\n';
    for (const auto& [left, right] : vocab.merges) {
        os << render_token(left) << '\t' << render_token(right) << '\n';
    }
    const std::string body = os.str();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("save_vocabulary: cannot open " + tmp);
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw FormatError("save_vocabulary: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("save_vocabulary: rename failed for " + path);
    }
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("load_vocabulary: cannot open " + path);
    Vocabulary vocab;
    std::string line;
    bool in_merges = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (in_merges) throw FormatError("vocabulary: unexpected blank line in merges");
            in_merges = true;
            continue;
        }
        if (!in_merges) {
            TokenString token = parse_token(line);
            const int id = static_cast<int>(vocab.id_to_token.size());
            if (!vocab.token_to_id.emplace(token, id).second) {
                throw FormatError("vocabulary: duplicate token at id " + std::to_string(id));
            }
            vocab.id_to_token.push_back(std::move(token));
        } else {
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos) throw FormatError("vocabulary: merge line missing tab");
            TokenString left = parse_token(line.substr(0, tab));
            TokenString right = parse_token(line.substr(tab + 1));
            if (!vocab.token_to_id.count(left + right)) {
                throw FormatError("vocabulary: merge result not in token list");
            }
            vocab.merges.emplace_back(std::move(left), std::move(right));
        }
    }
    if (vocab.size() < Vocabulary::base_size) {
        throw FormatError("vocabulary: missing base alphabet");
    }
    const Vocabulary base = base_vocabulary();
    for (std::size_t i = 0; i < Vocabulary::base_size; ++i) {
        if (vocab.id_to_token[i] != base.id_to_token[i]) {
            throw FormatError("vocabulary: base alphabet order is wrong at id " +
                              std::to_string(i));
        }
    }
    return vocab;
}

}  // namespace aes
