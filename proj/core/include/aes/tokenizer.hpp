#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace aes {

/// Token symbols: 0..255 are raw bytes, 0x100 is the word-start marker (a
/// consumed leading space), 0x200.. are special-token sentinels.
using TokenSymbol = char16_t;
using TokenString = std::u16string;

constexpr TokenSymbol kMarkerSymbol = 0x100;
constexpr TokenSymbol kClsSymbol = 0x200;
constexpr TokenSymbol kSepSymbol = 0x201;
constexpr TokenSymbol kPadSymbol = 0x202;
constexpr TokenSymbol kUnkSymbol = 0x203;

struct Vocabulary {
    std::vector<TokenString> id_to_token;
    std::unordered_map<TokenString, int> token_to_id;
    std::vector<std::pair<TokenString, TokenString>> merges;  // in learned order

    static constexpr int cls_id = 0;
    static constexpr int sep_id = 1;
    static constexpr int pad_id = 2;
    static constexpr int unk_id = 3;
    static constexpr int marker_id = 4;
    /// cls/sep/pad/unk + marker + 256 byte-fallback tokens.
    static constexpr std::size_t base_size = 261;

    std::size_t size() const { return id_to_token.size(); }
    static int byte_id(unsigned char b) { return 5 + static_cast<int>(b); }
};

/// Greedy byte-pair training: start from the byte alphabet, repeatedly merge
/// the most frequent adjacent pair (ties broken lexicographically on
/// (left, right)) until `target_size` tokens exist or no pair occurs twice.
Vocabulary train_bpe(const std::vector<std::string>& corpus, std::size_t target_size,
                     std::uint64_t rng_seed);

/// [CLS] followed by merged subword ids, truncated to max_len. Byte fallback
/// guarantees every input byte is covered.
std::vector<int> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

/// Inverse of encode; cls/sep/pad/unk are dropped, the marker decodes to ' '.
std::string decode(std::span<const int> ids, const Vocabulary& vocab);

void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

/// Splits text into merge units: words (with a marker when they consumed a
/// preceding space) and standalone space bytes. Concatenating the decoded
/// units reproduces the input exactly.
std::vector<TokenString> pre_tokenize(std::string_view text);

/// Printable serialization of one token (\xNN escapes, \_ marker, <cls> etc).
std::string render_token(const TokenString& token);
TokenString parse_token(const std::string& line);

}  // namespace aes
