#include "aes/config_file.hpp"

#include <fstream>
#include <sstream>

#include "aes/error.hpp"

namespace aes {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw FormatError("config: " + key + " expects an unsigned integer, got '" + value + "'");
    }
}

double parse_f64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw FormatError("config: " + key + " expects a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw FormatError("config: " + key + " expects true/false, got '" + value + "'");
}

std::vector<std::string> split_commas(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    bool lsh_enabled = false;
    LshConfig lsh;
    bool saw_lr = false, saw_batch = false;

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw FormatError("config: line " + std::to_string(lineno) + " is missing key or value");
        }

        if (key == "vocab_size") {
            cfg.model.vocab_size = parse_u64(key, value);
        } else if (key == "embed_dim") {
            cfg.model.embed_dim = parse_u64(key, value);
        } else if (key == "hidden_dim") {
            cfg.model.hidden_dim = parse_u64(key, value);
        } else if (key == "ff_dim") {
            cfg.model.ff_dim = parse_u64(key, value);
        } else if (key == "num_layers") {
            cfg.model.num_layers = parse_u64(key, value);
        } else if (key == "num_heads") {
            cfg.model.num_heads = parse_u64(key, value);
        } else if (key == "max_len") {
            cfg.model.max_len = parse_u64(key, value);
        } else if (key == "bottleneck_dim") {
            cfg.model.bottleneck_dim = parse_u64(key, value);
        } else if (key == "share_layers") {
            cfg.model.share_layers = parse_bool(key, value);
        } else if (key == "reversible") {
            cfg.model.reversible = parse_bool(key, value);
        } else if (key == "num_segments") {
            cfg.model.num_segments = parse_u64(key, value);
        } else if (key == "lsh") {
            lsh_enabled = parse_bool(key, value);
        } else if (key == "lsh_hashes") {
            lsh.num_hashes = parse_u64(key, value);
        } else if (key == "lsh_buckets") {
            lsh.num_buckets = parse_u64(key, value);
        } else if (key == "lsh_chunk") {
            lsh.chunk_size = parse_u64(key, value);
        } else if (key == "lsh_seed") {
            lsh.rng_seed = parse_u64(key, value);
        } else if (key == "learning_rates") {
            cfg.train.learning_rates.clear();
            for (const std::string& v : split_commas(value)) {
                cfg.train.learning_rates.push_back(parse_f64(key, v));
            }
            saw_lr = true;
        } else if (key == "batch_sizes") {
            cfg.train.batch_sizes.clear();
            for (const std::string& v : split_commas(value)) {
                cfg.train.batch_sizes.push_back(parse_u64(key, v));
            }
            saw_batch = true;
        } else if (key == "epochs") {
            cfg.train.epochs = parse_u64(key, value);
        } else if (key == "patience") {
            cfg.train.patience = parse_u64(key, value);
        } else if (key == "seed") {
            cfg.train.rng_seed = parse_u64(key, value);
        } else {
            throw FormatError("config: unknown key '" + key + "' at line " +
                              std::to_string(lineno));
        }
    }
    if (lsh_enabled) cfg.model.lsh = lsh;
    if (saw_lr && cfg.train.learning_rates.empty()) {
        throw FormatError("config: learning_rates must not be empty");
    }
    if (saw_batch && cfg.train.batch_sizes.empty()) {
        throw FormatError("config: batch_sizes must not be empty");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

}  // namespace aes
