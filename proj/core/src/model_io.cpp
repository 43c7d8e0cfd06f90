#include "aes/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "aes/error.hpp"

namespace aes {

namespace {

constexpr char kMagic[4] = {'A', 'E', 'S', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < size; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace {

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError("model container: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["vocab_size"] = c.vocab_size;
    j["embed_dim"] = c.embed_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["ff_dim"] = c.ff_dim;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["max_len"] = c.max_len;
    j["bottleneck_dim"] = c.bottleneck_dim;
    j["share_layers"] = c.share_layers;
    j["reversible"] = c.reversible;
    j["num_segments"] = c.num_segments;
    if (c.lsh) {
        j["lsh"] = {{"num_hashes", c.lsh->num_hashes},
                    {"num_buckets", c.lsh->num_buckets},
                    {"chunk_size", c.lsh->chunk_size},
                    {"rng_seed", c.lsh->rng_seed}};
    } else {
        j["lsh"] = nullptr;
    }
    return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.embed_dim = j.at("embed_dim").get<std::size_t>();
        c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        c.ff_dim = j.at("ff_dim").get<std::size_t>();
        c.num_layers = j.at("num_layers").get<std::size_t>();
        c.num_heads = j.at("num_heads").get<std::size_t>();
        c.max_len = j.at("max_len").get<std::size_t>();
        c.bottleneck_dim = j.at("bottleneck_dim").get<std::size_t>();
        c.share_layers = j.at("share_layers").get<bool>();
        c.reversible = j.at("reversible").get<bool>();
        c.num_segments = j.at("num_segments").get<std::size_t>();
        if (!j.at("lsh").is_null()) {
            LshConfig lsh;
            lsh.num_hashes = j["lsh"].at("num_hashes").get<std::size_t>();
            lsh.num_buckets = j["lsh"].at("num_buckets").get<std::size_t>();
            lsh.chunk_size = j["lsh"].at("chunk_size").get<std::size_t>();
            lsh.rng_seed = j["lsh"].at("rng_seed").get<std::uint64_t>();
            c.lsh = lsh;
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model container: bad config block: ") + e.what());
    }
    return c;
}

void append_array(std::string& out, const std::string& name, const Tensor& t) {
    append_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    append_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) append_u64(out, d);
    for (double v : t.values()) append_f64(out, v);
}

}  // namespace

void save_model(const std::string& path, const Model& model,
                const std::vector<std::pair<std::string, Tensor>>& extra) {
    std::string out;
    out.append(kMagic, 4);
    append_u32(out, kFormatVersion);
    const std::string config = config_to_json(model.config).dump();
    append_u32(out, static_cast<std::uint32_t>(config.size()));
    out += config;
    for (const auto& [name, t] : named_parameters(model)) append_array(out, name, t);
    for (const auto& [name, t] : extra) append_array(out, name, t);
    append_u32(out, crc32(out.data(), out.size()));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("save_model: cannot open " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw FormatError("save_model: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw FormatError("save_model: rename failed for " + path);
    }
}

LoadedModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("load_model: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 12) throw FormatError("model container: truncated file");
    const std::uint32_t stored_crc =
        static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 4])) |
        static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 3])) << 8 |
        static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 2])) << 16 |
        static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 1])) << 24;
    if (crc32(buf.data(), buf.size() - 4) != stored_crc) {
        throw FormatError("model container: CRC mismatch");
    }

    Reader r{buf};
    if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("model container: bad magic");
    if (r.u32() != kFormatVersion) throw FormatError("model container: unsupported version");
    const std::uint32_t config_len = r.u32();
    nlohmann::json j = nlohmann::json::parse(r.bytes(config_len), nullptr, false);
    if (j.is_discarded()) throw FormatError("model container: config block is not valid JSON");
    const ModelConfig config = config_from_json(j);

    std::unordered_map<std::string, Tensor> arrays;
    const std::size_t body_end = buf.size() - 4;
    while (r.pos < body_end) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape;
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::size_t>(r.u64()));
            count *= shape.back();
        }
        std::vector<double> values(count);
        for (std::size_t i = 0; i < count; ++i) values[i] = r.f64();
        if (!arrays.emplace(name, Tensor::from(std::move(shape), std::move(values))).second) {
            throw FormatError("model container: duplicate array " + name);
        }
    }
    if (r.pos != body_end) throw FormatError("model container: trailing bytes before CRC");

    LoadedModel out;
    out.model = build_model(config, 0);
    for (auto& [name, slot] : named_parameters(out.model)) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw FormatError("model container: missing array " + name);
        if (it->second.shape() != slot.shape()) {
            throw FormatError("model container: shape mismatch for " + name);
        }
        Tensor t = slot;  // shares the underlying node
        t.values_mut() = it->second.values();
        arrays.erase(it);
    }
    out.extra = std::move(arrays);
    return out;
}

}  // namespace aes
