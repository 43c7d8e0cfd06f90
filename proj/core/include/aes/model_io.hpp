#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aes/blocks.hpp"
#include "aes/tensor.hpp"

namespace aes {

/// CRC-32 (IEEE, reflected 0xEDB88320), as used by the model container.
std::uint32_t crc32(const void* data, std::size_t size);

/// Binary model container: magic "AESM", u32 format version, length-prefixed
/// JSON config block, named fp64 arrays, trailing CRC-32 of everything
/// prior. Round trips are bit-exact. `extra` carries arrays that are not part
/// of the encoder (e.g. the scoring head).
void save_model(const std::string& path, const Model& model,
                const std::vector<std::pair<std::string, Tensor>>& extra = {});

struct LoadedModel {
    Model model;
    std::unordered_map<std::string, Tensor> extra;
};

LoadedModel load_model(const std::string& path);

}  // namespace aes
