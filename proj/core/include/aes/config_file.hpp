#pragma once

#include <string>

#include "aes/blocks.hpp"
#include "aes/scoring.hpp"

namespace aes {

struct RunConfig {
    ModelConfig model;
    TrainSpec train;
};

/// Line-oriented `key = value` config (UTF-8, '#' comments). Unknown keys are
/// errors so typos cannot silently fall back to defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace aes
