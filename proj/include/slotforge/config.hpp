#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "slotforge/model.hpp"
#include "slotforge/trainer.hpp"

namespace slotforge {

/// Everything a `train` run needs apart from data. The grid and D_feats come
/// from the data itself, so they are not config keys.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

using Setting = std::pair<std::string, std::string>;

/// Parses flat `key = value` text. `#` starts a comment; values may be
/// quoted. Throws UsageError naming the line on malformed input.
std::vector<Setting> parse_settings(const std::string& text, const std::string& origin);
std::vector<Setting> read_settings(const std::filesystem::path& path);
/// Splits "key=value".
Setting parse_override(const std::string& text);

/// Applies one setting; unknown keys and unparsable values are UsageErrors.
void apply_setting(RunConfig& config, const Setting& setting);
/// Defaults, then the file (if any), then overrides in order.
RunConfig load_run_config(const std::filesystem::path* file, const std::vector<Setting>& overrides);

/// Sorted list of accepted keys.
std::vector<std::string> config_keys();
/// key = value lines reproducing `config`; parse_settings round-trips it.
std::string dump_run_config(const RunConfig& config);

}  // namespace slotforge
