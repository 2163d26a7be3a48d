#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotforge/feature_io.hpp"

namespace slotforge {

enum class MaskStrategy { kNone, kRandom, kBackground };

std::string to_string(MaskStrategy s);
MaskStrategy parse_mask_strategy(const std::string& text);

struct MaskingConfig {
  MaskStrategy strategy = MaskStrategy::kBackground;
  double m_percent = 70.0;
  std::uint64_t seed = 0;  // random strategy only

  void validate() const;
};

struct MaskReport {
  std::vector<std::size_t> masked_indices;  // sorted ascending
  std::vector<double> means;
};

/// Number of patches masked for a given percentage: round-half-up of m/100·N.
std::size_t mask_count(std::size_t n, double m_percent);

std::vector<double> patch_means(const FeatureMap& map);

/// The round(m/100·N) patches with the largest means. Among equal means the
/// lower patch index stays unmasked. Result sorted ascending.
std::vector<std::size_t> select_background_indices(const std::vector<double>& means,
                                                   double m_percent);

/// Uniform sample without replacement, deterministic per seed, sorted.
std::vector<std::size_t> select_random_indices(std::size_t n, double m_percent,
                                               std::uint64_t seed);

/// Copy of `map` with the listed token rows set to zero.
FeatureMap apply_mask(const FeatureMap& map, const std::vector<std::size_t>& indices);

/// Selects indices per `config` and reports them with the patch means.
MaskReport build_mask_report(const FeatureMap& map, const MaskingConfig& config);

/// Number of apply_mask calls made by this process. Test hook for checking
/// that inference never masks.
std::uint64_t mask_call_count();

}  // namespace slotforge
