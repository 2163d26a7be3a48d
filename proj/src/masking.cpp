#include "slotforge/masking.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "slotforge/errors.hpp"
#include "slotforge/rng.hpp"

namespace slotforge {

namespace {
std::atomic<std::uint64_t> g_mask_calls{0};
}

std::string to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kNone: return "none";
    case MaskStrategy::kRandom: return "random";
    case MaskStrategy::kBackground: return "background";
  }
  return "unknown";
}

MaskStrategy parse_mask_strategy(const std::string& text) {
  if (text == "none") return MaskStrategy::kNone;
  if (text == "random") return MaskStrategy::kRandom;
  if (text == "background") return MaskStrategy::kBackground;
  throw UsageError("unknown masking strategy '" + text + "' (expected none|random|background)");
}

void MaskingConfig::validate() const {
  if (!(m_percent >= 0.0 && m_percent <= 100.0)) {
    throw ContractError("m_percent must lie in [0,100], got " + std::to_string(m_percent));
  }
}

std::size_t mask_count(std::size_t n, double m_percent) {
  const double exact = m_percent / 100.0 * static_cast<double>(n);
  const auto count = static_cast<std::size_t>(std::floor(exact + 0.5));
  return std::min(count, n);
}

std::vector<double> patch_means(const FeatureMap& map) {
  const std::size_t n = map.tokens.rows(), d = map.tokens.cols();
  std::vector<double> means(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (double v : map.tokens.row(p)) s += v;
    means[p] = d ? s / static_cast<double>(d) : 0.0;
  }
  return means;
}

std::vector<std::size_t> select_background_indices(const std::vector<double>& means,
                                                   double m_percent) {
  const std::size_t n = means.size();
  const std::size_t count = mask_count(n, m_percent);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Increasing means, stable so equal means keep index order; the tail
  // (highest means, higher indices among ties) is masked.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  std::vector<std::size_t> out(order.end() - static_cast<std::ptrdiff_t>(count), order.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> select_random_indices(std::size_t n, double m_percent,
                                               std::uint64_t seed) {
  const std::size_t count = mask_count(n, m_percent);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

FeatureMap apply_mask(const FeatureMap& map, const std::vector<std::size_t>& indices) {
  g_mask_calls.fetch_add(1, std::memory_order_relaxed);
  FeatureMap out = map;
  const std::size_t n = map.tokens.rows();
  for (std::size_t idx : indices) {
    if (idx >= n) {
      throw ContractError("mask index " + std::to_string(idx) + " out of range for " +
                          std::to_string(n) + " patches");
    }
    auto row = out.tokens.row(idx);
    std::fill(row.begin(), row.end(), 0.0);
  }
  return out;
}

MaskReport build_mask_report(const FeatureMap& map, const MaskingConfig& config) {
  config.validate();
  MaskReport report;
  report.means = patch_means(map);
  switch (config.strategy) {
    case MaskStrategy::kNone: break;
    case MaskStrategy::kBackground:
      report.masked_indices = select_background_indices(report.means, config.m_percent);
      break;
    case MaskStrategy::kRandom:
      report.masked_indices =
          select_random_indices(report.means.size(), config.m_percent, config.seed);
      break;
  }
  return report;
}

std::uint64_t mask_call_count() { return g_mask_calls.load(std::memory_order_relaxed); }

}  // namespace slotforge
