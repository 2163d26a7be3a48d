#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slotforge/tensor.hpp"

namespace slotforge {

enum class TokenKind : std::uint8_t { kKey = 0, kQuery = 1, kValue = 2 };

std::string to_string(TokenKind kind);
TokenKind parse_token_kind(const std::string& text);

/// Patch tokens of one image, row-major over the patch grid.
struct FeatureMap {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  Tensor tokens;  // N × D_feats
  TokenKind token_kind = TokenKind::kKey;

  std::size_t num_patches() const { return grid_h * grid_w; }
  std::size_t dim() const { return tokens.rank() == 2 ? tokens.cols() : 0; }
  /// Throws ContractError unless N == grid_h·grid_w and D_feats > 0.
  void validate() const;
};

/// Inclusive patch-grid bounds.
struct Box {
  std::size_t row_min = 0;
  std::size_t col_min = 0;
  std::size_t row_max = 0;
  std::size_t col_max = 0;

  friend bool operator==(const Box&, const Box&) = default;
};

using Mask = std::vector<std::uint8_t>;

/// Tight bounding box of a nonempty mask; nullopt for an empty one.
std::optional<Box> mask_bounds(const Mask& mask, std::size_t grid_w);

struct GroundTruth {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<Mask> instance_masks;
  std::vector<Box> boxes;
};

/// Builds ground truth from a label grid: label 0 is background, every other
/// distinct label is one instance, ordered by label value.
GroundTruth ground_truth_from_labels(const std::vector<int>& labels, std::size_t grid_h,
                                     std::size_t grid_w);

// Text grid: one whitespace-separated integer per patch cell, one grid row per
// line. The grid shape is taken from the file.
struct LabelGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<int> labels;
};

LabelGrid read_label_grid(const std::filesystem::path& path);
void write_label_grid(const std::filesystem::path& path, const LabelGrid& grid);
GroundTruth load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);

// Feature file: magic "SLTK0001", u32 grid_h, u32 grid_w, u32 d_feats,
// u8 token_kind, then grid_h·grid_w·d_feats little-endian f32.
inline constexpr char kFeatureMagic[9] = "SLTK0001";
inline constexpr std::size_t kFeatureHeaderBytes = 8 + 4 + 4 + 4 + 1;

FeatureMap load_features(const std::filesystem::path& path);
void save_features(const FeatureMap& map, const std::filesystem::path& path);

struct SyntheticSceneSpec {
  std::size_t grid_h = 8;
  std::size_t grid_w = 8;
  std::size_t n_objects = 2;
  std::size_t d_feats = 16;
  double background_mean = 2.0;
  double object_mean_lo = 0.0;
  double object_mean_hi = 0.5;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  // Object rectangle side lengths; max_size == 0 means max(2, min(grid)/2).
  std::size_t min_size = 2;
  std::size_t max_size = 0;
  // Amplitude of a fixed positional code carried by the last
  // position_channels channels (0 means d_feats/2). Object and background
  // appearance live in the remaining channels. Both have zero mean over
  // their block, so patch means are unaffected.
  double position_scale = 0.5;
  std::size_t position_channels = 0;
  // Amplitude of a fixed zero-mean texture added to background patches.
  // Patch means are unaffected.
  double background_texture = 1.0;
  TokenKind token_kind = TokenKind::kKey;

  void validate() const;
};

/// Deterministic given the scene parameters (seed included). Objects are disjoint
/// rectangles; each has its own prototype vector.
std::pair<FeatureMap, GroundTruth> generate_scene(const SyntheticSceneSpec& spec);

}  // namespace slotforge
