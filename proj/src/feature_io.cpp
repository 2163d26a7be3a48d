#include "slotforge/feature_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "slotforge/binary_io.hpp"
#include "slotforge/errors.hpp"
#include "slotforge/rng.hpp"

namespace slotforge {

using detail::read_le;
using detail::write_le;

std::string to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::kKey: return "key";
    case TokenKind::kQuery: return "query";
    case TokenKind::kValue: return "value";
  }
  return "unknown";
}

TokenKind parse_token_kind(const std::string& text) {
  if (text == "key") return TokenKind::kKey;
  if (text == "query") return TokenKind::kQuery;
  if (text == "value") return TokenKind::kValue;
  throw UsageError("unknown token kind '" + text + "' (expected key|query|value)");
}

void FeatureMap::validate() const {
  if (tokens.rank() != 2 || tokens.rows() != grid_h * grid_w) {
    throw ContractError("feature map grid " + std::to_string(grid_h) + "x" +
                        std::to_string(grid_w) + " does not match tokens " +
                        shape_to_string(tokens.shape()));
  }
  if (tokens.cols() == 0) throw ContractError("feature map has zero channels");
}

std::optional<Box> mask_bounds(const Mask& mask, std::size_t grid_w) {
  std::optional<Box> box;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const std::size_t r = i / grid_w, c = i % grid_w;
    if (!box) {
      box = Box{r, c, r, c};
    } else {
      box->row_min = std::min(box->row_min, r);
      box->col_min = std::min(box->col_min, c);
      box->row_max = std::max(box->row_max, r);
      box->col_max = std::max(box->col_max, c);
    }
  }
  return box;
}

GroundTruth ground_truth_from_labels(const std::vector<int>& labels, std::size_t grid_h,
                                     std::size_t grid_w) {
  if (labels.size() != grid_h * grid_w) {
    throw ContractError("label count " + std::to_string(labels.size()) + " does not match grid " +
                        std::to_string(grid_h) + "x" + std::to_string(grid_w));
  }
  std::map<int, Mask> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    auto& m = by_label[labels[i]];
    if (m.empty()) m.assign(labels.size(), 0);
    m[i] = 1;
  }
  GroundTruth gt{grid_h, grid_w, {}, {}};
  for (auto& [label, mask] : by_label) {
    gt.boxes.push_back(*mask_bounds(mask, grid_w));
    gt.instance_masks.push_back(std::move(mask));
  }
  return gt;
}

LabelGrid read_label_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LabelGrid grid;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::vector<int> values;
    std::string tok;
    while (row >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stoi(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad label '" + tok +
                          "'");
      }
    }
    if (values.empty()) continue;
    if (grid.grid_w == 0) grid.grid_w = values.size();
    if (values.size() != grid.grid_w) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(grid.grid_w) + " labels, found " +
                        std::to_string(values.size()));
    }
    grid.labels.insert(grid.labels.end(), values.begin(), values.end());
    ++grid.grid_h;
  }
  if (grid.grid_h == 0) throw FormatError(path.string() + ": empty label grid");
  return grid;
}

void write_label_grid(const std::filesystem::path& path, const LabelGrid& grid) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t r = 0; r < grid.grid_h; ++r) {
    for (std::size_t c = 0; c < grid.grid_w; ++c) {
      if (c) out << ' ';
      out << grid.labels[r * grid.grid_w + c];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  const LabelGrid grid = read_label_grid(path);
  return ground_truth_from_labels(grid.labels, grid.grid_h, grid.grid_w);
}

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
  LabelGrid grid{gt.grid_h, gt.grid_w, std::vector<int>(gt.grid_h * gt.grid_w, 0)};
  for (std::size_t k = 0; k < gt.instance_masks.size(); ++k) {
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
      if (gt.instance_masks[k][i]) grid.labels[i] = static_cast<int>(k + 1);
    }
  }
  write_label_grid(path, grid);
}

FeatureMap load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string() + ": ";

  char magic[8] = {};
  if (!in.read(magic, 8) || std::string(magic, 8) != std::string(kFeatureMagic, 8)) {
    throw FormatError(where + "bad magic at byte 0, expected SLTK0001");
  }
  std::uint32_t gh = 0, gw = 0, d = 0;
  std::uint8_t kind = 0;
  if (!read_le(in, gh)) throw FormatError(where + "truncated header at byte 8 (grid_h)");
  if (!read_le(in, gw)) throw FormatError(where + "truncated header at byte 12 (grid_w)");
  if (!read_le(in, d)) throw FormatError(where + "truncated header at byte 16 (d_feats)");
  if (!read_le(in, kind)) throw FormatError(where + "truncated header at byte 20 (token_kind)");
  if (kind > 2) {
    throw FormatError(where + "invalid token_kind " + std::to_string(kind) + " at byte 20");
  }
  if (gh == 0 || gw == 0 || d == 0) {
    throw FormatError(where + "header declares an empty feature map (" + std::to_string(gh) +
                      "x" + std::to_string(gw) + ", d=" + std::to_string(d) + ")");
  }

  const std::size_t count = static_cast<std::size_t>(gh) * gw * d;
  const std::size_t expected = count * sizeof(float);
  std::vector<char> payload(expected);
  in.read(payload.data(), static_cast<std::streamsize>(expected));
  const auto found = static_cast<std::size_t>(in.gcount());
  if (found != expected) {
    throw FormatError(where + "payload length error at byte " +
                      std::to_string(kFeatureHeaderBytes + found) + ": expected " +
                      std::to_string(expected) + " payload bytes, found " + std::to_string(found));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(where + "trailing bytes after payload at byte " +
                      std::to_string(kFeatureHeaderBytes + expected));
  }

  FeatureMap map;
  map.grid_h = gh;
  map.grid_w = gw;
  map.token_kind = static_cast<TokenKind>(kind);
  map.tokens = Tensor({static_cast<std::size_t>(gh) * gw, d});
  std::istringstream bytes(std::string(payload.begin(), payload.end()));
  for (double& v : map.tokens.data()) {
    float f = 0.0f;
    read_le(bytes, f);
    v = static_cast<double>(f);
  }
  return map;
}

void save_features(const FeatureMap& map, const std::filesystem::path& path) {
  map.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kFeatureMagic, 8);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.grid_h));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.grid_w));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.dim()));
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(map.token_kind));
  for (double v : map.tokens.data()) write_le<float>(out, static_cast<float>(v));
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void SyntheticSceneSpec::validate() const {
  if (grid_h == 0 || grid_w == 0 || d_feats == 0) {
    throw ContractError("synthetic scene needs a nonempty grid and d_feats > 0");
  }
  if (object_mean_lo > object_mean_hi) throw ContractError("object mean range is inverted");
  if (!(background_mean > object_mean_hi)) {
    throw ContractError("background_mean must exceed the object mean range");
  }
  if (noise_std < 0.0) throw ContractError("noise_std must be nonnegative");
  if (position_channels > d_feats)
    throw ContractError("position_channels exceeds d_feats");
}

namespace {

std::vector<double> zero_mean_normal(std::size_t count, Rng& rng, double amplitude) {
  std::vector<double> v(count);
  double mean = 0.0;
  for (double& x : v) {
    x = rng.normal();
    mean += x;
  }
  if (count > 0) mean /= static_cast<double>(count);
  for (double& x : v) x = amplitude * (x - mean);
  return v;
}

// Sine/cosine pairs along rows and columns at rising frequencies, recentred
// to zero mean over the block for every patch.
Tensor positional_code(std::size_t gh, std::size_t gw, std::size_t m) {
  Tensor code({gh * gw, m});
  for (std::size_t r = 0; r < gh; ++r) {
    for (std::size_t c = 0; c < gw; ++c) {
      auto row = code.row(r * gw + c);
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const bool along_rows = (i / 2) % 2 == 0;
        const double pos = static_cast<double>(along_rows ? r : c) + 0.5;
        const double len = static_cast<double>(along_rows ? gh : gw);
        const double freq = static_cast<double>(i / 4 + 1);
        const double angle = std::numbers::pi * freq * pos / len;
        row[i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        mean += row[i];
      }
      if (m > 0) mean /= static_cast<double>(m);
      for (double& v : row) v -= mean;
    }
  }
  return code;
}

}  // namespace

std::pair<FeatureMap, GroundTruth> generate_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Rng place_rng = rng.split(1);
  Rng proto_rng = rng.split(2);
  Rng noise_rng = rng.split(3);

  const std::size_t gh = spec.grid_h, gw = spec.grid_w, n = gh * gw, d = spec.d_feats;
  const std::size_t max_side =
      spec.max_size ? spec.max_size : std::max<std::size_t>(2, std::min(gh, gw) / 2);
  const std::size_t min_side = std::min(spec.min_size, max_side);
  if (min_side == 0) throw ContractError("object size must be at least 1");

  // Whole layouts are redrawn on failure so an early object in an awkward
  // spot cannot block the rest.
  std::vector<int> labels(n, 0);
  constexpr int kMaxAttempts = 1000;
  constexpr int kTriesPerObject = 50;
  bool placed_all = spec.n_objects == 0;
  for (int attempt = 0; attempt < kMaxAttempts && !placed_all; ++attempt) {
    std::fill(labels.begin(), labels.end(), 0);
    placed_all = true;
    for (std::size_t obj = 0; obj < spec.n_objects && placed_all; ++obj) {
      bool placed = false;
      for (int t = 0; t < kTriesPerObject && !placed; ++t) {
        const std::size_t h = std::min(gh, min_side + place_rng.index(max_side - min_side + 1));
        const std::size_t w = std::min(gw, min_side + place_rng.index(max_side - min_side + 1));
        const std::size_t r0 = place_rng.index(gh - h + 1);
        const std::size_t c0 = place_rng.index(gw - w + 1);
        bool free = true;
        for (std::size_t r = r0; r < r0 + h && free; ++r)
          for (std::size_t c = c0; c < c0 + w; ++c)
            if (labels[r * gw + c] != 0) {
              free = false;
              break;
            }
        if (!free) continue;
        for (std::size_t r = r0; r < r0 + h; ++r)
          for (std::size_t c = c0; c < c0 + w; ++c) labels[r * gw + c] = static_cast<int>(obj + 1);
        placed = true;
      }
      placed_all = placed;
    }
  }
  if (!placed_all) {
    throw ContractError("capacity error: could not place " + std::to_string(spec.n_objects) +
                        " disjoint objects in a " + std::to_string(gh) + "x" + std::to_string(gw) +
                        " grid after " + std::to_string(kMaxAttempts) + " layouts");
  }

  // Channels [0, content) carry appearance, [content, d) the positional code.
  const std::size_t pos_channels = spec.position_channels ? spec.position_channels : d / 2;
  const std::size_t content = d - pos_channels;

  // Each object's prototype varies only over the appearance block and has
  // zero mean there, so its patch mean is exactly the drawn target.
  std::vector<double> targets(spec.n_objects);
  std::vector<std::vector<double>> prototypes(spec.n_objects);
  for (std::size_t o = 0; o < spec.n_objects; ++o) {
    targets[o] = proto_rng.uniform(spec.object_mean_lo, spec.object_mean_hi);
    prototypes[o] = zero_mean_normal(content, proto_rng, 1.0);
  }
  // Background texture depends only on the channel layout, so every scene
  // shares it and a fully masked background stays predictable.
  Rng texture_rng(0x7e47u + d);
  const std::vector<double> texture =
      zero_mean_normal(content, texture_rng, spec.background_texture);

  const Tensor code = positional_code(gh, gw, pos_channels);
  FeatureMap map{gh, gw, Tensor({n, d}), spec.token_kind};
  for (std::size_t p = 0; p < n; ++p) {
    const bool bg = labels[p] == 0;
    const auto obj = bg ? 0 : static_cast<std::size_t>(labels[p] - 1);
    const double mean = bg ? spec.background_mean : targets[obj];
    for (std::size_t i = 0; i < d; ++i) {
      const double detail = i < content ? (bg ? texture[i] : prototypes[obj][i])
                                        : spec.position_scale * code(p, i - content);
      map.tokens(p, i) = mean + detail + spec.noise_std * noise_rng.normal();
    }
  }
  return {std::move(map), ground_truth_from_labels(labels, gh, gw)};
}

}  // namespace slotforge
