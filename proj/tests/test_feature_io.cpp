#include <gtest/gtest.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include "slotforge/errors.hpp"
#include "slotforge/feature_io.hpp"
#include "slotforge/masking.hpp"
#include "slotforge/rng.hpp"
#include "test_support.hpp"

using namespace slotforge;
using slotforge::testing::file_bytes;
using slotforge::testing::scratch_dir;

namespace {

// Writes a feature file byte by byte, independently of save_features.
void write_raw(const std::filesystem::path& path, std::uint32_t gh, std::uint32_t gw,
               std::uint32_t d, std::uint8_t kind, const std::vector<float>& payload,
               const char* magic = "SLTK0001") {
  std::ofstream out(path, std::ios::binary);
  out.write(magic, 8);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  u32(gh);
  u32(gw);
  u32(d);
  out.put(static_cast<char>(kind));
  for (float f : payload) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
}

std::vector<float> iota_floats(std::size_t n) {
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(i);
  return v;
}

}  // namespace

TEST(LoadFeatures, ReadsDocumentedLayout) {
  const auto dir = scratch_dir("fio_layout");
  write_raw(dir / "a.sltk", 2, 2, 3, 1, iota_floats(12));
  FeatureMap m = load_features(dir / "a.sltk");
  EXPECT_EQ(m.grid_h, 2u);
  EXPECT_EQ(m.grid_w, 2u);
  EXPECT_EQ(m.dim(), 3u);
  EXPECT_EQ(m.token_kind, TokenKind::kQuery);
  EXPECT_EQ(m.tokens(1, 2), 5.0);
  EXPECT_EQ(m.tokens(3, 0), 9.0);
}

TEST(LoadFeatures, TruncatedPayloadNamesExpectedAndFoundBytes) {
  const auto dir = scratch_dir("fio_trunc");
  write_raw(dir / "t.sltk", 2, 2, 3, 0, iota_floats(11));
  try {
    load_features(dir / "t.sltk");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 48 payload bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 44"), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte 65"), std::string::npos) << msg;
  }
}

TEST(LoadFeatures, BadMagicIsAFormatError) {
  const auto dir = scratch_dir("fio_magic");
  write_raw(dir / "m.sltk", 1, 1, 1, 0, {1.0f}, "SLTK0002");
  EXPECT_THROW(load_features(dir / "m.sltk"), FormatError);
}

TEST(LoadFeatures, BadTokenKindAndMissingFile) {
  const auto dir = scratch_dir("fio_kind");
  write_raw(dir / "k.sltk", 1, 1, 1, 7, {1.0f});
  EXPECT_THROW(load_features(dir / "k.sltk"), FormatError);
  EXPECT_THROW(load_features(dir / "missing.sltk"), IoError);
}

TEST(SaveFeatures, OneByOneGridHasFourPayloadBytes) {
  const auto dir = scratch_dir("fio_small");
  FeatureMap m{1, 1, Tensor::matrix({{2.5}}), TokenKind::kValue};
  save_features(m, dir / "s.sltk");
  EXPECT_EQ(file_bytes(dir / "s.sltk").size(), kFeatureHeaderBytes + 4);
  EXPECT_EQ(load_features(dir / "s.sltk").tokens, m.tokens);
}

TEST(SaveFeatures, RoundTripAtFloatPrecision) {
  const auto dir = scratch_dir("fio_roundtrip");
  Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t gh = 1 + rng.index(5), gw = 1 + rng.index(5), d = 1 + rng.index(9);
    FeatureMap m{gh, gw, Tensor({gh * gw, d}), static_cast<TokenKind>(rng.index(3))};
    for (double& v : m.tokens.data()) v = static_cast<float>(rng.normal() * 100.0);
    save_features(m, dir / "r.sltk");
    FeatureMap back = load_features(dir / "r.sltk");
    EXPECT_EQ(back.tokens, m.tokens);
    EXPECT_EQ(back.token_kind, m.token_kind);
    EXPECT_EQ(back.grid_h, gh);
    EXPECT_EQ(back.grid_w, gw);
  }
}

TEST(SaveFeatures, EmptyObjectSceneRoundTrips) {
  const auto dir = scratch_dir("fio_empty_scene");
  SyntheticSceneSpec spec;
  spec.n_objects = 0;
  auto [map, gt] = generate_scene(spec);
  save_features(map, dir / "e.sltk");
  FeatureMap back = load_features(dir / "e.sltk");
  for (std::size_t i = 0; i < map.tokens.size(); ++i)
    EXPECT_EQ(back.tokens[i], static_cast<double>(static_cast<float>(map.tokens[i])));
}

TEST(SaveFeatures, UnwritablePathIsAnIoError) {
  FeatureMap m{1, 1, Tensor::matrix({{1.0}}), TokenKind::kKey};
  EXPECT_THROW(save_features(m, "/nonexistent/dir/x.sltk"), IoError);
}

TEST(GroundTruth, LabelGridRoundTripAndBoxes) {
  const auto dir = scratch_dir("fio_gt");
  {
    std::ofstream out(dir / "g.gt.txt");
    out << "0 2 2\n0 2 2\n1 0 0\n";
  }
  GroundTruth gt = load_ground_truth(dir / "g.gt.txt");
  ASSERT_EQ(gt.instance_masks.size(), 2u);
  EXPECT_EQ(gt.boxes[0], (Box{2, 0, 2, 0}));
  EXPECT_EQ(gt.boxes[1], (Box{0, 1, 1, 2}));
  save_ground_truth(dir / "h.gt.txt", gt);
  GroundTruth again = load_ground_truth(dir / "h.gt.txt");
  EXPECT_EQ(again.instance_masks, gt.instance_masks);
}

TEST(GroundTruth, RaggedGridIsAFormatError) {
  const auto dir = scratch_dir("fio_ragged");
  {
    std::ofstream out(dir / "r.gt.txt");
    out << "0 1\n0\n";
  }
  EXPECT_THROW(load_ground_truth(dir / "r.gt.txt"), FormatError);
}

TEST(Synthetic, NoObjectsMeansEmptyGroundTruth) {
  SyntheticSceneSpec spec;
  spec.n_objects = 0;
  auto [map, gt] = generate_scene(spec);
  EXPECT_TRUE(gt.instance_masks.empty());
  EXPECT_TRUE(gt.boxes.empty());
  for (double m : patch_means(map)) EXPECT_NEAR(m, spec.background_mean, 0.1);
}

TEST(Synthetic, DeterministicUnderSeed) {
  SyntheticSceneSpec spec;
  spec.seed = 77;
  auto a = generate_scene(spec);
  auto b = generate_scene(spec);
  EXPECT_EQ(a.first.tokens, b.first.tokens);
  EXPECT_EQ(a.second.instance_masks, b.second.instance_masks);
  spec.seed = 78;
  EXPECT_NE(generate_scene(spec).first.tokens, a.first.tokens);
}

TEST(Synthetic, BoxesAreTightAndMasksDisjoint) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SyntheticSceneSpec spec;
    spec.seed = seed;
    spec.n_objects = 3;
    auto [map, gt] = generate_scene(spec);
    ASSERT_EQ(gt.instance_masks.size(), 3u);
    std::vector<int> owner(64, 0);
    for (std::size_t k = 0; k < 3; ++k) {
      const Mask& m = gt.instance_masks[k];
      std::size_t r0 = 99, c0 = 99, r1 = 0, c1 = 0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i]) continue;
        EXPECT_EQ(owner[i]++, 0) << "overlap at " << i;
        r0 = std::min(r0, i / 8);
        r1 = std::max(r1, i / 8);
        c0 = std::min(c0, i % 8);
        c1 = std::max(c1, i % 8);
      }
      EXPECT_EQ(gt.boxes[k], (Box{r0, c0, r1, c1}));
    }
  }
}

TEST(Synthetic, PatchMeansFollowTheParameters) {
  SyntheticSceneSpec spec;
  spec.seed = 5;
  auto [map, gt] = generate_scene(spec);
  const auto means = patch_means(map);
  for (std::size_t i = 0; i < means.size(); ++i) {
    bool object = false;
    for (const Mask& m : gt.instance_masks) object |= m[i] != 0;
    if (object) {
      EXPECT_GE(means[i], spec.object_mean_lo - 0.1);
      EXPECT_LE(means[i], spec.object_mean_hi + 0.1);
    } else {
      EXPECT_NEAR(means[i], spec.background_mean, 0.1);
    }
  }
}

TEST(Synthetic, ImpossibleLayoutIsACapacityError) {
  SyntheticSceneSpec spec;
  spec.grid_h = spec.grid_w = 4;
  spec.n_objects = 5;
  spec.min_size = 2;
  spec.max_size = 2;
  EXPECT_THROW(generate_scene(spec), ContractError);
}

TEST(Synthetic, BackgroundMustOutrankObjects) {
  SyntheticSceneSpec spec;
  spec.background_mean = 0.4;
  EXPECT_THROW(generate_scene(spec), ContractError);
}

// With at least half the 8x8 grid background (objects cover at most 2 x 16
// cells), the top-50% means should all be background patches.
TEST(Synthetic, TopHalfMeansAreBackgroundAcrossSeeds) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SyntheticSceneSpec spec;
    spec.seed = seed;
    auto [map, gt] = generate_scene(spec);
    std::set<std::size_t> background;
    for (std::size_t i = 0; i < 64; ++i) {
      bool object = false;
      for (const Mask& m : gt.instance_masks) object |= m[i] != 0;
      if (!object) background.insert(i);
    }
    bool all = true;
    for (std::size_t i : select_background_indices(patch_means(map), 50.0))
      all &= background.count(i) == 1;
    ok += all;
  }
  EXPECT_GE(ok, 99);
}
