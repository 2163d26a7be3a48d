#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slotforge/errors.hpp"
#include "slotforge/fusion.hpp"

using namespace slotforge;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(perm[i], c);
  return out;
}

std::vector<std::size_t> random_perm(std::size_t k, Rng& rng) {
  std::vector<std::size_t> p(k);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng.engine());
  return p;
}

}  // namespace

TEST(Similarity, CosineExamples) {
  SimilarityMatrix s = similarity(Tensor::matrix({{1, 0}, {0, 2}}), Tensor::matrix({{0, 1}, {2, 0}}),
                                  SimilarityMetric::kCosine);
  EXPECT_EQ(s.values, Tensor::matrix({{0, 1}, {1, 0}}));
  EXPECT_EQ(s.objective(), Objective::kMaximize);
  Rng rng(1);
  Tensor a = random_tensor({4, 3}, rng);
  SimilarityMatrix self = similarity(a, a, SimilarityMetric::kCosine);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(self.values(i, i), 1.0, 1e-15);
}

TEST(Similarity, ZeroNormIsZero) {
  SimilarityMatrix s = similarity(Tensor::matrix({{0, 0}, {1, 1}}), Tensor::matrix({{1, 0}, {0, 0}}),
                                  SimilarityMetric::kCosine);
  EXPECT_EQ(s.values(0, 0), 0.0);
  EXPECT_EQ(s.values(1, 1), 0.0);
  EXPECT_NEAR(s.values(1, 0), 1 / std::sqrt(2.0), 1e-15);
}

TEST(Similarity, EuclideanDistances) {
  SimilarityMatrix s = similarity(Tensor::matrix({{0, 0}, {3, 4}}), Tensor::matrix({{0, 0}, {1, 0}}),
                                  SimilarityMetric::kEuclidean);
  EXPECT_EQ(s.values, Tensor::matrix({{0, 1}, {5, std::sqrt(20.0)}}));
  EXPECT_EQ(s.objective(), Objective::kMinimize);
}

TEST(Similarity, ShapeMismatch) {
  EXPECT_THROW(similarity(Tensor({2, 3}), Tensor({2, 4}), SimilarityMetric::kCosine),
               ContractError);
  EXPECT_THROW(similarity(Tensor({2, 3}), Tensor({3, 3}), SimilarityMetric::kCosine),
               ContractError);
}

TEST(Fuse, SingleHeadIsIdentity) {
  Rng rng(2);
  SlotSet s{random_tensor({3, 4}, rng), 0};
  SlotSet f = fuse({s}, 0, SimilarityMetric::kCosine, Matcher::kHungarian);
  EXPECT_EQ(f.slots, s.slots);
  EXPECT_EQ(f.head_index, 0u);
}

TEST(Fuse, HandAlignedExample) {
  // With D=1 every cosine entry is 1, so the distance metric is what can
  // tell [5.2] from [0.8].
  std::vector<SlotSet> heads{{Tensor::matrix({{1}, {5}}), 0}, {Tensor::matrix({{5.2}, {0.8}}), 1}};
  SlotSet f = fuse(heads, 0, SimilarityMetric::kEuclidean, Matcher::kHungarian);
  EXPECT_NEAR(f.slots(0, 0), 0.9, 1e-15);
  EXPECT_NEAR(f.slots(1, 0), 5.1, 1e-15);
}

TEST(Fuse, CosineTieKeepsIdentityAlignment) {
  std::vector<SlotSet> heads{{Tensor::matrix({{1}, {5}}), 0}, {Tensor::matrix({{5.2}, {0.8}}), 1}};
  SlotSet f = fuse(heads, 0, SimilarityMetric::kCosine, Matcher::kHungarian);
  EXPECT_NEAR(f.slots(0, 0), 3.1, 1e-15);
  EXPECT_NEAR(f.slots(1, 0), 2.9, 1e-15);
}

TEST(Fuse, PermutedCopiesRecoverTheSet) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.index(6), h = 1 + rng.index(5);
    Tensor base = random_tensor({k, 8}, rng);
    std::vector<SlotSet> heads;
    for (std::size_t j = 0; j < h; ++j) heads.push_back({permute_rows(base, random_perm(k, rng)), j});
    const std::size_t ref = rng.index(h);
    SlotSet f = fuse(heads, ref, SimilarityMetric::kCosine, Matcher::kHungarian);
    EXPECT_LT(max_abs_diff(f.slots, heads[ref].slots), 1e-12);
    EXPECT_EQ(f.head_index, ref);
  }
}

TEST(Fuse, AlignmentOrderInvertsMapping) {
  Assignment a{{2, 0, 1}, 0.0};
  EXPECT_EQ(alignment_order(a), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Fuse, OrderOfOtherHeadsDoesNotMatter) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SlotSet> heads;
    for (std::size_t j = 0; j < 4; ++j) heads.push_back({random_tensor({4, 5}, rng), j});
    SlotSet a = fuse(heads, 0, SimilarityMetric::kCosine, Matcher::kHungarian);
    std::vector<SlotSet> shuffled{heads[0], heads[3], heads[1], heads[2]};
    SlotSet b = fuse(shuffled, 0, SimilarityMetric::kCosine, Matcher::kHungarian);
    EXPECT_LT(max_abs_diff(a.slots, b.slots), 1e-12);
  }
}

TEST(Fuse, CosineAssignmentIgnoresPositiveScaling) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor ref = random_tensor({5, 4}, rng), other = random_tensor({5, 4}, rng);
    Tensor scaled = other;
    for (std::size_t k = 0; k < 5; ++k) {
      const double c = rng.uniform(0.1, 10);
      for (std::size_t i = 0; i < 4; ++i) scaled(k, i) *= c;
    }
    Assignment a = hungarian(similarity(other, ref, SimilarityMetric::kCosine));
    Assignment b = hungarian(similarity(scaled, ref, SimilarityMetric::kCosine));
    EXPECT_EQ(a.mapping, b.mapping);
  }
}

TEST(Fuse, Errors) {
  std::vector<SlotSet> heads{{Tensor({2, 3}), 0}, {Tensor({3, 3}), 1}};
  EXPECT_THROW(fuse(heads, 0, SimilarityMetric::kCosine, Matcher::kHungarian), ContractError);
  EXPECT_THROW(fuse({}, 0, SimilarityMetric::kCosine, Matcher::kHungarian), ContractError);
  std::vector<SlotSet> ok{{Tensor({2, 3}), 0}};
  EXPECT_THROW(fuse(ok, 1, SimilarityMetric::kCosine, Matcher::kHungarian), ContractError);
}

TEST(Fuse, GreedyMatcherAlsoRecoversPermutations) {
  Rng rng(6);
  Tensor base = random_tensor({6, 8}, rng);
  std::vector<SlotSet> heads{{base, 0}, {permute_rows(base, random_perm(6, rng)), 1}};
  EXPECT_LT(max_abs_diff(fuse(heads, 0, SimilarityMetric::kCosine, Matcher::kGreedy).slots, base),
            1e-12);
}

TEST(FuseForTraining, ForwardMatchesAndGradientsReachEveryHead) {
  Rng rng(7);
  for (std::size_t h : {1u, 3u}) {
    std::vector<Parameter> params;
    params.reserve(h);
    for (std::size_t j = 0; j < h; ++j)
      params.emplace_back("head" + std::to_string(j), random_tensor({4, 3}, rng));
    std::vector<SlotSet> values;
    for (std::size_t j = 0; j < h; ++j) values.push_back({params[j].value, j});
    const std::size_t ref = h - 1;
    SlotSet expected = fuse(values, ref, SimilarityMetric::kCosine, Matcher::kHungarian);

    Tape tape;
    std::vector<Var> vars;
    for (auto& p : params) {
      p.zero_grad();
      vars.push_back(tape.param(p));
    }
    Var fused = fuse_for_training(vars, ref, SimilarityMetric::kCosine, Matcher::kHungarian);
    EXPECT_LT(max_abs_diff(fused.value(), expected.slots), 1e-15);
    tape.backward(sum(fused * fused));
    for (const auto& p : params) {
      double norm = 0;
      for (double v : p.grad.data()) norm += v * v;
      EXPECT_GT(norm, 0.0) << p.name;
    }
  }
}
