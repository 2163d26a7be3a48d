#pragma once

#include <string>
#include <vector>

#include "slotforge/assignment.hpp"
#include "slotforge/autograd.hpp"
#include "slotforge/slot_attention.hpp"

namespace slotforge {

enum class SimilarityMetric { kCosine, kEuclidean };
enum class Matcher { kHungarian, kGreedy };

std::string to_string(SimilarityMetric m);
std::string to_string(Matcher m);
SimilarityMetric parse_similarity_metric(const std::string& text);
Matcher parse_matcher(const std::string& text);

struct SimilarityMatrix {
  Tensor values;  // K × K; rows index slots of the aligned head, columns the reference
  SimilarityMetric metric = SimilarityMetric::kCosine;

  /// Cosine similarity is maximized, Euclidean distance minimized.
  Objective objective() const {
    return metric == SimilarityMetric::kCosine ? Objective::kMaximize : Objective::kMinimize;
  }
};

/// Cosine similarity (0 when either slot has zero norm) or Euclidean
/// distance between every slot of `a` and every slot of `b`.
SimilarityMatrix similarity(const SlotSet& a, const SlotSet& b, SimilarityMetric metric);
SimilarityMatrix similarity(const Tensor& a, const Tensor& b, SimilarityMetric metric);

Assignment hungarian(const SimilarityMatrix& matrix);
Assignment greedy_match(const SimilarityMatrix& matrix);
Assignment match(const SimilarityMatrix& matrix, Matcher matcher);

/// Row permutation that reorders `head` into the reference's slot order:
/// result[mapping[a]] = a.
std::vector<std::size_t> alignment_order(const Assignment& assignment);

/// Aligns every non-reference head to the reference and averages all h
/// aligned slot sets.
SlotSet fuse(const std::vector<SlotSet>& heads, std::size_t reference, SimilarityMetric metric,
             Matcher matcher);

/// Same arithmetic as fuse, recorded on the tape so the loss reaches every
/// head. Matching itself is not differentiated.
Var fuse_for_training(const std::vector<Var>& heads, std::size_t reference,
                      SimilarityMetric metric, Matcher matcher);

}  // namespace slotforge
