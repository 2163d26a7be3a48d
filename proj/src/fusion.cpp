#include "slotforge/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "slotforge/errors.hpp"

namespace slotforge {

std::string to_string(SimilarityMetric m) {
  return m == SimilarityMetric::kCosine ? "cosine" : "euclidean";
}

std::string to_string(Matcher m) { return m == Matcher::kHungarian ? "hungarian" : "greedy"; }

SimilarityMetric parse_similarity_metric(const std::string& text) {
  if (text == "cosine") return SimilarityMetric::kCosine;
  if (text == "euclidean") return SimilarityMetric::kEuclidean;
  throw UsageError("unknown fusion metric '" + text + "' (expected cosine|euclidean)");
}

Matcher parse_matcher(const std::string& text) {
  if (text == "hungarian") return Matcher::kHungarian;
  if (text == "greedy") return Matcher::kGreedy;
  throw UsageError("unknown fusion matcher '" + text + "' (expected hungarian|greedy)");
}

SimilarityMatrix similarity(const Tensor& a, const Tensor& b, SimilarityMetric metric) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ContractError("similarity needs equal slot shapes, got " + shape_to_string(a.shape()) +
                        " and " + shape_to_string(b.shape()));
  }
  const std::size_t k = a.rows(), d = a.cols();
  SimilarityMatrix out{Tensor({k, k}), metric};
  std::vector<double> norm_a(k), norm_b(k);
  for (std::size_t i = 0; i < k; ++i) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      sa += a(i, c) * a(i, c);
      sb += b(i, c) * b(i, c);
    }
    norm_a[i] = std::sqrt(sa);
    norm_b[i] = std::sqrt(sb);
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (metric == SimilarityMetric::kCosine) {
        if (norm_a[i] == 0.0 || norm_b[j] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += a(i, c) * b(j, c);
        out.values(i, j) = std::clamp(dot / (norm_a[i] * norm_b[j]), -1.0, 1.0);
      } else {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
        out.values(i, j) = std::sqrt(s);
      }
    }
  }
  return out;
}

SimilarityMatrix similarity(const SlotSet& a, const SlotSet& b, SimilarityMetric metric) {
  return similarity(a.slots, b.slots, metric);
}

Assignment hungarian(const SimilarityMatrix& matrix) {
  return hungarian(matrix.values, matrix.objective());
}

Assignment greedy_match(const SimilarityMatrix& matrix) {
  return greedy_match(matrix.values, matrix.objective());
}

Assignment match(const SimilarityMatrix& matrix, Matcher matcher) {
  return matcher == Matcher::kHungarian ? hungarian(matrix) : greedy_match(matrix);
}

std::vector<std::size_t> alignment_order(const Assignment& assignment) {
  std::vector<std::size_t> order(assignment.mapping.size());
  for (std::size_t a = 0; a < assignment.mapping.size(); ++a) order[assignment.mapping[a]] = a;
  return order;
}

namespace {

void check_heads(const std::vector<Shape>& shapes, std::size_t reference) {
  if (shapes.empty()) throw ContractError("fusion needs at least one head");
  if (reference >= shapes.size()) {
    throw ContractError("reference head " + std::to_string(reference) + " out of range for " +
                        std::to_string(shapes.size()) + " heads");
  }
  for (std::size_t j = 0; j < shapes.size(); ++j) {
    if (shapes[j].size() != 2 || shapes[j] != shapes[reference]) {
      throw ContractError("head " + std::to_string(j) + " has slots " +
                          shape_to_string(shapes[j]) + ", reference has " +
                          shape_to_string(shapes[reference]));
    }
  }
}

}  // namespace

SlotSet fuse(const std::vector<SlotSet>& heads, std::size_t reference, SimilarityMetric metric,
             Matcher matcher) {
  std::vector<Shape> shapes;
  for (const auto& h : heads) shapes.push_back(h.slots.shape());
  check_heads(shapes, reference);

  const Tensor& ref = heads[reference].slots;
  Tensor total = ref;
  for (std::size_t j = 0; j < heads.size(); ++j) {
    if (j == reference) continue;
    const auto order = alignment_order(match(similarity(heads[j].slots, ref, metric), matcher));
    for (std::size_t b = 0; b < order.size(); ++b) {
      const auto src = heads[j].slots.row(order[b]);
      auto dst = total.row(b);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (double& v : total.data()) v *= inv;
  return SlotSet{std::move(total), reference};
}

Var fuse_for_training(const std::vector<Var>& heads, std::size_t reference,
                      SimilarityMetric metric, Matcher matcher) {
  std::vector<Shape> shapes;
  for (const auto& h : heads) shapes.push_back(h.shape());
  check_heads(shapes, reference);

  // Copied: recording new nodes may reallocate the tape.
  const Tensor ref = heads[reference].value();
  Var total = heads[reference];
  for (std::size_t j = 0; j < heads.size(); ++j) {
    if (j == reference) continue;
    auto order = alignment_order(match(similarity(heads[j].value(), ref, metric), matcher));
    total = total + gather_rows(heads[j], std::move(order));
  }
  return scale(total, 1.0 / static_cast<double>(heads.size()));
}

}  // namespace slotforge
