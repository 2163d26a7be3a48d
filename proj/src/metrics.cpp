#include "slotforge/metrics.hpp"

#include <algorithm>
#include <fstream>

#include "slotforge/assignment.hpp"
#include "slotforge/errors.hpp"

namespace slotforge {

namespace {

SegmentationResult from_labels(std::vector<std::size_t> labels, std::size_t k, std::size_t grid_h,
                               std::size_t grid_w) {
  SegmentationResult r{grid_h, grid_w, std::move(labels), {}, {}};
  r.per_slot_masks.assign(k, Mask(grid_h * grid_w, 0));
  for (std::size_t n = 0; n < r.labels.size(); ++n) r.per_slot_masks[r.labels[n]][n] = 1;
  for (const Mask& m : r.per_slot_masks) r.boxes.push_back(mask_bounds(m, grid_w));
  return r;
}

}  // namespace

SegmentationResult masks_from_alphas(const Tensor& alphas, std::size_t grid_h, std::size_t grid_w) {
  if (alphas.rank() != 2 || alphas.cols() != grid_h * grid_w || alphas.rows() == 0) {
    throw ContractError("alphas of shape " + shape_to_string(alphas.shape()) +
                        " do not fit a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                        " grid");
  }
  const std::size_t k = alphas.rows(), n = alphas.cols();
  std::vector<std::size_t> labels(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t s = 1; s < k; ++s)
      if (alphas(s, p) > alphas(labels[p], p)) labels[p] = s;
  }
  return from_labels(std::move(labels), k, grid_h, grid_w);
}

SegmentationResult segmentation_from_labels(const LabelGrid& grid) {
  std::vector<std::size_t> labels;
  std::size_t k = 0;
  for (int l : grid.labels) {
    if (l < 0) throw FormatError("prediction grid holds negative label " + std::to_string(l));
    labels.push_back(static_cast<std::size_t>(l));
    k = std::max(k, labels.back() + 1);
  }
  return from_labels(std::move(labels), k, grid.grid_h, grid.grid_w);
}

LabelGrid to_label_grid(const SegmentationResult& result) {
  LabelGrid g{result.grid_h, result.grid_w, {}};
  for (std::size_t l : result.labels) g.labels.push_back(static_cast<int>(l));
  return g;
}

double box_iou(const Box& a, const Box& b) {
  auto area = [](const Box& x) {
    return static_cast<double>((x.row_max - x.row_min + 1) * (x.col_max - x.col_min + 1));
  };
  const std::size_t r0 = std::max(a.row_min, b.row_min), r1 = std::min(a.row_max, b.row_max);
  const std::size_t c0 = std::max(a.col_min, b.col_min), c1 = std::min(a.col_max, b.col_max);
  double inter = 0.0;
  if (r0 <= r1 && c0 <= c1) inter = static_cast<double>((r1 - r0 + 1) * (c1 - c0 + 1));
  return inter / (area(a) + area(b) - inter);
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) {
    throw ContractError("mask sizes differ: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

bool corloc_hit(const SegmentationResult& result, const GroundTruth& gt) {
  for (const auto& pred : result.boxes) {
    if (!pred) continue;
    for (const Box& g : gt.boxes)
      if (box_iou(*pred, g) > 0.5) return true;
  }
  return false;
}

double corloc(const std::vector<SegmentationResult>& results, const std::vector<GroundTruth>& gts) {
  if (results.size() != gts.size()) {
    throw ContractError(std::to_string(results.size()) + " predictions for " +
                        std::to_string(gts.size()) + " ground truths");
  }
  std::size_t hits = 0, counted = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (gts[i].boxes.empty()) continue;
    ++counted;
    if (corloc_hit(results[i], gts[i])) ++hits;
  }
  return counted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(counted);
}

MaskScores matched_mask_metrics(const std::vector<Mask>& pred_masks,
                                const std::vector<Mask>& gt_masks) {
  if (gt_masks.empty()) throw ContractError("matched_mask_metrics needs at least one GT mask");
  const std::size_t g = gt_masks.size(), p = pred_masks.size();
  const std::size_t side = std::max(g, p);
  Tensor iou({side, side});
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < p; ++j) iou(i, j) = mask_iou(gt_masks[i], pred_masks[j]);

  MaskScores s;
  const Assignment a = hungarian(iou, Objective::kMaximize);
  for (std::size_t i = 0; i < g; ++i) {
    s.miou += iou(i, a.mapping[i]);
    double best = 0.0;
    for (std::size_t j = 0; j < p; ++j) best = std::max(best, iou(i, j));
    s.mbo += best;
  }
  s.miou /= static_cast<double>(g);
  s.mbo /= static_cast<double>(g);
  return s;
}

EvalReport evaluate(const std::vector<SegmentationResult>& results,
                    const std::vector<GroundTruth>& gts, const std::vector<std::string>& names) {
  if (results.size() != gts.size()) {
    throw ContractError(std::to_string(results.size()) + " predictions for " +
                        std::to_string(gts.size()) + " ground truths");
  }
  if (!names.empty() && names.size() != results.size())
    throw ContractError("evaluate got a name list of the wrong length");
  EvalReport report;
  std::size_t with_boxes = 0, hits = 0, scored = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const SegmentationResult& r = results[i];
    const GroundTruth& gt = gts[i];
    if (r.labels.size() != gt.grid_h * gt.grid_w) {
      throw ContractError("prediction " + std::to_string(i) + " covers " +
                          std::to_string(r.labels.size()) + " patches, ground truth " +
                          std::to_string(gt.grid_h * gt.grid_w));
    }
    ImageRecord rec;
    rec.name = names.empty() ? std::to_string(i) : names[i];
    rec.has_gt = !gt.instance_masks.empty();
    if (!gt.boxes.empty()) {
      ++with_boxes;
      rec.corloc_hit = corloc_hit(r, gt);
      if (rec.corloc_hit) ++hits;
    }
    if (rec.has_gt) {
      const MaskScores s = matched_mask_metrics(r.per_slot_masks, gt.instance_masks);
      rec.miou = s.miou;
      rec.mbo = s.mbo;
      report.miou += s.miou;
      report.mbo += s.mbo;
      ++scored;
    } else {
      ++report.skipped;
    }
    report.images.push_back(rec);
  }
  report.corloc = with_boxes == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(with_boxes);
  if (scored > 0) {
    report.miou /= static_cast<double>(scored);
    report.mbo /= static_cast<double>(scored);
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report to " + path.string());
  out.precision(10);
  out << "image,has_gt,corloc_hit,miou,mbo\n";
  for (const ImageRecord& r : report.images) {
    out << r.name << ',' << (r.has_gt ? 1 : 0) << ',' << (r.corloc_hit ? 1 : 0) << ',' << r.miou
        << ',' << r.mbo << '\n';
  }
  out << "mean,," << report.corloc << ',' << report.miou << ',' << report.mbo << '\n';
  if (!out) throw IoError("failed writing report to " + path.string());
}

}  // namespace slotforge
