#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slotforge/feature_io.hpp"
#include "slotforge/tensor.hpp"

namespace slotforge {

struct SegmentationResult {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<std::size_t> labels;        // N, slot index per patch
  std::vector<Mask> per_slot_masks;       // K binary N-vectors, a partition
  std::vector<std::optional<Box>> boxes;  // K; nullopt for an empty mask
};

/// Argmax over slots per patch, lower slot index on ties.
SegmentationResult masks_from_alphas(const Tensor& alphas, std::size_t grid_h, std::size_t grid_w);

/// Treats every label value 0..max as a slot (predictions carry slot
/// indices, not a background label).
SegmentationResult segmentation_from_labels(const LabelGrid& grid);
LabelGrid to_label_grid(const SegmentationResult& result);

/// Intersection over union in inclusive patch cells.
double box_iou(const Box& a, const Box& b);
double mask_iou(const Mask& a, const Mask& b);

/// Any predicted box with IoU > 0.5 against any GT box.
bool corloc_hit(const SegmentationResult& result, const GroundTruth& gt);
/// Hits over images that have at least one GT box; 0 when there are none.
double corloc(const std::vector<SegmentationResult>& results, const std::vector<GroundTruth>& gts);

struct MaskScores {
  double miou = 0.0;
  double mbo = 0.0;
};

/// mIoU: one-to-one Hungarian matching on IoU (zero-padded to square),
/// averaged over GT masks. mBo: best IoU per GT mask without the one-to-one
/// constraint. Requires at least one GT mask.
MaskScores matched_mask_metrics(const std::vector<Mask>& pred_masks,
                                const std::vector<Mask>& gt_masks);

struct ImageRecord {
  std::string name;
  bool has_gt = false;
  bool corloc_hit = false;
  double miou = 0.0;
  double mbo = 0.0;
};

struct EvalReport {
  double corloc = 0.0;
  double miou = 0.0;
  double mbo = 0.0;
  std::size_t skipped = 0;  // images without GT masks
  std::vector<ImageRecord> images;
};

EvalReport evaluate(const std::vector<SegmentationResult>& results,
                    const std::vector<GroundTruth>& gts,
                    const std::vector<std::string>& names = {});

/// Per-image rows followed by a summary row named "mean".
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace slotforge
