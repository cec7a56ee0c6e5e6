#pragma once

#include <optional>
#include <vector>

#include "occgen/common.hpp"

namespace occgen {

// Which pixels enter the segmentation scores: every pixel, or only the
// ones the ground truth assigns to an object.
enum class PixelScope { All, Objects };

// Hard segmentations and amodal shapes for one scene. Mask column 0 is
// the background layer; shape columns hold complete silhouettes which
// may extend behind occluders. Order scores follow the closer-is-larger
// convention used by the compositor.
struct SegmentationPair {
  std::vector<Matrix> gt_masks;     // T of N x (K_gt + 1), one-hot rows
  std::vector<Matrix> pred_masks;   // T of N x (K_pred + 1), one-hot rows
  std::vector<Matrix> gt_shapes;    // T of N x K_gt in [0, 1]
  std::vector<Matrix> pred_shapes;  // T of N x K_pred in [0, 1]
  Matrix gt_order;                  // T x K_gt closeness scores
  Matrix pred_order;                // T x K_pred closeness scores
  int gt_count = 0;
  int pred_count = 0;

  int frames() const { return static_cast<int>(gt_masks.size()); }
  int gt_objects() const {
    return gt_masks.empty() ? 0 : static_cast<int>(gt_masks[0].cols()) - 1;
  }
  int pred_objects() const {
    return pred_masks.empty() ? 0 : static_cast<int>(pred_masks[0].cols()) - 1;
  }
};

// Chance-adjusted pair-counting agreement of the two labelings, pooled
// over every in-scope (frame, pixel). Both labelings collapsing to one
// cluster counts as perfect agreement.
real ari(const SegmentationPair& p, PixelScope scope);

// Chance-adjusted mutual information, computed per frame and averaged.
// The expected MI under random labelings with fixed margins is the
// exact hypergeometric sum, evaluated in log space. Frames with no
// in-scope pixels are skipped.
real ami(const SegmentationPair& p, PixelScope scope);

// Maximum-score assignment on a square score matrix, larger is better.
// The exhaustive search enumerates permutations and is only meant for
// small sizes; the other runs the O(n^3) augmenting-path solver. Both
// return the column picked for each row.
std::vector<int> assignment_exhaustive(const Matrix& score);
std::vector<int> assignment_hungarian(const Matrix& score);

// Map from ground-truth object k to the predicted slot with maximal
// total mask overlap across frames, -1 when there are fewer predicted
// slots than objects and k lost out. Exhaustive below 7 objects.
std::vector<int> match_objects(const SegmentationPair& p);

// Soft overlap scores of the matched complete shapes, averaged over
// ground-truth objects. Objects whose true shape is empty in every
// frame are dropped; with nothing left there is no value.
std::optional<real> iou(const SegmentationPair& p);
std::optional<real> f1(const SegmentationPair& p);

bool count_match(const SegmentationPair& p);

// Pairwise depth-order agreement weighted by the overlap of the two
// true shapes, averaged over frames with nonzero total weight.
std::optional<real> ooa(const SegmentationPair& p);

}  // namespace occgen
