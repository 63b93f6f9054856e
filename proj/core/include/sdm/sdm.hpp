#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sdm/representation.hpp"

namespace sdm {

enum class LossMetric { L1, L2 };

struct SdmOptions {
  int kernel_h = 3;   // odd
  int kernel_w = 3;   // odd
  LossMetric metric = LossMetric::L1;

  void validate() const {
    if (kernel_h < 1 || kernel_h % 2 == 0 || kernel_w < 1 || kernel_w % 2 == 0)
      throw std::invalid_argument("SdmOptions: kernel dims must be odd and positive");
  }
};

/// Per active cell, the h*w candidate 3D points ("XY-adjustments") sharing
/// the cell's depth whose projections are the half-pixel centers of the
/// neighboring cells. Inactive cells carry the safe value (0,0,0).
class AdjustmentField {
 public:
  AdjustmentField(int height, int width, int kernel_h, int kernel_w);

  int height() const { return height_; }
  int width() const { return width_; }
  int kernel_h() const { return kh_; }
  int kernel_w() const { return kw_; }
  // Offset of kernel entry (k, l) from the cell, in cells.
  int row_offset(int k) const { return k - kh_ / 2; }
  int col_offset(int l) const { return l - kw_ / 2; }

  bool active(int r, int c) const { return slot_[index(r, c)] >= 0; }

  /// Adjustment at kernel entry (k, l); (0,0,0) for inactive cells.
  Point3 at(int r, int c, int k, int l) const {
    const std::int32_t s = slot_[index(r, c)];
    if (s < 0) return {};
    return points_[static_cast<std::size_t>(s) * kh_ * kw_ + k * kw_ + l];
  }

  /// Adjustment at the cell offset (dr, dc); requires |dr|,|dc| within reach.
  Point3 at_offset(int r, int c, int dr, int dc) const {
    return at(r, c, dr + kh_ / 2, dc + kw_ / 2);
  }

 private:
  friend AdjustmentField build_adjustments(const FragmentBuffer&, const Intrinsics&, int, int);
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * width_ + c; }

  int height_, width_, kh_, kw_;
  std::vector<std::int32_t> slot_;
  std::vector<Point3> points_;
};

/// Builds the adjustment field for every active cell of `buf`.
AdjustmentField build_adjustments(const FragmentBuffer& buf, const Intrinsics& k,
                                  int kernel_h, int kernel_w);

/// Softmax weights over the distances from each active cell's stored point
/// to its adjustments; nearer adjustments get larger weights. Inactive
/// cells are uniform 1/(h*w).
class KernelField {
 public:
  KernelField(int height, int width, int kernel_h, int kernel_w);

  int kernel_h() const { return kh_; }
  int kernel_w() const { return kw_; }

  double at(int r, int c, int k, int l) const {
    const std::int32_t s = slot_[index(r, c)];
    if (s < 0) return 1.0 / (kh_ * kw_);
    return weights_[static_cast<std::size_t>(s) * kh_ * kw_ + k * kw_ + l];
  }

 private:
  friend KernelField compute_kernels(const FragmentBuffer&, const AdjustmentField&, double);
  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * width_ + c; }

  int height_, width_, kh_, kw_;
  std::vector<std::int32_t> slot_;
  std::vector<double> weights_;
};

/// shape_c controls how sharply the nearest adjustment dominates.
KernelField compute_kernels(const FragmentBuffer& buf, const AdjustmentField& adj,
                            double shape_c);

struct ScatterRecord {
  ScreenPos source;   // active cell in the input buffer
  ScreenPos dest;     // cell of the nearest adjustment (may be off-screen)
  int k = 0, l = 0;   // kernel entry of dest
  bool survived = false;
};

struct ForwardResult {
  Grid rep;              // output representation values
  FragmentBuffer buffer; // proper whenever displacements stay within reach
  std::vector<ScatterRecord> scatter;  // row-major source order
};

/// Hard forward: each active cell's point moves to its nearest adjustment's
/// cell; collisions are resolved like the renderer (min depth, then min
/// info). Points scattering off-screen are dropped.
ForwardResult forward_hard(const FragmentBuffer& buf, const Intrinsics& k,
                           const AdjustmentField& adj);

/// Soft forward: every kernel entry contributes its weighted value to the
/// entry's cell, and each cell keeps the contribution that wins the same
/// (depth, value) ordering the renderer uses. Converges to the hard output
/// as shape_c grows when kernels do not overlap.
Grid forward_soft(const FragmentBuffer& buf, const AdjustmentField& adj,
                  const KernelField& kernels);

/// For one active cell of the forward output: the cell's proper position,
/// which target cell pulls it and which in-window targets merely add noise
/// terms.
struct CellAssignment {
  ScreenPos cell;                       // residence in the forward output
  ScreenPos proper;                     // where the stored point re-scatters
  std::optional<ScreenPos> designated;  // pulled-toward target, if any
  std::vector<ScreenPos> noise_targets;
  bool matched = false;                 // designated == proper; contributes nothing
};

struct TargetAssignment {
  std::vector<CellAssignment> cells;  // row-major residence order
};

/// Pairs every active cell of the forward output with target-mask cells
/// inside the kernel window around it. The proper position is where the
/// cell's stored point re-scatters; the designated target is the active
/// target cell nearest to it (ties: smallest row, then column); the
/// remaining in-window actives minus the proper position form the noise
/// set. A cell whose proper position leaves the screen gets no targets:
/// gradient flow is cancelled at the boundary just as the renderer culls
/// off-screen fragments. `adj` must be built over the forward output.
TargetAssignment assign_targets(const ForwardResult& fwd, const AdjustmentField& adj,
                                const Grid& target_mask, const SdmOptions& opts = {});

struct CellContribution {
  ScreenPos cell;
  double loss = 0.0;
  double gx = 0.0, gy = 0.0;
};

/// Accumulated gradient with respect to the translation estimate.
struct GradAccum {
  double gx = 0.0, gy = 0.0;
  double noise_gx = 0.0, noise_gy = 0.0;  // portion from noise targets only
  std::vector<CellContribution> per_cell; // filled on request
};

struct LossResult {
  double loss = 0.0;
  GradAccum grad;
};

/// Distance terms between each unmatched cell's stored point and the
/// adjustments at its designated and noise target offsets. The gradient
/// flows only through the translation of the stored coordinates; kernel
/// weights play no role. Matched cells and cells without an in-window
/// target contribute nothing. `buf` and `adj` refer to the forward output
/// the assignment was computed on.
LossResult loss_and_grad(const FragmentBuffer& buf, const AdjustmentField& adj,
                         const TargetAssignment& assign, const SdmOptions& opts,
                         bool log_cells = false);

struct SdmPassResult {
  ForwardResult forward;
  TargetAssignment assignment;
  LossResult loss;
};

/// One full hard-mode pass: adjustments, forward scatter, target
/// assignment, loss and gradient.
SdmPassResult sdm_pass(const FragmentBuffer& buf, const Grid& target_mask,
                       const Intrinsics& k, const SdmOptions& opts = {},
                       bool log_cells = false);

}  // namespace sdm
