#pragma once

#include <vector>

#include "sdm/sdm.hpp"

namespace sdm {

/// Splits each even-dimensioned grid into its four parity slices, in the
/// order (even rows, even cols), (even, odd), (odd, even), (odd, odd).
/// Every cell of the input appears in exactly one slice, so the split is
/// invertible and preserves active counts.
std::vector<Grid> reshape_down(const std::vector<Grid>& grids);
std::vector<FragmentBuffer> reshape_down(const std::vector<FragmentBuffer>& bufs);

/// Exact inverse of reshape_down: consecutive groups of four same-shaped
/// slices interleave back into one grid of doubled dimensions.
std::vector<Grid> reshape_up(const std::vector<Grid>& grids);
std::vector<FragmentBuffer> reshape_up(const std::vector<FragmentBuffer>& bufs);

/// Binary union: 1 where any input mask is active. All masks must share
/// one shape. With the four parity slices of a mask as input this is the
/// mask's block-occupancy at half resolution.
Grid zoomed_target(const std::vector<Grid>& masks);

/// Camera for a level-`level` slice: focal lengths, principal point and
/// screen dimensions all divide by 2^level, which makes slice cell centers
/// coincide with the original mask's block centers.
Intrinsics level_intrinsics(const Intrinsics& k, int level);

struct PyramidOptions {
  int s = 4;     // levels of reshaping; screen dims must divide by 2^s
  int zoom = 0;  // coarsest-to-finest stop level, in [0, s]
  SdmOptions sdm{};

  void validate() const {
    if (s < 0) throw std::invalid_argument("PyramidOptions: s must be non-negative");
    if (zoom < 0 || zoom > s)
      throw std::invalid_argument("PyramidOptions: zoom must lie in [0, s]");
    sdm.validate();
  }
};

struct PipelineResult {
  double loss = 0.0;
  double gx = 0.0, gy = 0.0;
  double noise_gx = 0.0, noise_gy = 0.0;
  std::vector<double> level_loss;  // one entry per processed level, s first
  int final_level = 0;
  std::vector<FragmentBuffer> final_buffers;  // 4^final_level slices
  Grid final_zoomed_target;
  bool mask_match = false;  // no final active cell falls outside the target
};

/// Coarse-to-fine solve of one translated buffer against one target mask.
/// Both are split s times; every level from s down to `zoom` runs one
/// scatter pass per slice against that level's zoomed target, accumulating
/// loss and gradient, and feeds its outputs to the next finer level.
PipelineResult sdm_pipeline(const FragmentBuffer& buf, const Grid& target_mask,
                            const Intrinsics& k, const PyramidOptions& opts);

}  // namespace sdm
