#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sdm/dataset.hpp"
#include "sdm/multiscale.hpp"

namespace sdm {

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Stops training once `window` consecutive batches fully land on their
/// targets; window 1 degenerates to stopping at the first such batch.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(int window) : window_(window) {
    if (window < 1)
      throw std::invalid_argument("ConvergenceMonitor: window must be at least 1");
  }

  /// Feed one batch outcome; true means every representation cell of the
  /// batch landed on an active target cell.
  bool observe(bool batch_matched) {
    streak_ = batch_matched ? streak_ + 1 : 0;
    return streak_ >= window_;
  }

  int streak() const { return streak_; }

 private:
  int window_;
  int streak_ = 0;
};

struct TrainParams {
  int n_epoch = 1;
  double lr = 3e-4;
  int batch_size = 16;
  int s = 4;
  std::vector<int> zoom_schedule;  // empty: s, s-1, ..., 0
  int monitor_window = 0;          // 0 disables early stopping
  LossMetric metric = LossMetric::L1;

  void validate() const;
  /// The schedule actually used (fills in the default).
  std::vector<int> resolved_schedule() const;
};

struct TrainReport {
  std::vector<double> step_loss;        // summed batch loss per step
  std::vector<double> epoch_mean_loss;
  std::vector<Translation2> theta_steps;
  std::vector<Translation2> step_noise; // lr-scaled noise-term update per step
  Translation2 final_theta;
  std::optional<double> error;          // |final_theta - theta*|
  double wall_seconds = 0.0;            // excluded from serialized reports
  std::uint64_t seed = 0;
  int batches_run = 0;
  bool stopped_by_monitor = false;
  bool degenerate_lr = false;           // lr was 0: estimate cannot move
};

/// Plain SGD on the translation estimate, starting from (0, 0). Batch
/// gradients are sums over the batch's configs; the learning rate halves
/// every time the zoom schedule moves to a new level. A non-finite
/// gradient aborts with NumericalError.
TrainReport train(std::span<const SceneConfig> configs, const TrainParams& params,
                  std::uint64_t seed);

}  // namespace sdm
