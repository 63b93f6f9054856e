#include "sdm/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sdm/rng.hpp"

namespace sdm {

void TrainParams::validate() const {
  if (n_epoch < 1) throw std::invalid_argument("TrainParams: n_epoch must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr))
    throw std::invalid_argument("TrainParams: lr must be finite and non-negative");
  if (batch_size < 1) throw std::invalid_argument("TrainParams: batch_size must be at least 1");
  if (s < 0) throw std::invalid_argument("TrainParams: s must be non-negative");
  for (int z : zoom_schedule)
    if (z < 0 || z > s)
      throw std::invalid_argument("TrainParams: zoom levels must lie in [0, s]");
  if (monitor_window < 0)
    throw std::invalid_argument("TrainParams: monitor_window must be non-negative");
}

std::vector<int> TrainParams::resolved_schedule() const {
  if (!zoom_schedule.empty()) return zoom_schedule;
  std::vector<int> sched(static_cast<std::size_t>(s) + 1);
  for (int i = 0; i <= s; ++i) sched[static_cast<std::size_t>(i)] = s - i;
  return sched;
}

TrainReport train(std::span<const SceneConfig> configs, const TrainParams& params,
                  std::uint64_t seed) {
  params.validate();
  if (configs.empty()) throw std::invalid_argument("train: corpus is empty");

  const auto t0 = std::chrono::steady_clock::now();

  // The scene side never changes during training: pre-render each config's
  // points once, with depth as the info value.
  std::vector<FragmentBuffer> base;
  base.reserve(configs.size());
  for (const SceneConfig& cfg : configs) {
    std::vector<Fragment> frags;
    frags.reserve(cfg.points.size());
    for (const Point3& p : cfg.points)
      if (p.z > 0.0) frags.push_back({p, p.z});
    base.push_back(render_buffer(frags, cfg.intrinsics));
  }

  const std::vector<int> schedule = params.resolved_schedule();
  const int n = static_cast<int>(configs.size());
  const int batches_per_epoch = (n + params.batch_size - 1) / params.batch_size;
  const long total_steps = static_cast<long>(params.n_epoch) * batches_per_epoch;

  TrainReport report;
  report.seed = seed;
  report.degenerate_lr = (params.lr == 0.0);

  Translation2 theta{0.0, 0.0};
  double lr = params.lr;
  int current_zoom = schedule.front();

  auto rng = make_rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::optional<ConvergenceMonitor> monitor;
  if (params.monitor_window > 0) monitor.emplace(params.monitor_window);

  long step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < params.n_epoch && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t epoch_first_step = report.step_loss.size();

    for (int b = 0; b < batches_per_epoch && !stop; ++b, ++step) {
      const std::size_t phase =
          std::min(static_cast<std::size_t>(step * static_cast<long>(schedule.size()) / total_steps),
                   schedule.size() - 1);
      if (schedule[phase] != current_zoom) {
        current_zoom = schedule[phase];
        lr /= 2.0;
      }

      PyramidOptions pyr;
      pyr.s = params.s;
      pyr.zoom = current_zoom;
      pyr.sdm.metric = params.metric;

      double gx = 0.0, gy = 0.0, nx = 0.0, ny = 0.0, batch_loss = 0.0;
      bool batch_matched = true;
      const int lo = b * params.batch_size;
      const int hi = std::min(n, lo + params.batch_size);
      for (int i = lo; i < hi; ++i) {
        const std::size_t idx = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
        const SceneConfig& cfg = configs[idx];
        PipelineResult res =
            sdm_pipeline(add_theta(base[idx], theta), cfg.target, cfg.intrinsics, pyr);
        gx += res.gx;
        gy += res.gy;
        nx += res.noise_gx;
        ny += res.noise_gy;
        batch_loss += res.loss;
        batch_matched = batch_matched && res.mask_match;
      }

      if (!std::isfinite(gx) || !std::isfinite(gy) || !std::isfinite(batch_loss))
        throw NumericalError("train: non-finite gradient or loss at step " +
                             std::to_string(step));

      theta.x -= lr * gx;
      theta.y -= lr * gy;
      report.step_loss.push_back(batch_loss);
      report.theta_steps.push_back(theta);
      report.step_noise.push_back({lr * nx, lr * ny});
      ++report.batches_run;

      if (monitor && monitor->observe(batch_matched)) {
        report.stopped_by_monitor = true;
        stop = true;
      }
    }

    const std::size_t count = report.step_loss.size() - epoch_first_step;
    if (count > 0) {
      double sum = 0.0;
      for (std::size_t i = epoch_first_step; i < report.step_loss.size(); ++i)
        sum += report.step_loss[i];
      report.epoch_mean_loss.push_back(sum / static_cast<double>(count));
    }
  }

  report.final_theta = theta;
  const Translation2 star = configs[0].theta_star;
  report.error = std::hypot(theta.x - star.x, theta.y - star.y);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace sdm
