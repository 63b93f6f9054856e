#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sdm/optimizer.hpp"

namespace sdm {

/// `count` configs drawn from `base` with per-config seeds derived from
/// base.seed, so any single config can be regenerated independently.
std::vector<SceneConfig> generate_corpus(const GenParams& base, int count);

/// Expected scene-space displacement a noise level induces: the mean, over
/// every visible translated point and every pixel shift in the level's
/// (2n+1)^2 support, of the XY distance between the point's unprojected
/// cell center and its shifted counterpart at the same depth. Computed by
/// exact enumeration of the shift distribution; 0 at level 0.
double avg_deviation(int level, std::span<const SceneConfig> configs);

/// p-th quantile of an ascending-sorted sample with linear interpolation
/// between closest ranks.
double quantile(std::span<const double> sorted, double p);

struct StatRow {
  int noise_level = 0;
  double avg_dist = 0.0;  // avg_deviation at this level
  double mean = 0.0;
  double stddev = 0.0;    // sample standard deviation over trials
  double q1 = 0.0, q2 = 0.0, q3 = 0.0;
};

struct ExperimentSpec {
  std::vector<int> noise_levels{0, 1, 2, 3, 4};
  int trials = 10;
  int corpus_size = 512;
  GenParams gen{};
  TrainParams train{};
  std::uint64_t seed = 0;  // master seed for per-trial noise and training

  void validate() const;
};

/// For each noise level: perturb every config's target at that level,
/// train a fresh estimate per trial, and summarize the final errors.
/// Per-trial seeds derive from spec.seed, so trials are independent and
/// the sweep is reproducible.
std::vector<StatRow> run_noise_sweep(const ExperimentSpec& spec,
                                     std::ostream* log = nullptr);

/// CSV with header noise_level,avg_dist,mean,std,q1,q2,q3.
void write_stats_csv(std::span<const StatRow> rows, std::ostream& out);

struct GradCheckParams {
  int samples = 64;
  double step = 1e-6;       // central-difference half step
  double tolerance = 1e-4;  // relative error bound for a pass
  double range = 0.6;       // translations drawn uniformly from [-range, range]^2
  int max_redraws = 50;     // attempts before a sample is skipped
  LossMetric metric = LossMetric::L1;
};

struct GradCheckSample {
  Translation2 theta;
  double analytic_x = 0.0, analytic_y = 0.0;
  double fd_x = 0.0, fd_y = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  int requested = 0;
  int evaluated = 0;
  int skipped = 0;  // samples where no kink-free translation was found
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<GradCheckSample> samples;
};

/// Central-difference validation of the analytic loss gradient on one
/// config. The loss is piecewise linear in the translation, so candidate
/// translations are rejected unless the assignment structure and every
/// term's signs are identical across the whole difference stencil; what
/// remains compares slopes of one linear piece.
GradCheckReport gradcheck(const SceneConfig& cfg, const GradCheckParams& params,
                          std::uint64_t seed);

}  // namespace sdm
