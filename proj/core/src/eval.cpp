#include "sdm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "sdm/format.hpp"
#include "sdm/rng.hpp"

namespace sdm {

std::vector<SceneConfig> generate_corpus(const GenParams& base, int count) {
  if (count < 1) throw std::invalid_argument("generate_corpus: count must be at least 1");
  std::vector<SceneConfig> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    GenParams p = base;
    p.seed = derive_seed(base.seed, static_cast<std::uint64_t>(i));
    out.push_back(generate_config(p));
  }
  return out;
}

double avg_deviation(int level, std::span<const SceneConfig> configs) {
  if (level < 0) throw std::invalid_argument("avg_deviation: level must be non-negative");
  if (level == 0) return 0.0;

  double total = 0.0;
  long count = 0;
  for (const SceneConfig& cfg : configs) {
    const Intrinsics& k = cfg.intrinsics;
    // Shifting a cell by (dr, dc) moves its unprojected center by
    // z * (dc/fu, dr/fv); the depth factors out of the distribution mean.
    double shift_factor = 0.0;
    for (int dr = -level; dr <= level; ++dr)
      for (int dc = -level; dc <= level; ++dc)
        shift_factor += std::hypot(dc / k.fu, dr / k.fv);
    shift_factor /= static_cast<double>((2 * level + 1) * (2 * level + 1));

    for (const Point3& p : cfg.points) {
      const Point3 moved = p + cfg.theta_star;
      if (!(moved.z > 0.0)) continue;
      if (!on_screen(floor_pos(project(moved, k)), k)) continue;
      total += shift_factor * moved.z;
      ++count;
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p must be in [0, 1]");
  if (sorted.size() == 1) return sorted[0];
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void ExperimentSpec::validate() const {
  if (trials < 1) throw std::invalid_argument("ExperimentSpec: trials must be at least 1");
  if (corpus_size < 1)
    throw std::invalid_argument("ExperimentSpec: corpus_size must be at least 1");
  if (noise_levels.empty())
    throw std::invalid_argument("ExperimentSpec: need at least one noise level");
  for (int n : noise_levels)
    if (n < 0) throw std::invalid_argument("ExperimentSpec: noise levels must be non-negative");
  gen.validate();
  train.validate();
}

std::vector<StatRow> run_noise_sweep(const ExperimentSpec& spec, std::ostream* log) {
  spec.validate();
  const std::vector<SceneConfig> corpus = generate_corpus(spec.gen, spec.corpus_size);

  std::vector<StatRow> rows;
  rows.reserve(spec.noise_levels.size());
  for (int level : spec.noise_levels) {
    std::vector<double> errors;
    errors.reserve(static_cast<std::size_t>(spec.trials));
    for (int trial = 0; trial < spec.trials; ++trial) {
      const std::uint64_t key =
          (static_cast<std::uint64_t>(level) << 32) | static_cast<std::uint64_t>(trial);
      std::vector<SceneConfig> noisy = corpus;
      for (std::size_t j = 0; j < noisy.size(); ++j)
        noisy[j].target = add_noise(noisy[j].target, level,
                                    derive_seed(spec.seed, key, j + 1));
      TrainReport report = train(noisy, spec.train, derive_seed(spec.seed, key, 0));
      errors.push_back(report.error.value());
      if (log)
        *log << "level " << level << " trial " << trial << ": error "
             << format_double(errors.back()) << "\n";
    }

    std::sort(errors.begin(), errors.end());
    StatRow row;
    row.noise_level = level;
    row.avg_dist = avg_deviation(level, corpus);
    double sum = 0.0;
    for (double e : errors) sum += e;
    row.mean = sum / static_cast<double>(errors.size());
    double ss = 0.0;
    for (double e : errors) ss += (e - row.mean) * (e - row.mean);
    row.stddev = errors.size() > 1
                     ? std::sqrt(ss / static_cast<double>(errors.size() - 1))
                     : 0.0;
    row.q1 = quantile(errors, 0.25);
    row.q2 = quantile(errors, 0.50);
    row.q3 = quantile(errors, 0.75);
    rows.push_back(row);
  }
  return rows;
}

void write_stats_csv(std::span<const StatRow> rows, std::ostream& out) {
  out << "noise_level,avg_dist,mean,std,q1,q2,q3\n";
  for (const StatRow& r : rows)
    out << r.noise_level << "," << format_double(r.avg_dist) << ","
        << format_double(r.mean) << "," << format_double(r.stddev) << ","
        << format_double(r.q1) << "," << format_double(r.q2) << ","
        << format_double(r.q3) << "\n";
}

namespace {

// Everything that determines which linear piece of the loss the
// translation sits on: the full cell-to-target assignment plus the sign
// of every distance term. Two equal signatures mean equal gradients.
// min_margin is the smallest |coordinate difference| over all terms; a
// sign cannot flip within a step smaller than that margin.
struct PieceSignature {
  std::vector<long long> data;
  double min_margin = std::numeric_limits<double>::infinity();

  friend bool operator==(const PieceSignature& a, const PieceSignature& b) {
    return a.data == b.data;
  }
};

PieceSignature pass_signature(const FragmentBuffer& buf, const Grid& target,
                              const Intrinsics& k, const SdmOptions& opts) {
  PieceSignature sig;
  const AdjustmentField adj = build_adjustments(buf, k, opts.kernel_h, opts.kernel_w);
  const ForwardResult fwd = forward_hard(buf, k, adj);
  const AdjustmentField out_adj =
      build_adjustments(fwd.buffer, k, opts.kernel_h, opts.kernel_w);
  const TargetAssignment assign = assign_targets(fwd, out_adj, target, opts);

  auto push_pos = [&sig](const ScreenPos& p) {
    sig.data.push_back(p.row);
    sig.data.push_back(p.col);
  };
  for (const CellAssignment& cell : assign.cells) {
    push_pos(cell.cell);
    push_pos(cell.proper);
    sig.data.push_back(cell.matched ? 1 : 0);
    if (!cell.designated || cell.matched) {
      sig.data.push_back(-1);
      continue;
    }
    const Point3 p = fwd.buffer.at(cell.cell.row, cell.cell.col).coord;
    auto push_term = [&](const ScreenPos& target_pos) {
      const Point3 t = out_adj.at_offset(cell.cell.row, cell.cell.col,
                                         target_pos.row - cell.cell.row,
                                         target_pos.col - cell.cell.col);
      push_pos(target_pos);
      const double dx = p.x - t.x, dy = p.y - t.y;
      sig.data.push_back((dx > 0.0) - (dx < 0.0));
      sig.data.push_back((dy > 0.0) - (dy < 0.0));
      sig.min_margin = std::min({sig.min_margin, std::abs(dx), std::abs(dy)});
    };
    push_term(*cell.designated);
    sig.data.push_back(static_cast<long long>(cell.noise_targets.size()));
    for (const ScreenPos& pos : cell.noise_targets) push_term(pos);
  }
  return sig;
}

}  // namespace

GradCheckReport gradcheck(const SceneConfig& cfg, const GradCheckParams& params,
                          std::uint64_t seed) {
  if (params.samples < 1)
    throw std::invalid_argument("gradcheck: samples must be at least 1");
  if (!(params.step > 0.0)) throw std::invalid_argument("gradcheck: step must be positive");
  if (!(params.range > 0.0)) throw std::invalid_argument("gradcheck: range must be positive");
  if (params.max_redraws < 1)
    throw std::invalid_argument("gradcheck: max_redraws must be at least 1");

  std::vector<Fragment> frags;
  frags.reserve(cfg.points.size());
  for (const Point3& p : cfg.points)
    if (p.z > 0.0) frags.push_back({p, p.z});
  const FragmentBuffer base = render_buffer(frags, cfg.intrinsics);

  SdmOptions opts;
  opts.metric = params.metric;
  const double h = params.step;

  auto loss_at = [&](const Translation2& t) {
    return sdm_pass(add_theta(base, t), cfg.target, cfg.intrinsics, opts).loss.loss;
  };
  auto signature_at = [&](const Translation2& t) {
    return pass_signature(add_theta(base, t), cfg.target, cfg.intrinsics, opts);
  };

  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> draw(-params.range, params.range);

  GradCheckReport report;
  report.requested = params.samples;
  for (int i = 0; i < params.samples; ++i) {
    bool found = false;
    for (int attempt = 0; attempt < params.max_redraws && !found; ++attempt) {
      const Translation2 theta{draw(rng), draw(rng)};
      const PieceSignature center = signature_at(theta);
      // The step must stay clear of every sign change; 3h leaves room for
      // the double stencil displacement plus rounding.
      if (center.min_margin <= 3.0 * h) continue;
      const PieceSignature xm = signature_at({theta.x - h, theta.y});
      const PieceSignature xp = signature_at({theta.x + h, theta.y});
      const PieceSignature ym = signature_at({theta.x, theta.y - h});
      const PieceSignature yp = signature_at({theta.x, theta.y + h});
      if (!(xm == center && xp == center && ym == center && yp == center)) continue;

      const LossResult analytic =
          sdm_pass(add_theta(base, theta), cfg.target, cfg.intrinsics, opts).loss;
      GradCheckSample sample;
      sample.theta = theta;
      sample.analytic_x = analytic.grad.gx;
      sample.analytic_y = analytic.grad.gy;
      sample.fd_x = (loss_at({theta.x + h, theta.y}) - loss_at({theta.x - h, theta.y})) / (2 * h);
      sample.fd_y = (loss_at({theta.x, theta.y + h}) - loss_at({theta.x, theta.y - h})) / (2 * h);
      const double ex = std::abs(sample.analytic_x - sample.fd_x) /
                        std::max({1.0, std::abs(sample.analytic_x), std::abs(sample.fd_x)});
      const double ey = std::abs(sample.analytic_y - sample.fd_y) /
                        std::max({1.0, std::abs(sample.analytic_y), std::abs(sample.fd_y)});
      sample.rel_err = std::max(ex, ey);
      report.max_rel_err = std::max(report.max_rel_err, sample.rel_err);
      report.samples.push_back(sample);
      ++report.evaluated;
      found = true;
    }
    if (!found) ++report.skipped;
  }
  report.pass = report.evaluated > 0 && report.max_rel_err < params.tolerance;
  return report;
}

}  // namespace sdm
