#include <doctest/doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sdm/sdm.hpp"

using namespace sdm;

namespace {

// Small camera whose half-pixel centers land on easy fractions: a pixel
// at depth 10 is a quarter scene unit.
Intrinsics small_camera() {
  Intrinsics k;
  k.fu = 40.0;
  k.fv = 40.0;
  k.ou = 60.5;
  k.ov = 30.5;
  k.height = 64;
  k.width = 128;
  return k;
}

FragmentBuffer buffer_with(const Intrinsics& k, int r, int c, const Point3& p,
                           double info = 1.0) {
  FragmentBuffer buf(k.height, k.width);
  buf.at(r, c) = {true, p, info};
  return buf;
}

Grid mask_of(const Intrinsics& k, std::initializer_list<ScreenPos> actives) {
  Grid m(k.height, k.width);
  for (const ScreenPos& p : actives) m.at(p.row, p.col) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("adjustments project onto the neighboring half-pixel centers") {
  const Intrinsics k;
  const double z = 12.5;
  FragmentBuffer buf(k.height, k.width);
  buf.at(5, 7) = {true, unproject_at_depth(5.3, 7.8, z, k), 1.0};
  const AdjustmentField adj = build_adjustments(buf, k, 3, 3);

  CHECK(adj.active(5, 7));
  for (int kk = 0; kk < 3; ++kk) {
    for (int ll = 0; ll < 3; ++ll) {
      const Point3 a = adj.at(5, 7, kk, ll);
      CHECK(a.z == z);
      const PixelCoord px = project(a, k);
      CHECK(px.row == doctest::Approx(5 + kk - 1 + 0.5).epsilon(1e-12));
      CHECK(px.col == doctest::Approx(7 + ll - 1 + 0.5).epsilon(1e-12));
    }
  }
  // The offset accessor addresses the same entries.
  CHECK(adj.at_offset(5, 7, 0, 0) == adj.at(5, 7, 1, 1));
  CHECK(adj.at_offset(5, 7, -1, 1) == adj.at(5, 7, 0, 2));
}

TEST_CASE("adjustments of inactive cells are the safe zero point") {
  const Intrinsics k;
  FragmentBuffer buf(k.height, k.width);
  const AdjustmentField adj = build_adjustments(buf, k, 3, 3);
  CHECK_FALSE(adj.active(4, 4));
  CHECK(adj.at(4, 4, 1, 1) == Point3{});
}

TEST_CASE("adjustment construction validates kernels and depths") {
  const Intrinsics k;
  FragmentBuffer buf(k.height, k.width);
  CHECK_THROWS_AS(build_adjustments(buf, k, 2, 3), std::invalid_argument);
  CHECK_THROWS_AS(build_adjustments(buf, k, 3, 0), std::invalid_argument);
  buf.at(1, 1) = {true, {0.0, 0.0, -1.0}, 1.0};
  CHECK_THROWS_AS(build_adjustments(buf, k, 3, 3), std::domain_error);
}

TEST_CASE("kernels are uniform on inactive cells and normalized on active ones") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const AdjustmentField adj = build_adjustments(buf, k, 3, 3);
  const KernelField kern = compute_kernels(buf, adj, 5.0);

  CHECK(kern.at(0, 0, 1, 1) == doctest::Approx(1.0 / 9.0));
  double total = 0.0;
  for (int kk = 0; kk < 3; ++kk)
    for (int ll = 0; ll < 3; ++ll) total += kern.at(32, 65, kk, ll);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kernel weights favor nearer adjustments and saturate with shape") {
  const Intrinsics k = small_camera();
  // Projection (32.1, 65.3): the cell's own center is the nearest
  // adjustment, the south-east one the farthest.
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const AdjustmentField adj = build_adjustments(buf, k, 3, 3);

  const KernelField soft = compute_kernels(buf, adj, 5.0);
  CHECK(soft.at(32, 65, 1, 1) > soft.at(32, 65, 0, 1));
  CHECK(soft.at(32, 65, 1, 1) > soft.at(32, 65, 2, 2));

  const KernelField sharp = compute_kernels(buf, adj, 1000.0);
  CHECK(sharp.at(32, 65, 1, 1) > 0.999999);

  CHECK_THROWS_AS(compute_kernels(buf, adj, 0.0), std::invalid_argument);
}

TEST_CASE("hard forward keeps interior points in their own cells") {
  const Intrinsics k;
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  std::uniform_int_distribution<int> row(1, k.height - 2), col(1, k.width - 2);
  std::uniform_real_distribution<double> depth(1.0, 50.0);

  FragmentBuffer buf(k.height, k.width);
  for (int i = 0; i < 60; ++i) {
    const int r = row(rng), c = col(rng);
    buf.at(r, c) = {true, unproject_at_depth(r + frac(rng), c + frac(rng), depth(rng), k), 1.0};
  }
  const AdjustmentField adj = build_adjustments(buf, k, 3, 3);
  const ForwardResult fwd = forward_hard(buf, k, adj);
  CHECK(fwd.buffer.values() == buf.values());
  for (const ScatterRecord& rec : fwd.scatter) {
    CHECK(rec.dest == rec.source);
    CHECK(rec.survived);
  }
}

TEST_CASE("hard forward scatters a displaced point to its nearest neighbor cell") {
  const Intrinsics k;
  // Stored in (5, 7) but projecting to (4.2, 8.7): nearest half-pixel
  // center is (4.5, 8.5), one cell up and one right.
  const FragmentBuffer buf = buffer_with(k, 5, 7, unproject_at_depth(4.2, 8.7, 10.0, k), 2.0);
  const ForwardResult fwd = forward_hard(buf, k, build_adjustments(buf, k, 3, 3));

  CHECK(fwd.buffer.active_count() == 1);
  REQUIRE(fwd.buffer.at(4, 8).active);
  CHECK(fwd.buffer.at(4, 8).coord == buf.at(5, 7).coord);
  CHECK(fwd.buffer.at(4, 8).info == 2.0);
  REQUIRE(fwd.scatter.size() == 1);
  CHECK(fwd.scatter[0].source == ScreenPos{5, 7});
  CHECK(fwd.scatter[0].dest == ScreenPos{4, 8});
  CHECK(fwd.scatter[0].k == 0);
  CHECK(fwd.scatter[0].l == 2);
  CHECK(fwd.scatter[0].survived);
}

TEST_CASE("a wider kernel reaches cells two steps away") {
  const Intrinsics k;
  const FragmentBuffer buf = buffer_with(k, 5, 7, unproject_at_depth(5.4, 9.1, 10.0, k));
  const ForwardResult fwd = forward_hard(buf, k, build_adjustments(buf, k, 5, 5));
  REQUIRE(fwd.buffer.at(5, 9).active);
  CHECK(fwd.buffer.active_count() == 1);
}

TEST_CASE("forward collisions resolve by depth then info like the renderer") {
  const Intrinsics k;
  FragmentBuffer buf(k.height, k.width);
  // Both cells scatter into (5, 8).
  buf.at(5, 7) = {true, unproject_at_depth(5.5, 8.3, 5.0, k), 4.0};
  buf.at(5, 9) = {true, unproject_at_depth(5.5, 8.7, 3.0, k), 9.0};
  const ForwardResult fwd = forward_hard(buf, k, build_adjustments(buf, k, 3, 3));

  CHECK(fwd.buffer.active_count() == 1);
  REQUIRE(fwd.buffer.at(5, 8).active);
  CHECK(fwd.buffer.at(5, 8).coord.z == 3.0);
  CHECK(fwd.buffer.at(5, 8).info == 9.0);
  REQUIRE(fwd.scatter.size() == 2);
  CHECK_FALSE(fwd.scatter[0].survived);  // the deeper fragment lost the cell
  CHECK(fwd.scatter[1].survived);

  // Equal depths: the smaller info value keeps the cell.
  FragmentBuffer tie(k.height, k.width);
  tie.at(5, 7) = {true, unproject_at_depth(5.5, 8.3, 5.0, k), 4.0};
  tie.at(5, 9) = {true, unproject_at_depth(5.5, 8.7, 5.0, k), 2.0};
  const ForwardResult tf = forward_hard(tie, k, build_adjustments(tie, k, 3, 3));
  CHECK(tf.buffer.at(5, 8).info == 2.0);
}

TEST_CASE("forward drops points whose nearest adjustment leaves the screen") {
  const Intrinsics k;
  const FragmentBuffer buf = buffer_with(k, 0, 5, unproject_at_depth(-0.7, 5.5, 10.0, k));
  const ForwardResult fwd = forward_hard(buf, k, build_adjustments(buf, k, 3, 3));
  CHECK(fwd.buffer.active_count() == 0);
  REQUIRE(fwd.scatter.size() == 1);
  CHECK(fwd.scatter[0].dest == ScreenPos{-1, 5});
  CHECK_FALSE(fwd.scatter[0].survived);
}

TEST_CASE("hard forward agrees with re-rendering for within-reach displacements") {
  Intrinsics k;
  k.fu = k.fv = 20.0;
  k.ou = 16.0;
  k.ov = 8.0;
  k.height = 16;
  k.width = 32;

  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> jitter(-1.45, 1.45);
  std::uniform_real_distribution<double> depth(1.0, 30.0);
  std::uniform_int_distribution<int> row(0, k.height - 1), col(0, k.width - 1);
  std::uniform_int_distribution<int> count(1, 40);

  for (int rep = 0; rep < 100; ++rep) {
    FragmentBuffer buf(k.height, k.width);
    const int m = count(rng);
    for (int i = 0; i < m; ++i) {
      const int r = row(rng), c = col(rng);
      const double z = depth(rng);
      buf.at(r, c) = {true,
                      unproject_at_depth(r + 0.5 + jitter(rng), c + 0.5 + jitter(rng), z, k),
                      z};
    }
    const ForwardResult fwd = forward_hard(buf, k, build_adjustments(buf, k, 3, 3));
    const Grid rerendered = render(buf.decode(), k);
    CHECK(binary_mask(fwd.rep) == binary_mask(rerendered));
    CHECK(fwd.rep == rerendered);
  }
}

TEST_CASE("soft forward converges to the hard forward as shape grows") {
  const Intrinsics k;
  std::mt19937_64 rng(555);
  // Depths from 8 keep the scene-space argmax margin above 0.015 units,
  // which the sharpest shape value turns into a sub-1e-6 residual.
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  std::uniform_real_distribution<double> depth(8.0, 40.0);
  std::bernoulli_distribution keep(0.3);

  // Actives three cells apart so no two kernels touch the same cell;
  // saturation only collapses onto the hard output when kernels are
  // disjoint and each argmax has a clear margin.
  FragmentBuffer buf(k.height, k.width);
  for (int r = 1; r + 1 < k.height; r += 3) {
    for (int c = 1; c + 1 < k.width; c += 3) {
      if (!keep(rng)) continue;
      buf.at(r, c) = {true, unproject_at_depth(r + frac(rng), c + frac(rng), depth(rng), k), 1.0};
    }
  }
  const AdjustmentField adj = build_adjustments(buf, k, 3, 3);
  const Grid hard = forward_hard(buf, k, adj).rep;

  double prev_gap = std::numeric_limits<double>::infinity();
  for (double c : {10.0, 100.0, 1000.0}) {
    const Grid soft = forward_soft(buf, adj, compute_kernels(buf, adj, c));
    double gap = 0.0;
    for (int r = 0; r < hard.height(); ++r)
      for (int cc = 0; cc < hard.width(); ++cc)
        gap = std::max(gap, std::abs(soft.at(r, cc) - hard.at(r, cc)));
    CHECK(gap <= prev_gap);
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-6);
}

TEST_CASE("soft forward rejects mismatched kernel shapes") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const AdjustmentField adj3 = build_adjustments(buf, k, 3, 3);
  const AdjustmentField adj5 = build_adjustments(buf, k, 5, 5);
  const KernelField kern5 = compute_kernels(buf, adj5, 10.0);
  CHECK_THROWS_AS(forward_soft(buf, adj3, kern5), std::invalid_argument);
}

TEST_CASE("a lone active target in the window becomes the designated target") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 64}});
  const SdmPassResult pass = sdm_pass(buf, target, k);

  REQUIRE(pass.assignment.cells.size() == 1);
  const CellAssignment& cell = pass.assignment.cells[0];
  CHECK(cell.cell == ScreenPos{32, 65});
  CHECK(cell.proper == ScreenPos{32, 65});
  REQUIRE(cell.designated.has_value());
  CHECK(*cell.designated == ScreenPos{32, 64});
  CHECK_FALSE(cell.matched);
  CHECK(cell.noise_targets.empty());
}

TEST_CASE("loss and gradient follow the componentwise distance to the target") {
  const Intrinsics k = small_camera();
  // Stored point (1.2, 0.4, 10); the designated target's adjustment is
  // (1.0, 0.5, 10), so the distance splits into 0.2 + 0.1.
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 64}});
  const SdmPassResult pass = sdm_pass(buf, target, k);

  CHECK(pass.loss.loss == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(pass.loss.grad.gx == 1.0);
  CHECK(pass.loss.grad.gy == -1.0);
  CHECK(pass.loss.grad.noise_gx == 0.0);
  CHECK(pass.loss.grad.noise_gy == 0.0);
}

TEST_CASE("the same pull emerges when the forward moves the point first") {
  const Intrinsics k = small_camera();
  // Stored one cell to the right of where it projects; the forward carries
  // it to (32, 65) and the backward works from there.
  const FragmentBuffer buf = buffer_with(k, 32, 66, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 64}});
  const SdmPassResult pass = sdm_pass(buf, target, k);

  REQUIRE(pass.assignment.cells.size() == 1);
  CHECK(pass.assignment.cells[0].cell == ScreenPos{32, 65});
  CHECK(pass.loss.loss == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(pass.loss.grad.gx == 1.0);
  CHECK(pass.loss.grad.gy == -1.0);
}

TEST_CASE("an axis-aligned match contributes a zero subgradient on that axis") {
  const Intrinsics k = small_camera();
  // Point x equals the target adjustment's x exactly; only y pulls.
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.25, 0.4, 10.0});
  const Grid target = mask_of(k, {{31, 65}});
  const SdmPassResult pass = sdm_pass(buf, target, k);

  CHECK(pass.loss.loss == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(pass.loss.grad.gx == 0.0);
  CHECK(pass.loss.grad.gy == 1.0);
}

TEST_CASE("an empty target window leaves the cell without any pull") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{10, 10}});  // far outside the window
  const SdmPassResult pass = sdm_pass(buf, target, k);

  REQUIRE(pass.assignment.cells.size() == 1);
  CHECK_FALSE(pass.assignment.cells[0].designated.has_value());
  CHECK(pass.loss.loss == 0.0);
  CHECK(pass.loss.grad.gx == 0.0);
  CHECK(pass.loss.grad.gy == 0.0);
}

TEST_CASE("designated ties resolve to the smaller row then column") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  // (31, 65) and (33, 65) are both one cell from the proper position.
  const SdmPassResult vertical = sdm_pass(buf, mask_of(k, {{31, 65}, {33, 65}}), k);
  REQUIRE(vertical.assignment.cells[0].designated.has_value());
  CHECK(*vertical.assignment.cells[0].designated == ScreenPos{31, 65});

  const SdmPassResult horizontal = sdm_pass(buf, mask_of(k, {{32, 64}, {32, 66}}), k);
  REQUIRE(horizontal.assignment.cells[0].designated.has_value());
  CHECK(*horizontal.assignment.cells[0].designated == ScreenPos{32, 64});
}

TEST_CASE("remaining window actives act as noise targets") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  // Designated is the unique nearest (32, 64); the two right-column
  // actives push and pull as noise.
  const Grid target = mask_of(k, {{32, 64}, {31, 66}, {33, 66}});
  const SdmPassResult pass = sdm_pass(buf, target, k, SdmOptions{}, true);

  const CellAssignment& cell = pass.assignment.cells[0];
  REQUIRE(cell.designated.has_value());
  CHECK(*cell.designated == ScreenPos{32, 64});
  CHECK(cell.noise_targets.size() == 2);

  // Designated term: |1.2-1.0| + |0.4-0.5| = 0.3, signs (+1, -1).
  // Noise (31,66) -> (1.5, 0.25): 0.3 + 0.15, signs (-1, +1).
  // Noise (33,66) -> (1.5, 0.75): 0.3 + 0.35, signs (-1, -1).
  CHECK(pass.loss.loss == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(pass.loss.grad.gx == -1.0);
  CHECK(pass.loss.grad.gy == -1.0);
  CHECK(pass.loss.grad.noise_gx == -2.0);
  CHECK(pass.loss.grad.noise_gy == 0.0);

  REQUIRE(pass.loss.grad.per_cell.size() == 1);
  CHECK(pass.loss.grad.per_cell[0].loss == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(pass.loss.grad.per_cell[0].gx == -1.0);
  CHECK(pass.loss.grad.per_cell[0].gy == -1.0);
}

TEST_CASE("a matched cell contributes nothing even with other actives nearby") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 65}, {31, 64}, {33, 66}});
  const SdmPassResult pass = sdm_pass(buf, target, k);

  const CellAssignment& cell = pass.assignment.cells[0];
  REQUIRE(cell.designated.has_value());
  CHECK(cell.matched);
  CHECK(pass.loss.loss == 0.0);
  CHECK(pass.loss.grad.gx == 0.0);
  CHECK(pass.loss.grad.gy == 0.0);
  CHECK(pass.loss.grad.noise_gx == 0.0);
  CHECK(pass.loss.grad.noise_gy == 0.0);
}

TEST_CASE("a point pushed off-screen receives no targets at all") {
  const Intrinsics k = small_camera();
  // Projects to (-0.7, 5.5); its nearest adjustment row is off the top.
  const FragmentBuffer buf = buffer_with(k, 0, 5, unproject_at_depth(-0.7, 5.5, 10.0, k));
  const Grid target = mask_of(k, {{0, 5}, {0, 6}, {1, 5}});
  const SdmPassResult pass = sdm_pass(buf, target, k);

  // The forward dropped the point, so the backward sees no residences.
  CHECK(pass.assignment.cells.empty());
  CHECK(pass.loss.loss == 0.0);
  CHECK(pass.loss.grad.gx == 0.0);
  CHECK(pass.loss.grad.gy == 0.0);
}

TEST_CASE("euclidean metric uses the normalized direction as gradient") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 64}});
  SdmOptions opts;
  opts.metric = LossMetric::L2;
  const SdmPassResult pass = sdm_pass(buf, target, k, opts);

  const double d = std::sqrt(0.2 * 0.2 + 0.1 * 0.1);
  CHECK(pass.loss.loss == doctest::Approx(d).epsilon(1e-12));
  CHECK(pass.loss.grad.gx == doctest::Approx(0.2 / d).epsilon(1e-12));
  CHECK(pass.loss.grad.gy == doctest::Approx(-0.1 / d).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences on a smooth piece") {
  const Intrinsics k = small_camera();
  const FragmentBuffer base = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 64}});

  auto loss_at = [&](double tx, double ty) {
    return sdm_pass(add_theta(base, {tx, ty}), target, k).loss.loss;
  };
  const SdmPassResult pass = sdm_pass(base, target, k);
  const double h = 1e-6;
  const double fx = (loss_at(h, 0.0) - loss_at(-h, 0.0)) / (2 * h);
  const double fy = (loss_at(0.0, h) - loss_at(0.0, -h)) / (2 * h);
  CHECK(fx == doctest::Approx(pass.loss.grad.gx).epsilon(1e-5));
  CHECK(fy == doctest::Approx(pass.loss.grad.gy).epsilon(1e-5));
}

TEST_CASE("per-cell contributions sum to the reported totals") {
  const Intrinsics k;
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  std::uniform_int_distribution<int> row(2, k.height - 3), col(2, k.width - 3);
  std::uniform_real_distribution<double> depth(2.0, 60.0);

  FragmentBuffer buf(k.height, k.width);
  Grid target(k.height, k.width);
  for (int i = 0; i < 50; ++i) {
    const int r = row(rng), c = col(rng);
    buf.at(r, c) = {true, unproject_at_depth(r + frac(rng), c + frac(rng), depth(rng), k), 1.0};
    target.at(row(rng), col(rng)) = 1.0;
  }
  const SdmPassResult pass = sdm_pass(buf, target, k, SdmOptions{}, true);

  double loss = 0.0, gx = 0.0, gy = 0.0;
  for (const CellContribution& cc : pass.loss.grad.per_cell) {
    loss += cc.loss;
    gx += cc.gx;
    gy += cc.gy;
  }
  CHECK(pass.loss.grad.per_cell.size() == pass.assignment.cells.size());
  CHECK(loss == doctest::Approx(pass.loss.loss).epsilon(1e-12));
  CHECK(gx == doctest::Approx(pass.loss.grad.gx).epsilon(1e-12));
  CHECK(gy == doctest::Approx(pass.loss.grad.gy).epsilon(1e-12));
}

TEST_CASE("a full pass is deterministic and validates shapes") {
  const Intrinsics k = small_camera();
  const FragmentBuffer buf = buffer_with(k, 32, 65, {1.2, 0.4, 10.0});
  const Grid target = mask_of(k, {{32, 64}});
  const SdmPassResult a = sdm_pass(buf, target, k);
  const SdmPassResult b = sdm_pass(buf, target, k);
  CHECK(a.loss.loss == b.loss.loss);
  CHECK(a.loss.grad.gx == b.loss.grad.gx);
  CHECK(a.loss.grad.gy == b.loss.grad.gy);

  const Grid wrong(8, 8);
  CHECK_THROWS_AS(sdm_pass(buf, wrong, k), std::invalid_argument);
  SdmOptions bad;
  bad.kernel_h = 4;
  CHECK_THROWS_AS(sdm_pass(buf, target, k, bad), std::invalid_argument);
}
