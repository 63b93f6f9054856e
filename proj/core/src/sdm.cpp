#include "sdm/sdm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdm {

namespace {

double distance3(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

AdjustmentField::AdjustmentField(int height, int width, int kernel_h, int kernel_w)
    : height_(height), width_(width), kh_(kernel_h), kw_(kernel_w),
      slot_(static_cast<std::size_t>(height) * width, -1) {}

AdjustmentField build_adjustments(const FragmentBuffer& buf, const Intrinsics& k,
                                  int kernel_h, int kernel_w) {
  k.validate();
  if (kernel_h < 1 || kernel_h % 2 == 0 || kernel_w < 1 || kernel_w % 2 == 0)
    throw std::invalid_argument("build_adjustments: kernel dims must be odd and positive");

  AdjustmentField field(buf.height(), buf.width(), kernel_h, kernel_w);
  std::int32_t next = 0;
  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      const FragmentBuffer::Cell& cell = buf.at(r, c);
      if (!cell.active) continue;
      if (!(cell.coord.z > 0.0))
        throw std::domain_error("build_adjustments: active cell with non-positive depth");
      field.slot_[field.index(r, c)] = next++;
      for (int kk = 0; kk < kernel_h; ++kk) {
        const int dr = kk - kernel_h / 2;
        for (int ll = 0; ll < kernel_w; ++ll) {
          const int dc = ll - kernel_w / 2;
          field.points_.push_back(
              unproject_at_depth(r + dr + 0.5, c + dc + 0.5, cell.coord.z, k));
        }
      }
    }
  }
  return field;
}

KernelField::KernelField(int height, int width, int kernel_h, int kernel_w)
    : height_(height), width_(width), kh_(kernel_h), kw_(kernel_w),
      slot_(static_cast<std::size_t>(height) * width, -1) {}

KernelField compute_kernels(const FragmentBuffer& buf, const AdjustmentField& adj,
                            double shape_c) {
  if (!(shape_c > 0.0))
    throw std::invalid_argument("compute_kernels: shape parameter must be positive");
  const int kh = adj.kernel_h(), kw = adj.kernel_w();
  KernelField field(buf.height(), buf.width(), kh, kw);
  std::vector<double> dist(static_cast<std::size_t>(kh) * kw);

  std::int32_t next = 0;
  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      const FragmentBuffer::Cell& cell = buf.at(r, c);
      if (!cell.active) continue;
      double d_min = std::numeric_limits<double>::infinity();
      for (int kk = 0; kk < kh; ++kk)
        for (int ll = 0; ll < kw; ++ll) {
          double d = distance3(cell.coord, adj.at(r, c, kk, ll));
          dist[static_cast<std::size_t>(kk) * kw + ll] = d;
          d_min = std::min(d_min, d);
        }
      // Shift by the minimum before exponentiating so large shape values
      // saturate instead of flushing every weight to zero.
      double total = 0.0;
      for (double& d : dist) {
        d = std::exp(-shape_c * (d - d_min));
        total += d;
      }
      field.slot_[field.index(r, c)] = next++;
      for (double d : dist) field.weights_.push_back(d / total);
    }
  }
  return field;
}

ForwardResult forward_hard(const FragmentBuffer& buf, const Intrinsics& k,
                           const AdjustmentField& adj) {
  const int kh = adj.kernel_h(), kw = adj.kernel_w();
  ForwardResult out;
  out.buffer = FragmentBuffer(buf.height(), buf.width());

  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      const FragmentBuffer::Cell& cell = buf.at(r, c);
      if (!cell.active) continue;
      // Nearest adjustment in 3D; ties resolve to the first entry in
      // row-major kernel order.
      double best = std::numeric_limits<double>::infinity();
      int best_k = 0, best_l = 0;
      for (int kk = 0; kk < kh; ++kk)
        for (int ll = 0; ll < kw; ++ll) {
          double d = distance3(cell.coord, adj.at(r, c, kk, ll));
          if (d < best) {
            best = d;
            best_k = kk;
            best_l = ll;
          }
        }
      ScatterRecord rec;
      rec.source = {r, c};
      rec.k = best_k;
      rec.l = best_l;
      rec.dest = {r + adj.row_offset(best_k), c + adj.col_offset(best_l)};
      if (out.buffer.in_bounds(rec.dest.row, rec.dest.col)) {
        FragmentBuffer::Cell& dst = out.buffer.at(rec.dest.row, rec.dest.col);
        if (fragment_wins({cell.coord, cell.info}, dst)) {
          dst.active = true;
          dst.coord = cell.coord;
          dst.info = cell.info;
        }
      }
      out.scatter.push_back(rec);
    }
  }

  // A record survived if its fragment still occupies the destination.
  for (ScatterRecord& rec : out.scatter) {
    if (!out.buffer.in_bounds(rec.dest.row, rec.dest.col)) continue;
    const FragmentBuffer::Cell& dst = out.buffer.at(rec.dest.row, rec.dest.col);
    const FragmentBuffer::Cell& src = buf.at(rec.source.row, rec.source.col);
    rec.survived = dst.active && dst.coord == src.coord && dst.info == src.info;
  }

  out.rep = out.buffer.values();
  return out;
}

Grid forward_soft(const FragmentBuffer& buf, const AdjustmentField& adj,
                  const KernelField& kernels) {
  if (adj.kernel_h() != kernels.kernel_h() || adj.kernel_w() != kernels.kernel_w())
    throw std::invalid_argument("forward_soft: adjustment and kernel shapes differ");
  const int kh = adj.kernel_h(), kw = adj.kernel_w();

  struct Best {
    bool seen = false;
    double z = 0.0, value = 0.0;
  };
  std::vector<Best> best(static_cast<std::size_t>(buf.height()) * buf.width());

  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      const FragmentBuffer::Cell& cell = buf.at(r, c);
      if (!cell.active) continue;
      for (int kk = 0; kk < kh; ++kk) {
        const int tr = r + adj.row_offset(kk);
        if (tr < 0 || tr >= buf.height()) continue;
        for (int ll = 0; ll < kw; ++ll) {
          const int tc = c + adj.col_offset(ll);
          if (tc < 0 || tc >= buf.width()) continue;
          const double b = kernels.at(r, c, kk, ll) * cell.info;
          if (!(b > 0.0)) continue;
          Best& slot = best[static_cast<std::size_t>(tr) * buf.width() + tc];
          // Same visibility ordering the renderer uses: nearest source
          // depth wins, equal depths keep the smaller value.
          if (!slot.seen || cell.coord.z < slot.z ||
              (cell.coord.z == slot.z && b < slot.value)) {
            slot.seen = true;
            slot.z = cell.coord.z;
            slot.value = b;
          }
        }
      }
    }
  }

  Grid rep(buf.height(), buf.width());
  for (int r = 0; r < buf.height(); ++r)
    for (int c = 0; c < buf.width(); ++c) {
      const Best& slot = best[static_cast<std::size_t>(r) * buf.width() + c];
      if (slot.seen) rep.at(r, c) = slot.value;
    }
  return rep;
}

TargetAssignment assign_targets(const ForwardResult& fwd, const AdjustmentField& adj,
                                const Grid& target_mask, const SdmOptions& opts) {
  opts.validate();
  const FragmentBuffer& buf = fwd.buffer;
  if (target_mask.height() != buf.height() || target_mask.width() != buf.width())
    throw std::invalid_argument("assign_targets: target shape differs from buffer");
  if (adj.height() != buf.height() || adj.width() != buf.width() ||
      adj.kernel_h() != opts.kernel_h || adj.kernel_w() != opts.kernel_w)
    throw std::invalid_argument("assign_targets: adjustment field shape differs");
  const int rh = opts.kernel_h / 2, rw = opts.kernel_w / 2;

  TargetAssignment out;
  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      const FragmentBuffer::Cell& res = buf.at(r, c);
      if (!res.active) continue;

      CellAssignment cell;
      cell.cell = {r, c};

      // Proper position: where the stored point re-scatters from its
      // residence, the same nearest-adjustment rule the forward uses.
      double best_d = std::numeric_limits<double>::infinity();
      for (int kk = 0; kk < opts.kernel_h; ++kk)
        for (int ll = 0; ll < opts.kernel_w; ++ll) {
          const double d = distance3(res.coord, adj.at(r, c, kk, ll));
          if (d < best_d) {
            best_d = d;
            cell.proper = {r + adj.row_offset(kk), c + adj.col_offset(ll)};
          }
        }

      // Gradient flow is cancelled at the screen boundary: a point whose
      // proper position is off-screen gets no targets, exactly as the
      // renderer culls off-screen fragments.
      if (!buf.in_bounds(cell.proper.row, cell.proper.col)) {
        out.cells.push_back(std::move(cell));
        continue;
      }

      // Active target cells inside the kernel window; row-major scan so
      // distance ties pick the smallest row, then column.
      long best = std::numeric_limits<long>::max();
      for (int dr = -rh; dr <= rh; ++dr) {
        const int tr = r + dr;
        if (tr < 0 || tr >= buf.height()) continue;
        for (int dc = -rw; dc <= rw; ++dc) {
          const int tc = c + dc;
          if (tc < 0 || tc >= buf.width()) continue;
          if (target_mask.at(tr, tc) == 0.0) continue;
          const long du = tr - cell.proper.row, dv = tc - cell.proper.col;
          const long d2 = du * du + dv * dv;
          if (d2 < best) {
            best = d2;
            cell.designated = ScreenPos{tr, tc};
          }
        }
      }

      if (cell.designated) {
        cell.matched = (*cell.designated == cell.proper);
        for (int dr = -rh; dr <= rh; ++dr) {
          const int tr = r + dr;
          if (tr < 0 || tr >= buf.height()) continue;
          for (int dc = -rw; dc <= rw; ++dc) {
            const int tc = c + dc;
            if (tc < 0 || tc >= buf.width()) continue;
            if (target_mask.at(tr, tc) == 0.0) continue;
            const ScreenPos pos{tr, tc};
            if (pos == *cell.designated || pos == cell.proper) continue;
            cell.noise_targets.push_back(pos);
          }
        }
      }
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

LossResult loss_and_grad(const FragmentBuffer& buf, const AdjustmentField& adj,
                         const TargetAssignment& assign, const SdmOptions& opts,
                         bool log_cells) {
  opts.validate();
  LossResult out;

  for (const CellAssignment& cell : assign.cells) {
    // Matched cells are a fixed point: neither their designated pull nor
    // their noise terms act.
    if (!cell.designated || cell.matched) {
      if (log_cells) out.grad.per_cell.push_back({cell.cell, 0.0, 0.0, 0.0});
      continue;
    }
    const Point3 p = buf.at(cell.cell.row, cell.cell.col).coord;

    double cell_loss = 0.0, cell_gx = 0.0, cell_gy = 0.0;
    auto add_term = [&](const ScreenPos& target, bool noise) {
      const Point3 t = adj.at_offset(cell.cell.row, cell.cell.col,
                                     target.row - cell.cell.row,
                                     target.col - cell.cell.col);
      const double dx = p.x - t.x, dy = p.y - t.y, dz = p.z - t.z;
      double gx = 0.0, gy = 0.0;
      if (opts.metric == LossMetric::L1) {
        cell_loss += std::abs(dx) + std::abs(dy) + std::abs(dz);
        gx = sign(dx);
        gy = sign(dy);
      } else {
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        cell_loss += d;
        if (d > 0.0) {
          gx = dx / d;
          gy = dy / d;
        }
      }
      cell_gx += gx;
      cell_gy += gy;
      if (noise) {
        out.grad.noise_gx += gx;
        out.grad.noise_gy += gy;
      }
    };

    add_term(*cell.designated, false);
    for (const ScreenPos& pos : cell.noise_targets) add_term(pos, true);

    out.loss += cell_loss;
    out.grad.gx += cell_gx;
    out.grad.gy += cell_gy;
    if (log_cells) out.grad.per_cell.push_back({cell.cell, cell_loss, cell_gx, cell_gy});
  }
  return out;
}

SdmPassResult sdm_pass(const FragmentBuffer& buf, const Grid& target_mask,
                       const Intrinsics& k, const SdmOptions& opts, bool log_cells) {
  opts.validate();
  if (buf.height() != k.height || buf.width() != k.width)
    throw std::invalid_argument("sdm_pass: buffer shape differs from intrinsics");

  SdmPassResult out;
  AdjustmentField adj = build_adjustments(buf, k, opts.kernel_h, opts.kernel_w);
  out.forward = forward_hard(buf, k, adj);
  // The backward works on the forward output, so it needs that buffer's
  // own adjustment field.
  AdjustmentField out_adj =
      build_adjustments(out.forward.buffer, k, opts.kernel_h, opts.kernel_w);
  out.assignment = assign_targets(out.forward, out_adj, target_mask, opts);
  out.loss = loss_and_grad(out.forward.buffer, out_adj, out.assignment, opts, log_cells);
  return out;
}

}  // namespace sdm
