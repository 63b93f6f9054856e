#include "sdm/representation.hpp"

#include <limits>

namespace sdm {

Grid FragmentBuffer::values() const {
  Grid g(height_, width_);
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      if (at(r, c).active) g.at(r, c) = at(r, c).info;
  return g;
}

std::vector<Fragment> FragmentBuffer::decode() const {
  std::vector<Fragment> out;
  out.reserve(static_cast<std::size_t>(active_count()));
  for (int r = 0; r < height_; ++r)
    for (int c = 0; c < width_; ++c)
      if (at(r, c).active) out.push_back({at(r, c).coord, at(r, c).info});
  return out;
}

double rmin(std::span<const Fragment> frags) {
  double z_min = std::numeric_limits<double>::infinity();
  double best = 0.0;
  bool seen = false;
  for (const Fragment& f : frags) {
    if (!(f.coord.z > 0.0)) continue;
    if (!seen || f.coord.z < z_min) {
      z_min = f.coord.z;
      best = f.info;
      seen = true;
    } else if (f.coord.z == z_min && f.info < best) {
      best = f.info;
    }
  }
  return seen ? best : 0.0;
}

FragmentBuffer render_buffer(std::span<const Fragment> frags, const Intrinsics& k) {
  k.validate();
  FragmentBuffer buf(k.height, k.width);
  for (const Fragment& f : frags) {
    if (!(f.coord.z > 0.0)) continue;
    ScreenPos pos = floor_pos(project(f.coord, k));
    if (!on_screen(pos, k)) continue;
    FragmentBuffer::Cell& cell = buf.at(pos.row, pos.col);
    if (fragment_wins(f, cell)) {
      cell.active = true;
      cell.coord = f.coord;
      cell.info = f.info;
    }
  }
  return buf;
}

Grid render(std::span<const Fragment> frags, const Intrinsics& k) {
  return render_buffer(frags, k).values();
}

bool is_proper(const FragmentBuffer& buf, const Intrinsics& k) {
  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      const FragmentBuffer::Cell& cell = buf.at(r, c);
      if (!cell.active) continue;
      if (!(cell.coord.z > 0.0)) return false;
      ScreenPos pos = floor_pos(project(cell.coord, k));
      if (pos.row != r || pos.col != c) return false;
    }
  }
  return true;
}

FragmentBuffer add_theta(FragmentBuffer buf, const Translation2& t) {
  for (int r = 0; r < buf.height(); ++r) {
    for (int c = 0; c < buf.width(); ++c) {
      FragmentBuffer::Cell& cell = buf.at(r, c);
      if (cell.active) cell.coord = cell.coord + t;
    }
  }
  return buf;
}

Grid binary_mask(const Grid& rep) {
  Grid mask(rep.height(), rep.width());
  for (int r = 0; r < rep.height(); ++r)
    for (int c = 0; c < rep.width(); ++c)
      if (rep.at(r, c) != 0.0) mask.at(r, c) = 1.0;
  return mask;
}

}  // namespace sdm
