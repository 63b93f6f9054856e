#pragma once

#include <span>
#include <vector>

#include "sdm/geometry.hpp"

namespace sdm {

/// A 3D point paired with a positive rendering-information value; the unit
/// the renderer aggregates.
struct Fragment {
  Point3 coord;
  double info = 1.0;
};

/// An H x W grid of rendering-information values. 0 means inactive; active
/// cells are strictly positive.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, double fill = 0.0)
      : height_(height), width_(width),
        cells_(static_cast<std::size_t>(height) * width, fill) {
    if (height < 1 || width < 1)
      throw std::invalid_argument("Grid: dimensions must be at least 1x1");
  }

  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int r, int c) { return cells_[index(r, c)]; }
  double at(int r, int c) const { return cells_[index(r, c)]; }

  bool in_bounds(int r, int c) const {
    return r >= 0 && r < height_ && c >= 0 && c < width_;
  }

  std::span<const double> cells() const { return cells_; }
  std::span<double> cells() { return cells_; }

  int active_count() const {
    int n = 0;
    for (double v : cells_) n += (v != 0.0);
    return n;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * width_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> cells_;
};

/// An H x W grid where each active cell stores the full coordinates of the
/// 3D point whose rendered fragment survived there, along with the
/// fragment's info value. Decoding a cell reads the stored coordinates, so
/// gradients with respect to a translation of the point set are trivial.
class FragmentBuffer {
 public:
  struct Cell {
    bool active = false;
    Point3 coord;
    double info = 0.0;
  };

  FragmentBuffer() = default;
  FragmentBuffer(int height, int width)
      : height_(height), width_(width),
        cells_(static_cast<std::size_t>(height) * width) {
    if (height < 1 || width < 1)
      throw std::invalid_argument("FragmentBuffer: dimensions must be at least 1x1");
  }

  int height() const { return height_; }
  int width() const { return width_; }

  Cell& at(int r, int c) { return cells_[index(r, c)]; }
  const Cell& at(int r, int c) const { return cells_[index(r, c)]; }

  bool in_bounds(int r, int c) const {
    return r >= 0 && r < height_ && c >= 0 && c < width_;
  }

  int active_count() const {
    int n = 0;
    for (const Cell& cell : cells_) n += cell.active;
    return n;
  }

  /// The info values as a plain grid (0 at inactive cells).
  Grid values() const;

  /// The surviving fragments, in row-major cell order.
  std::vector<Fragment> decode() const;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * width_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<Cell> cells_;
};

/// Minimum info value among the closest-to-camera visible fragments;
/// 0 on an empty set or when no fragment has z > 0.
double rmin(std::span<const Fragment> frags);

/// Whether fragment f displaces the current occupant of a cell.
/// Lexicographic (z, info, x, y): the minimum matches rmin and is
/// independent of the order fragments arrive in.
inline bool fragment_wins(const Fragment& f, const FragmentBuffer::Cell& occupant) {
  if (!occupant.active) return true;
  if (f.coord.z != occupant.coord.z) return f.coord.z < occupant.coord.z;
  if (f.info != occupant.info) return f.info < occupant.info;
  if (f.coord.x != occupant.coord.x) return f.coord.x < occupant.coord.x;
  return f.coord.y < occupant.coord.y;
}

/// Renders fragments into a grid: each cell aggregates, via rmin, the
/// fragments whose floored projection lands there. Fragments with z <= 0 or
/// projecting off-screen are dropped.
Grid render(std::span<const Fragment> frags, const Intrinsics& k);

/// Like render, but keeps the winning fragment's coordinates per cell.
/// Ties in (z, info) are broken by lexicographic (x, y) so the result does
/// not depend on input order.
FragmentBuffer render_buffer(std::span<const Fragment> frags, const Intrinsics& k);

/// True iff every active cell's stored point projects back into that cell.
bool is_proper(const FragmentBuffer& buf, const Intrinsics& k);

/// Shifts every active cell's stored coordinates by (t.x, t.y, 0). Cell
/// positions and activity are unchanged, so the result is generally not
/// proper.
FragmentBuffer add_theta(FragmentBuffer buf, const Translation2& t);

/// 1 where active, 0 elsewhere.
Grid binary_mask(const Grid& rep);

}  // namespace sdm
