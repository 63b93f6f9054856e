#pragma once

#include <cmath>
#include <stdexcept>

namespace sdm {

/// A point in scene coordinates (meters). z is depth along the optical axis.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

/// Global XY translation applied to a point set; the quantity the solver
/// estimates. x shifts scene x (image columns), y shifts scene y (rows).
struct Translation2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Translation2&, const Translation2&) = default;
};

inline Point3 operator+(const Point3& p, const Translation2& t) {
  return {p.x + t.x, p.y + t.y, p.z};
}

/// Pinhole camera without extrinsics. Screen rows are driven by y, columns
/// by x. (ou, ov) is the principal point as (column, row).
struct Intrinsics {
  double fu = 160.0;
  double fv = 160.0;
  double ou = 128.0;
  double ov = 64.0;
  int height = 128;
  int width = 256;

  void validate() const {
    if (!(fu > 0.0) || !(fv > 0.0))
      throw std::invalid_argument("Intrinsics: focal lengths must be positive");
    if (height < 1 || width < 1)
      throw std::invalid_argument("Intrinsics: screen must be at least 1x1");
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// Real-valued image position, (row, col).
struct PixelCoord {
  double row = 0.0;
  double col = 0.0;
};

/// Integer cell index, (row, col).
struct ScreenPos {
  int row = 0;
  int col = 0;

  friend bool operator==(const ScreenPos&, const ScreenPos&) = default;
};

/// Projects p onto the image plane. Requires p.z > 0.
PixelCoord project(const Point3& p, const Intrinsics& k);

/// Componentwise floor of a real image position.
ScreenPos floor_pos(const PixelCoord& rc);

/// Inverse of project at a fixed depth z > 0.
Point3 unproject_at_depth(double row, double col, double z, const Intrinsics& k);

inline bool on_screen(const ScreenPos& p, const Intrinsics& k) {
  return p.row >= 0 && p.row < k.height && p.col >= 0 && p.col < k.width;
}

}  // namespace sdm
