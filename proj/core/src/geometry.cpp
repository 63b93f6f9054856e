#include "sdm/geometry.hpp"

namespace sdm {

PixelCoord project(const Point3& p, const Intrinsics& k) {
  if (!(p.z > 0.0))
    throw std::domain_error("project: depth must be positive");
  return {k.fv * p.y / p.z + k.ov, k.fu * p.x / p.z + k.ou};
}

ScreenPos floor_pos(const PixelCoord& rc) {
  return {static_cast<int>(std::floor(rc.row)), static_cast<int>(std::floor(rc.col))};
}

Point3 unproject_at_depth(double row, double col, double z, const Intrinsics& k) {
  if (!(z > 0.0))
    throw std::domain_error("unproject_at_depth: depth must be positive");
  return {(col - k.ou) * z / k.fu, (row - k.ov) * z / k.fv, z};
}

}  // namespace sdm
