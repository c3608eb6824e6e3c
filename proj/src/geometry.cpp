#include "legplan/geometry.hpp"

#include <algorithm>
#include <limits>

namespace legplan {

Mat3 rotation_from_rpy(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 rpy_from_rotation(const Mat3& r) {
  const double cos_pitch = std::hypot(r(2, 1), r(2, 2));
  const double pitch = std::atan2(-r(2, 0), cos_pitch);
  if (cos_pitch < 1e-12) {
    return {0.0, pitch, std::atan2(-r(0, 1), r(1, 1))};
  }
  return {std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0))};
}

Aabb Obb::bounds() const {
  const Vec3 reach = axes.cwiseAbs() * half_extents;
  return {center - reach, center + reach};
}

bool obb_intersects_aabb(const Obb& box, const Aabb& cell, double eps) {
  const Vec3 cell_half = cell.half_extents();
  const Vec3 offset = box.center - cell.center();

  auto overlaps_on = [&](const Vec3& axis_in) {
    const double n = axis_in.norm();
    if (n < 1e-12) {
      return true;
    }
    const Vec3 axis = axis_in / n;
    const double r_cell = cell_half.dot(axis.cwiseAbs());
    const double r_box = box.half_extents.dot((box.axes.transpose() * axis).cwiseAbs());
    return std::abs(offset.dot(axis)) < r_cell + r_box - eps;
  };

  for (int i = 0; i < 3; ++i) {
    if (!overlaps_on(Vec3::Unit(i)) || !overlaps_on(box.axes.col(i))) {
      return false;
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (!overlaps_on(Vec3::Unit(i).cross(box.axes.col(j)))) {
        return false;
      }
    }
  }
  return true;
}

SegmentBoxClosest closest_segment_aabb(const Vec3& a, const Vec3& b, const Aabb& box) {
  // Distance to a convex set along a segment is convex in the parameter.
  auto dist_at = [&](double t) {
    const Vec3 p = a + t * (b - a);
    return (p - box.clamp(p)).squaredNorm();
  };
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 0.0;
  double hi = 1.0;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = dist_at(x1);
  double f2 = dist_at(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-13; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = dist_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = dist_at(x2);
    }
  }
  double t = 0.5 * (lo + hi);
  for (double end : {0.0, 1.0}) {
    if (dist_at(end) < dist_at(t)) {
      t = end;
    }
  }
  const Vec3 on_segment = a + t * (b - a);
  const Vec3 on_box = box.clamp(on_segment);
  return {on_segment, on_box, (on_segment - on_box).norm()};
}

Vec3 nearest_face_normal(const Aabb& box, const Vec3& p) {
  Vec3 best = Vec3::UnitZ();
  double best_gap = std::numeric_limits<double>::infinity();
  // Fixed scan order makes ties deterministic; +z wins first.
  constexpr std::array<std::pair<int, int>, 6> kFaces = {
      {{2, 1}, {2, -1}, {0, 1}, {0, -1}, {1, 1}, {1, -1}}};
  for (const auto& [axis, sign] : kFaces) {
    const double gap = sign > 0 ? box.max[axis] - p[axis] : p[axis] - box.min[axis];
    if (gap < best_gap) {
      best_gap = gap;
      best = sign * Vec3::Unit(axis);
    }
  }
  return best;
}

}  // namespace legplan
