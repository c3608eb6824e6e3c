#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace legplan {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

/// World up axis. Gravity acts along -kUp.
inline Vec3 world_up() { return Vec3::UnitZ(); }

/// Z-Y-X rotation: R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rotation_from_rpy(const Vec3& rpy);

/// Inverse of rotation_from_rpy. Components of the result are (roll, pitch, yaw).
/// At gimbal lock (|pitch| = pi/2) roll is set to 0 and the fused angle is
/// assigned to yaw.
Vec3 rpy_from_rotation(const Mat3& r);

inline Mat3 rotation_about_z(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

/// Axis-aligned box given by its min and max corners.
struct Aabb {
  Vec3 min;
  Vec3 max;

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 half_extents() const { return 0.5 * (max - min); }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(min).cwiseMin(max); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// Oriented box: center, rotation (columns are the box axes in world frame)
/// and half extents along those axes.
struct Obb {
  Vec3 center;
  Mat3 axes;
  Vec3 half_extents;

  Aabb bounds() const;
};

/// Separating-axis test between an oriented box and an axis-aligned box.
/// Returns true only when the two solids overlap by more than `eps` along
/// every candidate axis; touching faces are not an intersection.
bool obb_intersects_aabb(const Obb& box, const Aabb& cell, double eps = 1e-9);

/// Closest point on segment [a, b] to the box, together with the closest
/// point on the box. Distance is zero when the segment enters the box.
struct SegmentBoxClosest {
  Vec3 on_segment;
  Vec3 on_box;
  double distance;
};
SegmentBoxClosest closest_segment_aabb(const Vec3& a, const Vec3& b, const Aabb& box);

/// Outward unit normal of the box face nearest to an interior point.
Vec3 nearest_face_normal(const Aabb& box, const Vec3& p);

}  // namespace legplan
