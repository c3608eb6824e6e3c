#include "legplan/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace legplan {

namespace {

constexpr double kGeomEps = 1e-9;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

Vec3 rotate_x(double a, const Vec3& v) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  return {v.x(), c * v.y() - s * v.z(), s * v.y() + c * v.z()};
}

template <typename Fn>
void for_each_occupied_in(const VoxelMap& map, const Aabb& region, Fn&& fn) {
  const DiscreteState lo = map.discretize(region.min);
  const DiscreteState hi = map.discretize(region.max);
  const auto& b = map.bounds();
  for (int x = std::max(lo.x, 0); x <= std::min(hi.x, b.nx - 1); ++x) {
    for (int y = std::max(lo.y, 0); y <= std::min(hi.y, b.ny - 1); ++y) {
      for (int z = std::max(lo.z, 0); z <= std::min(hi.z, b.nz - 1); ++z) {
        const DiscreteState q{x, y, z};
        if (map.occupied(q)) {
          fn(q);
        }
      }
    }
  }
}

}  // namespace

std::string leg_name(int leg) {
  static const char* kNames[] = {"FL", "FR", "RL", "RR"};
  return leg >= 0 && leg < kLegCount ? kNames[leg] : "?";
}

RobotConfig RobotConfig::defaults_for_resolution(double resolution) {
  RobotConfig config;
  config.foot_contact_tol = resolution / 2.0;
  return config;
}

void RobotConfig::validate() const {
  if ((trunk_half_extents.array() <= 0.0).any()) {
    throw std::invalid_argument("trunk half extents must be positive");
  }
  if (!(l_abd > 0.0 && l_thigh > 0.0 && l_shank > 0.0)) {
    throw std::invalid_argument("link lengths must be positive");
  }
  for (const auto& lim : joint_limits) {
    if (!(lim.min < lim.max)) {
      throw std::invalid_argument("joint limit min must be below max");
    }
  }
  if (!(foot_contact_tol > 0.0) || !(link_radius >= 0.0) || !(standing_margin >= 0.0)) {
    throw std::invalid_argument("tolerances must be non-negative");
  }
  const auto mirrored = [](const Vec3& v) { return Vec3(v.x(), -v.y(), v.z()); };
  if ((hip_offsets[0] - mirrored(hip_offsets[1])).norm() > 1e-12 ||
      (hip_offsets[2] - mirrored(hip_offsets[3])).norm() > 1e-12) {
    throw std::invalid_argument("hip offsets must be left/right symmetric");
  }
}

Eigen::Matrix<double, 18, 1> RobotState::as_vector() const {
  Eigen::Matrix<double, 18, 1> v;
  v.head<3>() = q_p;
  v.segment<3>(3) = q_r;
  for (int leg = 0; leg < kLegCount; ++leg) {
    v.segment<3>(6 + 3 * leg) = theta.row(leg).transpose();
  }
  return v;
}

RobotState RobotState::from_vector(const Eigen::Matrix<double, 18, 1>& v) {
  RobotState s;
  s.q_p = v.head<3>();
  s.q_r = v.segment<3>(3);
  for (int leg = 0; leg < kLegCount; ++leg) {
    s.theta.row(leg) = v.segment<3>(6 + 3 * leg).transpose();
  }
  return s;
}

LegPoints leg_points(const LegAngles& angles, const RobotConfig& config, int leg) {
  const double side = lateral_sign(leg) * config.l_abd;
  const double hip = angles[1];
  const double knee = angles[2];
  const Vec3 knee_plane{config.l_thigh * std::sin(hip), side, -config.l_thigh * std::cos(hip)};
  const Vec3 paw_plane = knee_plane + Vec3{config.l_shank * std::sin(hip + knee), 0.0,
                                           -config.l_shank * std::cos(hip + knee)};
  return {rotate_x(angles[0], Vec3{0.0, side, 0.0}), rotate_x(angles[0], knee_plane),
          rotate_x(angles[0], paw_plane)};
}

LegTarget leg_fk(const LegAngles& angles, const RobotConfig& config, int leg) {
  return {leg_points(angles, config, leg).paw};
}

std::string to_string(IkFailure failure) {
  switch (failure) {
    case IkFailure::kNone:
      return "none";
    case IkFailure::kUnreachable:
      return "unreachable";
    case IkFailure::kJointLimit:
      return "joint_limit";
  }
  return "none";
}

LegIkResult leg_ik(const LegTarget& target, const RobotConfig& config, int leg) {
  const Vec3& r = target.r;
  const double side = lateral_sign(leg) * config.l_abd;

  // Frontal plane: the lateral link plus the projected leg length L.
  const double frontal_sq = r.y() * r.y() + r.z() * r.z();
  const double l_abd_sq = config.l_abd * config.l_abd;
  if (frontal_sq < l_abd_sq) {
    return {std::nullopt, IkFailure::kUnreachable};
  }
  const double leg_len = std::sqrt(frontal_sq - l_abd_sq);

  // Sagittal two-link subproblem.
  const double l1 = config.l_thigh;
  const double l2 = config.l_shank;
  double cos_knee = (r.x() * r.x() + leg_len * leg_len - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (cos_knee > 1.0 + 1e-12 || cos_knee < -1.0 - 1e-12) {
    return {std::nullopt, IkFailure::kUnreachable};
  }
  cos_knee = std::clamp(cos_knee, -1.0, 1.0);
  const double knee = std::acos(cos_knee);
  const double knee_offset = std::atan2(l2 * std::sin(knee), l1 + l2 * std::cos(knee));

  // The leg plane can hold the paw below the hip (tried first) or above it.
  for (const double depth : {leg_len, -leg_len}) {
    const double abduction = wrap_angle(std::atan2(r.z(), r.y()) - std::atan2(-depth, side));
    const double hip = wrap_angle(std::atan2(r.x(), depth) - knee_offset);
    const LegAngles angles{abduction, hip, knee};
    bool inside = true;
    for (int j = 0; j < 3; ++j) {
      inside = inside && config.joint_limits[j].contains(angles[j]);
    }
    if (inside) {
      return {angles, IkFailure::kNone};
    }
    if (leg_len == 0.0) {
      break;
    }
  }
  return {std::nullopt, IkFailure::kJointLimit};
}

PawPositions hip_positions(const Vec3& q_p, const Mat3& rotation, const RobotConfig& config) {
  PawPositions hips;
  for (int leg = 0; leg < kLegCount; ++leg) {
    hips[leg] = q_p + rotation * config.hip_offsets[leg];
  }
  return hips;
}

StateSolveResult solve_state(const Vec3& q_p, const Vec3& q_r, const PawPositions& paws_world,
                             const RobotConfig& config) {
  RobotState state;
  state.q_p = q_p;
  state.q_r = q_r;
  const Mat3 rot = rotation_from_rpy(q_r);
  const PawPositions hips = hip_positions(q_p, rot, config);
  for (int leg = 0; leg < kLegCount; ++leg) {
    const LegIkResult ik = leg_ik({rot.transpose() * (paws_world[leg] - hips[leg])}, config, leg);
    if (!ik.ok()) {
      return {std::nullopt, leg, ik.failure};
    }
    state.theta.row(leg) = ik.angles->transpose();
  }
  return {state, -1, IkFailure::kNone};
}

PawPositions paw_positions(const RobotState& state, const RobotConfig& config) {
  const Mat3 rot = state.rotation();
  const PawPositions hips = hip_positions(state.q_p, rot, config);
  PawPositions paws;
  for (int leg = 0; leg < kLegCount; ++leg) {
    paws[leg] = hips[leg] + rot * leg_fk(state.theta.row(leg).transpose(), config, leg).r;
  }
  return paws;
}

std::vector<Contact> check_trunk_collisions(const Vec3& q_p, const Mat3& rotation,
                                            const VoxelMap& map, const RobotConfig& config) {
  std::vector<Contact> contacts;
  const Obb trunk{q_p, rotation, config.trunk_half_extents};
  for_each_occupied_in(map, trunk.bounds(), [&](const DiscreteState& q) {
    const Aabb cell = map.cell_box(q);
    if (!obb_intersects_aabb(trunk, cell)) {
      return;
    }
    const Vec3 p = cell.clamp(q_p);
    const Vec3 gap = q_p - p;
    const double len = gap.norm();
    contacts.push_back({p, len > 1e-12 ? Vec3(gap / len) : nearest_face_normal(cell, p)});
  });
  return contacts;
}

std::vector<Contact> check_collisions(const RobotState& state, const VoxelMap& map,
                                      const RobotConfig& config) {
  const Mat3 rot = state.rotation();
  std::vector<Contact> contacts = check_trunk_collisions(state.q_p, rot, map, config);

  const double radius = config.link_radius;
  const PawPositions hips = hip_positions(state.q_p, rot, config);
  for (int leg = 0; leg < kLegCount; ++leg) {
    const LegPoints pts = leg_points(state.theta.row(leg).transpose(), config, leg);
    const Vec3 start = hips[leg] + rot * pts.thigh_start;
    const Vec3 knee = hips[leg] + rot * pts.knee;
    const Vec3 paw = hips[leg] + rot * pts.paw;

    auto capsule = [&](const Vec3& a, const Vec3& b, bool ends_at_paw) {
      const Aabb region{a.cwiseMin(b) - Vec3::Constant(radius),
                        a.cwiseMax(b) + Vec3::Constant(radius)};
      for_each_occupied_in(map, region, [&](const DiscreteState& q) {
        const Aabb cell = map.cell_box(q);
        const SegmentBoxClosest c = closest_segment_aabb(a, b, cell);
        if (c.distance >= radius - kGeomEps) {
          return;
        }
        if (ends_at_paw && (c.on_box - paw).norm() <= radius + config.foot_contact_tol &&
            c.on_box.z() <= paw.z() + config.foot_contact_tol) {
          return;
        }
        contacts.push_back({c.on_box, c.distance > 1e-12
                                          ? Vec3((c.on_segment - c.on_box) / c.distance)
                                          : nearest_face_normal(cell, c.on_segment)});
      });
    };
    capsule(start, knee, false);
    capsule(knee, paw, true);
  }
  return contacts;
}

int support_count(const PawPositions& paws, const VoxelMap& map, const RobotConfig& config) {
  int count = 0;
  for (const Vec3& paw : paws) {
    const auto surface = map.surface_below(paw);
    if (surface && std::abs(paw.z() - *surface) <= config.foot_contact_tol) {
      ++count;
    }
  }
  return count;
}

int support_count(const RobotState& state, const VoxelMap& map, const RobotConfig& config) {
  return support_count(paw_positions(state, config), map, config);
}

PawPositions level_stance(const Vec3& q_p, double yaw, double height, const RobotConfig& config) {
  const Mat3 rot = rotation_about_z(yaw);
  const PawPositions hips = hip_positions(q_p, rot, config);
  PawPositions paws;
  for (int leg = 0; leg < kLegCount; ++leg) {
    paws[leg] = hips[leg] + rot * Vec3(0.0, lateral_sign(leg) * config.l_abd, -height);
  }
  return paws;
}

double standing_height_max(const RobotConfig& config) {
  auto feasible = [&](double h) {
    return solve_state(Vec3::Zero(), Vec3::Zero(), level_stance(Vec3::Zero(), 0.0, h, config),
                       config)
        .ok();
  };
  const double reach = config.l_thigh + config.l_shank;
  const double candidate = reach - config.standing_margin;
  if (feasible(candidate)) {
    return candidate;
  }
  double lo = 0.5 * reach;
  double hi = candidate;
  if (!feasible(lo)) {
    return 0.0;
  }
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace legplan
