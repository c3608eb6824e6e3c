#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "legplan/geometry.hpp"
#include "legplan/maps.hpp"

namespace legplan {

constexpr int kLegCount = 4;

/// Leg order used everywhere: front-left, front-right, rear-left, rear-right.
enum class Leg { kFrontLeft = 0, kFrontRight = 1, kRearLeft = 2, kRearRight = 3 };

std::string leg_name(int leg);
inline bool is_left_leg(int leg) { return leg == 0 || leg == 2; }
/// +1 for left legs, -1 for right legs.
inline double lateral_sign(int leg) { return is_left_leg(leg) ? 1.0 : -1.0; }

struct JointLimits {
  double min = 0.0;
  double max = 0.0;

  bool contains(double angle) const { return angle >= min && angle <= max; }
  friend bool operator==(const JointLimits&, const JointLimits&) = default;
};

/// Geometry of the quadruped. Each leg is an abduction joint (about the trunk
/// x axis), a lateral link of length l_abd, a hip pitch joint, a thigh, a knee
/// and a shank. Joint angles are ordered (abduction, hip, knee).
struct RobotConfig {
  Vec3 trunk_half_extents{0.20, 0.10, 0.05};
  /// Hip joint positions in the trunk frame, FL, FR, RL, RR.
  std::array<Vec3, kLegCount> hip_offsets{
      Vec3{0.15, 0.06, -0.05}, Vec3{0.15, -0.06, -0.05}, Vec3{-0.15, 0.06, -0.05},
      Vec3{-0.15, -0.06, -0.05}};
  double l_abd = 0.04;
  double l_thigh = 0.15;
  double l_shank = 0.15;
  /// Shared by all legs, ordered (abduction, hip, knee).
  std::array<JointLimits, 3> joint_limits{
      JointLimits{-0.8, 0.8}, JointLimits{-2.0, 2.0}, JointLimits{0.0, 2.7}};
  double foot_contact_tol = 0.025;
  /// Radius of the thigh and shank collision capsules.
  double link_radius = 0.015;
  /// Subtracted from the straight-leg reach to get the standing height.
  double standing_margin = 0.02;

  /// Defaults with foot_contact_tol tied to the voxel resolution.
  static RobotConfig defaults_for_resolution(double resolution);
  /// Throws std::invalid_argument on non-positive lengths, empty limit ranges
  /// or asymmetric hip offsets.
  void validate() const;

  friend bool operator==(const RobotConfig&, const RobotConfig&) = default;
};

using LegAngles = Vec3;
using JointMatrix = Eigen::Matrix<double, kLegCount, 3>;

/// The 18 degrees of freedom of the robot.
struct RobotState {
  Vec3 q_p = Vec3::Zero();  ///< trunk position, m
  Vec3 q_r = Vec3::Zero();  ///< trunk roll, pitch, yaw, rad
  JointMatrix theta = JointMatrix::Zero();

  Mat3 rotation() const { return rotation_from_rpy(q_r); }
  /// (q_p, q_r, theta of FL, FR, RL, RR).
  Eigen::Matrix<double, 18, 1> as_vector() const;
  static RobotState from_vector(const Eigen::Matrix<double, 18, 1>& v);

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

/// Paw position relative to its hip joint, expressed in the trunk frame.
struct LegTarget {
  Vec3 r = Vec3::Zero();
};

/// Joint positions of one leg relative to its hip, in the trunk frame.
struct LegPoints {
  Vec3 thigh_start;  ///< end of the abduction link
  Vec3 knee;
  Vec3 paw;
};

LegPoints leg_points(const LegAngles& angles, const RobotConfig& config, int leg);
LegTarget leg_fk(const LegAngles& angles, const RobotConfig& config, int leg);

enum class IkFailure { kNone, kUnreachable, kJointLimit };
std::string to_string(IkFailure failure);

struct LegIkResult {
  std::optional<LegAngles> angles;
  IkFailure failure = IkFailure::kNone;

  bool ok() const { return angles.has_value(); }
};

/// Analytic IK with the knee-backward branch (knee angle in [0, pi]).
LegIkResult leg_ik(const LegTarget& target, const RobotConfig& config, int leg);

struct StateSolveResult {
  std::optional<RobotState> state;
  int failed_leg = -1;
  IkFailure failure = IkFailure::kNone;

  bool ok() const { return state.has_value(); }
};

using PawPositions = std::array<Vec3, kLegCount>;

StateSolveResult solve_state(const Vec3& q_p, const Vec3& q_r, const PawPositions& paws_world,
                             const RobotConfig& config);

/// World position of every hip joint for the given trunk pose.
PawPositions hip_positions(const Vec3& q_p, const Mat3& rotation, const RobotConfig& config);
/// World paw positions reached by the state's joint angles.
PawPositions paw_positions(const RobotState& state, const RobotConfig& config);

struct Contact {
  Vec3 point;   ///< p_k, on the voxel surface
  Vec3 normal;  ///< n_k, unit, from the voxel toward the body
};

/// Trunk box plus thigh/shank capsules against occupied voxels. Contacts of
/// the shank with voxels just under its paw are foot contacts, not collisions.
std::vector<Contact> check_collisions(const RobotState& state, const VoxelMap& map,
                                      const RobotConfig& config);
/// Trunk box only; used when the legs have no joint solution.
std::vector<Contact> check_trunk_collisions(const Vec3& q_p, const Mat3& rotation,
                                            const VoxelMap& map, const RobotConfig& config);

/// Number of paws resting within foot_contact_tol of the surface under them.
int support_count(const RobotState& state, const VoxelMap& map, const RobotConfig& config);
int support_count(const PawPositions& paws, const VoxelMap& map, const RobotConfig& config);

/// Largest hip-to-ground height for a level stance, i.e. the trunk-bottom
/// clearance h_th when hips sit on the trunk's bottom face.
double standing_height_max(const RobotConfig& config);

/// Level stance with paws straight under the lateral links at depth `height`
/// below the hips; used for standing-height checks and start states.
PawPositions level_stance(const Vec3& q_p, double yaw, double height, const RobotConfig& config);

}  // namespace legplan
