#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "legplan/geometry.hpp"
#include "legplan/global_planner.hpp"
#include "legplan/kinematics.hpp"
#include "legplan/maps.hpp"
#include "legplan/params.hpp"
#include "legplan/world.hpp"

namespace legplan {

/// Current trunk frame O_i and the frame O_g the planner steers toward.
struct Origins {
  Mat3 current;
  Mat3 target;
};

/// O_g: first axis along delta_p, third axis in span(delta_p, up). When
/// delta_p is (numerically) vertical the target keeps the current yaw and is
/// level; when delta_p vanishes the target is the current frame.
Mat3 target_frame(const Mat3& current, const Vec3& delta_p);
Origins make_origins(const Mat3& current, const Vec3& delta_p);

/// delta_p = g_i + d - q_p.
Vec3 compute_delta_p(const Vec3& g_i, const Vec3& d, const Vec3& q_p);

/// Roll, pitch and yaw of O_i^T * O_g, extracted with the atan2 formulas of
/// the Z-Y-X convention. Composing R(result) onto O_i yields O_g.
Vec3 rotation_delta_between(const Mat3& current, const Mat3& target);
Vec3 compute_rotation_delta(const Mat3& current, const Vec3& delta_p);

struct ClampedDeltas {
  Vec3 delta_p;
  Vec3 delta_r;
};
ClampedDeltas clamp_deltas(const Vec3& delta_p, const Vec3& delta_r,
                           const PropagationParams& params);

/// Everything the local planner carries between steps.
struct LocalState {
  RobotState robot;
  /// Commanded paw positions in the world frame; theta solves for these.
  PawPositions paws{};
  std::array<double, kLegCount> accumulated_swing{};
  std::optional<int> swing_leg;
  Vec3 accumulated_d = Vec3::Zero();
  int waypoint_index = 0;
};

/// Start state standing level at `position` with paws dropped onto the
/// surface below the neutral footholds. Joint angles are solved when possible.
LocalState initial_state(const Vec3& position, double yaw, const VoxelMap& map,
                         const RobotConfig& config);

/// Applies the step transform: translate by delta_p, rotate by R(delta_r) in
/// the body frame. Paws keep their world positions; each leg's swing
/// accumulator grows by the distance its hip moved.
LocalState propagate(const LocalState& state, const Vec3& delta_p, const Vec3& delta_r,
                     const RobotConfig& config);

/// Leg with the largest accumulated hip travel, if above `threshold`; ties go
/// to the lower leg index.
std::optional<int> select_swing_leg(const LocalState& state, double threshold);

/// Replants the leg that was swinging, then lifts the next one if any is due.
/// `motion` is the trunk translation of this step.
void advance_gait(LocalState& state, const Vec3& motion, const VoxelMap& map,
                  const RobotConfig& config, const PropagationParams& params);

struct Validation {
  bool valid = false;
  std::vector<Contact> collisions;
  bool ik_failed = false;
  int failed_leg = -1;
  int support = 0;
};

/// Valid iff collision free, IK solvable for all four paws, and at least three
/// paws on the surface. On success the candidate's joint angles are filled in.
Validation validate(LocalState& candidate, const VoxelMap& map, const RobotConfig& config);

/// Independent check of a finished state: joint angles within limits, no
/// collisions, support >= 3.
bool state_is_valid(const RobotState& state, const VoxelMap& map, const RobotConfig& config);

/// Mean of (q_next - p_k + n_k) over contacts, or -up * h_th without contacts.
Vec3 compute_repulsive(const Vec3& q_next, const std::vector<Contact>& collisions, double h_th);

struct WeightUpdate {
  DiscreteState state;
  std::optional<Action> action;  ///< set for action-weight updates
  double delta = 0.0;
};

enum class LocalOutcome { kSuccess, kReplanRequested, kStepBudgetExceeded };
std::string to_string(LocalOutcome outcome);

struct LocalResult {
  LocalOutcome outcome = LocalOutcome::kSuccess;
  /// S. On a replan request this is the prefix up to the rewind waypoint.
  std::vector<LocalState> states;
  std::vector<WeightUpdate> feedback;
  bool replan_requested = false;
  int request_count = 0;
  /// Waypoint that could not be reached and the one the planner backed off to.
  int blocked_index = -1;
  int rewind_index = -1;
  /// Accumulated repulsive vector at the blocked waypoint.
  Vec3 blocking_d = Vec3::Zero();
  int steps = 0;
};

/// Follows G_D with clamped steps, validating each candidate. Stops with
/// success once `goal` is reached after the last waypoint, or with a replan
/// request the first time the accumulated repulsion moves a waypoint into a
/// different cell.
LocalResult refine(const GlobalPath& path, const LocalState& start, const Pose& goal,
                   const VoxelMap& map, const RobotConfig& config,
                   const PropagationParams& params, double h_th);

/// One line per state: 18 numbers then `valid` or `invalid`.
void write_state_sequence(std::ostream& out, const std::vector<RobotState>& states,
                          const VoxelMap& map, const RobotConfig& config);

}  // namespace legplan
