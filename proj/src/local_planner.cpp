#include "legplan/local_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace legplan {

Mat3 target_frame(const Mat3& current, const Vec3& delta_p) {
  const double len = delta_p.norm();
  if (len < 1e-12) {
    return current;
  }
  const Vec3 x_axis = delta_p / len;
  const Vec3 up = world_up();
  const Vec3 z_raw = up - up.dot(x_axis) * x_axis;
  if (z_raw.norm() < 1e-9) {
    return rotation_about_z(rpy_from_rotation(current).z());
  }
  const Vec3 z_axis = z_raw.normalized();
  Mat3 frame;
  frame.col(0) = x_axis;
  frame.col(1) = z_axis.cross(x_axis);
  frame.col(2) = z_axis;
  return frame;
}

Origins make_origins(const Mat3& current, const Vec3& delta_p) {
  return {current, target_frame(current, delta_p)};
}

Vec3 compute_delta_p(const Vec3& g_i, const Vec3& d, const Vec3& q_p) { return g_i + d - q_p; }

Vec3 rotation_delta_between(const Mat3& current, const Mat3& target) {
  const Mat3 r = current.transpose() * target;
  const double alpha = std::atan2(r(1, 0), r(0, 0));
  const double beta = std::atan2(-r(2, 0), std::hypot(r(2, 1), r(2, 2)));
  const double gamma = std::atan2(r(2, 1), r(2, 2));
  if (std::hypot(r(2, 1), r(2, 2)) < 1e-12) {
    // Gimbal lock: roll folded into yaw.
    return {0.0, beta, std::atan2(-r(0, 1), r(1, 1))};
  }
  return {gamma, beta, alpha};
}

Vec3 compute_rotation_delta(const Mat3& current, const Vec3& delta_p) {
  return rotation_delta_between(current, target_frame(current, delta_p));
}

ClampedDeltas clamp_deltas(const Vec3& delta_p, const Vec3& delta_r,
                           const PropagationParams& params) {
  auto clamp = [](const Vec3& v, double max_norm) -> Vec3 {
    const double n = v.norm();
    return n > max_norm ? Vec3(v * (max_norm / n)) : v;
  };
  return {clamp(delta_p, params.delta_p_max), clamp(delta_r, params.delta_r_max)};
}

namespace {

Vec3 neutral_foothold(const Vec3& hip, const Mat3& rotation, int leg, const RobotConfig& config) {
  return hip + rotation * Vec3(0.0, lateral_sign(leg) * config.l_abd, 0.0);
}

// Drops a point onto the surface under it, searching from hip height.
Vec3 onto_surface(const Vec3& xy, double hip_z, const VoxelMap& map, const RobotConfig& config) {
  const auto surface = map.surface_below({xy.x(), xy.y(), hip_z});
  return {xy.x(), xy.y(), surface ? *surface : hip_z - (config.l_thigh + config.l_shank)};
}

}  // namespace

LocalState initial_state(const Vec3& position, double yaw, const VoxelMap& map,
                         const RobotConfig& config) {
  LocalState s;
  s.robot.q_p = position;
  s.robot.q_r = {0.0, 0.0, yaw};
  const Mat3 rot = s.robot.rotation();
  const PawPositions hips = hip_positions(position, rot, config);
  for (int leg = 0; leg < kLegCount; ++leg) {
    s.paws[leg] = onto_surface(neutral_foothold(hips[leg], rot, leg, config), hips[leg].z(), map,
                               config);
  }
  if (const auto solved = solve_state(s.robot.q_p, s.robot.q_r, s.paws, config); solved.ok()) {
    s.robot = *solved.state;
  }
  return s;
}

LocalState propagate(const LocalState& state, const Vec3& delta_p, const Vec3& delta_r,
                     const RobotConfig& config) {
  LocalState next = state;
  const Mat3 rot = state.robot.rotation();
  const Mat3 next_rot = rot * rotation_from_rpy(delta_r);
  next.robot.q_p = state.robot.q_p + delta_p;
  next.robot.q_r = rpy_from_rotation(next_rot);
  const PawPositions before = hip_positions(state.robot.q_p, rot, config);
  const PawPositions after = hip_positions(next.robot.q_p, next_rot, config);
  for (int leg = 0; leg < kLegCount; ++leg) {
    next.accumulated_swing[leg] += (after[leg] - before[leg]).norm();
  }
  return next;
}

std::optional<int> select_swing_leg(const LocalState& state, double threshold) {
  std::optional<int> best;
  double best_value = threshold;
  for (int leg = 0; leg < kLegCount; ++leg) {
    if (state.accumulated_swing[leg] > best_value) {
      best = leg;
      best_value = state.accumulated_swing[leg];
    }
  }
  return best;
}

void advance_gait(LocalState& state, const Vec3& motion, const VoxelMap& map,
                  const RobotConfig& config, const PropagationParams& params) {
  const Mat3 rot = state.robot.rotation();
  const PawPositions hips = hip_positions(state.robot.q_p, rot, config);

  Vec3 heading(motion.x(), motion.y(), 0.0);
  if (heading.norm() < 1e-9) {
    heading = Vec3(rot(0, 0), rot(1, 0), 0.0);
  }
  heading = heading.norm() > 1e-12 ? Vec3(heading.normalized()) : Vec3::Zero();

  const Vec3 side = world_up().cross(heading);
  // Nominal foothold, nudged along the heading until it is clear of edges.
  auto foothold = [&](int leg) {
    const Vec3 base = neutral_foothold(hips[leg], rot, leg, config) + params.swing_lead * heading;
    const double hip_z = hips[leg].z();
    auto flat = [&](const Vec3& p) {
      const auto h = map.surface_below({p.x(), p.y(), hip_z});
      if (!h) {
        return false;
      }
      for (const Vec3& off : {heading, Vec3(-heading), side, Vec3(-side)}) {
        const Vec3 q = p + params.edge_margin * off;
        const auto hq = map.surface_below({q.x(), q.y(), hip_z});
        if (!hq || std::abs(*hq - *h) > 1e-9) {
          return false;
        }
      }
      return true;
    };
    const double stride = 0.5 * map.resolution();
    for (int k = 0; k <= 4; ++k) {
      for (const double sign : {1.0, -1.0}) {
        const Vec3 p = base + sign * k * stride * heading;
        if (flat(p)) {
          return onto_surface(p, hip_z, map, config);
        }
        if (k == 0) {
          break;
        }
      }
    }
    return onto_surface(base, hip_z, map, config);
  };

  if (state.swing_leg) {
    const int leg = *state.swing_leg;
    state.paws[leg] = foothold(leg);
    state.accumulated_swing[leg] = 0.0;
    state.swing_leg.reset();
  }
  if (const auto leg = select_swing_leg(state, params.swing_trigger)) {
    state.paws[*leg] = foothold(*leg) + Vec3(0.0, 0.0, params.step_clearance);
    state.swing_leg = leg;
  }
}

Validation validate(LocalState& candidate, const VoxelMap& map, const RobotConfig& config) {
  Validation v;
  const StateSolveResult solved =
      solve_state(candidate.robot.q_p, candidate.robot.q_r, candidate.paws, config);
  if (!solved.ok()) {
    v.ik_failed = true;
    v.failed_leg = solved.failed_leg;
    v.collisions =
        check_trunk_collisions(candidate.robot.q_p, candidate.robot.rotation(), map, config);
    v.support = support_count(candidate.paws, map, config);
    return v;
  }
  candidate.robot = *solved.state;
  v.collisions = check_collisions(candidate.robot, map, config);
  v.support = support_count(candidate.robot, map, config);
  v.valid = v.collisions.empty() && v.support >= 3;
  return v;
}

bool state_is_valid(const RobotState& state, const VoxelMap& map, const RobotConfig& config) {
  for (int leg = 0; leg < kLegCount; ++leg) {
    for (int j = 0; j < 3; ++j) {
      if (!config.joint_limits[j].contains(state.theta(leg, j))) {
        return false;
      }
    }
  }
  return check_collisions(state, map, config).empty() && support_count(state, map, config) >= 3;
}

Vec3 compute_repulsive(const Vec3& q_next, const std::vector<Contact>& collisions, double h_th) {
  if (collisions.empty()) {
    return -world_up() * h_th;
  }
  Vec3 sum = Vec3::Zero();
  for (const Contact& c : collisions) {
    sum += q_next - c.point + c.normal;
  }
  return sum / static_cast<double>(collisions.size());
}

std::string to_string(LocalOutcome outcome) {
  switch (outcome) {
    case LocalOutcome::kSuccess:
      return "success";
    case LocalOutcome::kReplanRequested:
      return "replan_requested";
    case LocalOutcome::kStepBudgetExceeded:
      return "step_budget_exceeded";
  }
  return "success";
}

LocalResult refine(const GlobalPath& path, const LocalState& start, const Pose& goal,
                   const VoxelMap& map, const RobotConfig& config,
                   const PropagationParams& params, double h_th) {
  const int n = static_cast<int>(path.states.size());
  if (n == 0) {
    throw std::invalid_argument("refine needs a non-empty global path");
  }
  LocalResult result;
  // achieved_at[k]: index into result.states where waypoint k was reached.
  std::vector<int> achieved_at(static_cast<std::size_t>(n), -1);
  achieved_at[0] = 0;

  LocalState current = start;
  current.accumulated_d = Vec3::Zero();
  current.waypoint_index = std::min(1, n);
  result.states.push_back(current);

  const Mat3 goal_frame = rotation_about_z(goal.yaw);
  int i = std::min(1, n);
  int steps_here = 0;

  auto request_replan = [&](int blocked, double min_delta) {
    const Vec3 d = current.accumulated_d;
    const double magnitude = std::max(d.norm(), min_delta);
    result.feedback.push_back({path.states[blocked], std::nullopt, magnitude});
    if (blocked >= 1) {
      result.feedback.push_back(
          {path.states[blocked - 1], Action::between(path.states[blocked - 1], path.states[blocked]),
           params.action_weight_gain * magnitude});
    }
    const int rewind = std::max(0, blocked - 1 - params.back_off_shift_j);
    result.states.resize(static_cast<std::size_t>(achieved_at[rewind]) + 1);
    result.states.back().accumulated_d = Vec3::Zero();
    result.states.back().waypoint_index = rewind;
    result.outcome = LocalOutcome::kReplanRequested;
    result.replan_requested = true;
    result.request_count = 1;
    result.blocked_index = blocked;
    result.rewind_index = rewind;
    result.blocking_d = d;
    return result;
  };

  while (true) {
    const bool final_phase = i >= n;
    const Vec3 target = final_phase ? goal.position : map.discrete_to_world(path.states[i]);
    const Vec3 delta_p = compute_delta_p(target, current.accumulated_d, current.robot.q_p);
    const Mat3 o_i = current.robot.rotation();
    const Vec3 delta_r = final_phase ? rotation_delta_between(o_i, goal_frame)
                                     : compute_rotation_delta(o_i, delta_p);

    if (!final_phase && delta_p.norm() < params.delta_p_max) {
      achieved_at[i] = static_cast<int>(result.states.size()) - 1;
      ++i;
      steps_here = 0;
      current.accumulated_d = Vec3::Zero();
      current.waypoint_index = i;
      continue;
    }
    if (final_phase && delta_p.norm() < params.delta_p_max &&
        delta_r.norm() < params.delta_r_max) {
      result.outcome = LocalOutcome::kSuccess;
      return result;
    }
    if (result.steps >= params.max_propagation_steps) {
      result.outcome = LocalOutcome::kStepBudgetExceeded;
      return result;
    }

    const ClampedDeltas step = clamp_deltas(delta_p, delta_r, params);
    ++result.steps;
    ++steps_here;
    LocalState candidate = propagate(current, step.delta_p, step.delta_r, config);
    advance_gait(candidate, step.delta_p, map, config, params);
    const Validation check = validate(candidate, map, config);
    const int blocked = final_phase ? n - 1 : i;

    if (check.valid) {
      current = candidate;
      result.states.push_back(current);
    } else {
      current.accumulated_d += compute_repulsive(candidate.robot.q_p, check.collisions, h_th);
      const Vec3 g = final_phase ? goal.position : target;
      if (map.discretize(g + current.accumulated_d) != map.discretize(g)) {
        return request_replan(blocked, 0.0);
      }
    }
    if (steps_here >= params.max_steps_per_waypoint) {
      // Stuck without leaving the cell: force the global layer to route around.
      return request_replan(blocked, map.resolution());
    }
  }
}

void write_state_sequence(std::ostream& out, const std::vector<RobotState>& states,
                          const VoxelMap& map, const RobotConfig& config) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "states 1 " << states.size() << '\n';
  for (const RobotState& s : states) {
    const auto v = s.as_vector();
    for (int k = 0; k < 18; ++k) {
      out << v[k] << ' ';
    }
    out << (state_is_valid(s, map, config) ? "valid" : "invalid") << '\n';
  }
}

}  // namespace legplan
