#pragma once

namespace legplan {

/// Tuning of the local planner. Lengths in metres, angles in radians.
struct PropagationParams {
  double delta_p_max = 0.03;  ///< trunk translation per step
  double delta_r_max = 0.05;  ///< trunk rotation per step
  int back_off_shift_j = 1;   ///< extra waypoints to rewind on a replan request
  int max_steps_per_waypoint = 500;
  double action_weight_gain = 1.0;
  int max_propagation_steps = 100000;
  /// Accumulated hip travel that triggers a swing.
  double swing_trigger = 0.06;
  /// How far ahead of its neutral foothold a swinging paw is placed.
  double swing_lead = 0.03;
  /// Footholds closer than this to a change in surface height are moved.
  double edge_margin = 0.03;
  /// Paw lift while swinging.
  double step_clearance = 0.04;
  /// Replan requests allowed in one learning iteration before giving up.
  int max_requests_per_iteration = 1000;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;

  friend bool operator==(const PropagationParams&, const PropagationParams&) = default;
};

}  // namespace legplan
