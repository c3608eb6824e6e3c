#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

#include "legplan/local_planner.hpp"
#include "legplan/world.hpp"

using namespace legplan;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(rng), d(rng), d(rng)};
}

// Floor with its top at z = 0, optionally a slab whose underside is at
// `ceiling_z` for x >= ceiling_from.
Scenario corridor(std::optional<double> ceiling_z = std::nullopt, double ceiling_from = 0.0) {
  Scenario s;
  s.resolution = 0.05;
  s.robot = RobotConfig::defaults_for_resolution(s.resolution);
  s.boxes.push_back({0, {0.5, 0.0, -0.05}, {1.5, 0.6, 0.05}, 0.0, BoxTag::kTerrain});
  if (ceiling_z) {
    const double x0 = ceiling_from, x1 = 2.0;
    s.boxes.push_back({1, {0.5 * (x0 + x1), 0.0, *ceiling_z + 0.05}, {0.5 * (x1 - x0), 0.6, 0.05},
                       0.0, BoxTag::kTerrain});
  }
  s.start = {{-0.6, 0.025, 0.225}, 0.0};
  s.goal = {{-0.6 + 9 * 0.05, 0.025, 0.225}, 0.0};
  return s;
}

GlobalPath straight_path(const VoxelMap& map, const Vec3& from, int cells) {
  GlobalPath path;
  const DiscreteState c = map.world_to_discrete(from);
  for (int k = 0; k < cells; ++k) {
    path.states.push_back({c.x + k, c.y, c.z});
  }
  return path;
}

std::vector<RobotState> robots(const std::vector<LocalState>& states) {
  std::vector<RobotState> out;
  for (const LocalState& s : states) out.push_back(s.robot);
  return out;
}

}  // namespace

TEST_CASE("repulsive vector equals the contact mean on random collision sets") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 q = random_vec(rng, 3.0);
    std::vector<Contact> contacts(static_cast<std::size_t>(count(rng)));
    for (Contact& c : contacts) {
      c.point = random_vec(rng, 3.0);
      c.normal = random_vec(rng, 1.0).normalized();
    }
    // Written out per component in the same order.
    Vec3 direct;
    for (int j = 0; j < 3; ++j) {
      double sum = 0.0;
      for (const Contact& c : contacts) sum += (q[j] - c.point[j]) + c.normal[j];
      direct[j] = sum / static_cast<double>(contacts.size());
    }
    const Vec3 got = compute_repulsive(q, contacts, 0.28);
    CHECK(got == direct);

    // Regrouped as q - mean(p) + mean(n).
    Vec3 mean_p = Vec3::Zero(), mean_n = Vec3::Zero();
    for (const Contact& c : contacts) {
      mean_p += c.point;
      mean_n += c.normal;
    }
    mean_p /= static_cast<double>(contacts.size());
    mean_n /= static_cast<double>(contacts.size());
    CHECK((got - (q - mean_p + mean_n)).norm() < 1e-12);
  }
}

TEST_CASE("repulsive vector edge cases") {
  const Vec3 q(1.0, 2.0, 3.0);
  CHECK(compute_repulsive(q, {}, 0.28) == Vec3(0.0, 0.0, -0.28));
  CHECK(compute_repulsive(q, {{q, Vec3::UnitZ()}}, 0.28) == Vec3(0.0, 0.0, 1.0));
  // Opposite normals at the same point cancel.
  CHECK(compute_repulsive(q, {{q, Vec3::UnitX()}, {q, -Vec3::UnitX()}}, 0.28) == Vec3::Zero());
}

TEST_CASE("clamping keeps direction and caps the norm") {
  const PropagationParams params;
  std::mt19937_64 rng(12);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = random_vec(rng, 0.2), r = random_vec(rng, 0.3);
    const ClampedDeltas c = clamp_deltas(p, r, params);
    CHECK(c.delta_p.norm() <= params.delta_p_max + 1e-15);
    CHECK(c.delta_r.norm() <= params.delta_r_max + 1e-15);
    CHECK(c.delta_p.cross(p).norm() < 1e-12);
    CHECK(c.delta_p.dot(p) >= 0.0);
    if (p.norm() <= params.delta_p_max) CHECK(c.delta_p == p);
    if (r.norm() <= params.delta_r_max) CHECK(c.delta_r == r);
  }
  CHECK((compute_delta_p({1, 1, 1}, {0.1, 0, -0.2}, {0.5, 0.5, 0.5}) - Vec3(0.6, 0.5, 0.3)).norm() < 1e-15);
}

TEST_CASE("target frame follows the step direction and stays upright") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 500; ++i) {
    const Vec3 rpy = random_vec(rng, 0.6);
    const Mat3 current = oracle::rpy_matrix(rpy);
    Vec3 dp = random_vec(rng, 1.0);
    if (Vec3(dp.x(), dp.y(), 0.0).norm() < 0.05) continue;
    const Mat3 t = target_frame(current, dp);
    CHECK((t.transpose() * t - Mat3::Identity()).norm() < 1e-12);
    CHECK(t.determinant() == doctest::Approx(1.0));
    CHECK((t.col(0) - dp.normalized()).norm() < 1e-12);
    CHECK(t.col(1).z() == doctest::Approx(0.0).epsilon(1e-12));  // no roll
    CHECK(t.col(2).z() > 0.0);

    // Composing the extracted body-frame increment lands on the target.
    const Vec3 dr = rotation_delta_between(current, t);
    CHECK((current * oracle::rpy_matrix(dr) - t).norm() < 1e-9);
  }
  const Mat3 yawed = rotation_about_z(0.7);
  CHECK(target_frame(yawed, Vec3::Zero()) == yawed);
  const Mat3 up = target_frame(yawed, Vec3(0, 0, 0.1));
  CHECK((up - rotation_about_z(0.7)).norm() < 1e-12);
}

TEST_CASE("propagation moves the trunk, keeps paws, and accumulates hip travel") {
  const Scenario s = corridor();
  const VoxelMap map = voxelize(s);
  const LocalState a = initial_state(s.start.position, 0.0, map, s.robot);
  const LocalState b = propagate(a, {0.02, 0.0, 0.0}, {0.0, 0.0, 0.0}, s.robot);
  CHECK((b.robot.q_p - a.robot.q_p - Vec3(0.02, 0, 0)).norm() < 1e-15);
  for (int leg = 0; leg < kLegCount; ++leg) {
    CHECK(b.paws[leg] == a.paws[leg]);
    CHECK(b.accumulated_swing[leg] == doctest::Approx(0.02));
  }
  const LocalState c = propagate(a, Vec3::Zero(), {0.0, 0.0, 0.04}, s.robot);
  CHECK(c.robot.q_r.z() == doctest::Approx(0.04));

  LocalState swing = a;
  swing.accumulated_swing = {0.01, 0.07, 0.07, 0.03};
  CHECK(select_swing_leg(swing, 0.06) == 1);  // tie goes to the lower index
  swing.accumulated_swing = {0.01, 0.02, 0.05, 0.03};
  CHECK_FALSE(select_swing_leg(swing, 0.06).has_value());
}

TEST_CASE("single-cell global path: start is the only state") {
  Scenario s = corridor();
  s.goal = s.start;
  const VoxelMap map = voxelize(s);
  const GlobalPath path = straight_path(map, s.start.position, 1);
  const LocalState start = initial_state(s.start.position, 0.0, map, s.robot);
  const LocalResult r =
      refine(path, start, s.goal, map, s.robot, s.params, standing_height_max(s.robot));
  CHECK(r.outcome == LocalOutcome::kSuccess);
  CHECK(r.states.size() == 1);
  CHECK(r.feedback.empty());
  CHECK_FALSE(r.replan_requested);
}

TEST_CASE("flat corridor: every state valid and every step within bounds") {
  const Scenario s = corridor();
  const VoxelMap map = voxelize(s);
  const GlobalPath path = straight_path(map, s.start.position, 10);
  const LocalState start = initial_state(s.start.position, 0.0, map, s.robot);
  const LocalResult r =
      refine(path, start, s.goal, map, s.robot, s.params, standing_height_max(s.robot));
  REQUIRE(r.outcome == LocalOutcome::kSuccess);
  CHECK(r.feedback.empty());
  CHECK(r.states.size() > 10);
  CHECK((r.states.back().robot.q_p - s.goal.position).norm() < s.params.delta_p_max);

  const auto seq = robots(r.states);
  for (const RobotState& st : seq) {
    const oracle::StateAudit audit = oracle::audit_state(st, map, s.robot);
    CHECK(audit.ok());
    CHECK(state_is_valid(st, map, s.robot));
  }
  const oracle::StepAudit steps = oracle::audit_steps(seq);
  CHECK(steps.max_translation <= s.params.delta_p_max + 1e-12);
  CHECK(steps.max_rotation <= s.params.delta_r_max + 1e-12);
}

TEST_CASE("low ceiling: replan request with feedback at the blocked waypoint") {
  const Scenario s = corridor(0.24, -0.25);
  const VoxelMap map = voxelize(s);
  const GlobalPath path = straight_path(map, s.start.position, 10);
  const LocalState start = initial_state(s.start.position, 0.0, map, s.robot);
  REQUIRE(state_is_valid(start.robot, map, s.robot));
  const LocalResult r =
      refine(path, start, s.goal, map, s.robot, s.params, standing_height_max(s.robot));
  REQUIRE(r.outcome == LocalOutcome::kReplanRequested);
  CHECK(r.replan_requested);
  CHECK(r.request_count == 1);
  REQUIRE(r.blocked_index >= 1);
  CHECK(r.rewind_index == std::max(0, r.blocked_index - 1 - s.params.back_off_shift_j));

  REQUIRE(r.feedback.size() == 2);
  const WeightUpdate& pos = r.feedback[0];
  CHECK(pos.state == path.states[static_cast<std::size_t>(r.blocked_index)]);
  CHECK_FALSE(pos.action.has_value());
  CHECK(pos.delta >= r.blocking_d.norm());
  CHECK(pos.delta > 0.0);
  const WeightUpdate& act = r.feedback[1];
  CHECK(act.state == path.states[static_cast<std::size_t>(r.blocked_index - 1)]);
  REQUIRE(act.action.has_value());
  CHECK(*act.action == Action{1, 0, 0});
  CHECK(act.delta == s.params.action_weight_gain * pos.delta);

  // The kept prefix ends where the rewind waypoint was reached.
  CHECK(r.states.back().waypoint_index == r.rewind_index);
  CHECK(r.states.back().accumulated_d == Vec3::Zero());
  for (const LocalState& st : r.states) CHECK(oracle::audit_state(st.robot, map, s.robot).ok());
}

TEST_CASE("refine rejects an empty path") {
  const Scenario s = corridor();
  const VoxelMap map = voxelize(s);
  const LocalState start = initial_state(s.start.position, 0.0, map, s.robot);
  CHECK_THROWS_AS(refine({}, start, s.goal, map, s.robot, s.params, 0.28), std::invalid_argument);
}

TEST_CASE("state sequence file: one line per state") {
  const Scenario s = corridor();
  const VoxelMap map = voxelize(s);
  const LocalState start = initial_state(s.start.position, 0.0, map, s.robot);
  std::ostringstream out;
  write_state_sequence(out, {start.robot, start.robot}, map, s.robot);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "states 1 2");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.substr(line.size() - 6) == " valid");
  }
  CHECK(rows == 2);
}
