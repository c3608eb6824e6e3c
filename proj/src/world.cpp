#include "legplan/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace legplan {

using nlohmann::json;

namespace {

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ScenarioParseError(std::string(what) + " must be an array of 3 numbers");
  }
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

template <typename T>
void read_optional(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    out = it->get<T>();
  }
}

json robot_to_json(const RobotConfig& r) {
  json hips = json::array();
  for (const auto& h : r.hip_offsets) {
    hips.push_back(vec_to_json(h));
  }
  json limits = json::array();
  for (const auto& lim : r.joint_limits) {
    limits.push_back(json::array({lim.min, lim.max}));
  }
  return {{"trunk_half_extents", vec_to_json(r.trunk_half_extents)},
          {"hip_offsets", hips},
          {"l_abd", r.l_abd},
          {"l_thigh", r.l_thigh},
          {"l_shank", r.l_shank},
          {"joint_limits", limits},
          {"foot_contact_tol", r.foot_contact_tol},
          {"link_radius", r.link_radius},
          {"standing_margin", r.standing_margin}};
}

RobotConfig robot_from_json(const json& j, double resolution) {
  RobotConfig r = RobotConfig::defaults_for_resolution(resolution);
  if (j.is_null()) {
    return r;
  }
  if (const auto it = j.find("trunk_half_extents"); it != j.end()) {
    r.trunk_half_extents = vec_from_json(*it, "robot.trunk_half_extents");
  }
  if (const auto it = j.find("hip_offsets"); it != j.end()) {
    if (!it->is_array() || it->size() != kLegCount) {
      throw ScenarioParseError("robot.hip_offsets must list 4 vectors");
    }
    for (int leg = 0; leg < kLegCount; ++leg) {
      r.hip_offsets[leg] = vec_from_json(it->at(leg), "robot.hip_offsets[]");
    }
  }
  read_optional(j, "l_abd", r.l_abd);
  read_optional(j, "l_thigh", r.l_thigh);
  read_optional(j, "l_shank", r.l_shank);
  if (const auto it = j.find("joint_limits"); it != j.end()) {
    if (!it->is_array() || it->size() != 3) {
      throw ScenarioParseError("robot.joint_limits must list 3 [min, max] pairs");
    }
    for (int k = 0; k < 3; ++k) {
      r.joint_limits[k] = {it->at(k).at(0).get<double>(), it->at(k).at(1).get<double>()};
    }
  }
  read_optional(j, "foot_contact_tol", r.foot_contact_tol);
  read_optional(j, "link_radius", r.link_radius);
  read_optional(j, "standing_margin", r.standing_margin);
  return r;
}

json params_to_json(const PropagationParams& p) {
  return {{"delta_p_max", p.delta_p_max},
          {"delta_r_max", p.delta_r_max},
          {"back_off_shift_j", p.back_off_shift_j},
          {"max_steps_per_waypoint", p.max_steps_per_waypoint},
          {"action_weight_gain", p.action_weight_gain},
          {"max_propagation_steps", p.max_propagation_steps},
          {"swing_trigger", p.swing_trigger},
          {"swing_lead", p.swing_lead},
          {"step_clearance", p.step_clearance},
          {"edge_margin", p.edge_margin},
          {"max_requests_per_iteration", p.max_requests_per_iteration}};
}

PropagationParams params_from_json(const json& j) {
  PropagationParams p;
  if (j.is_null()) {
    return p;
  }
  read_optional(j, "delta_p_max", p.delta_p_max);
  read_optional(j, "delta_r_max", p.delta_r_max);
  read_optional(j, "back_off_shift_j", p.back_off_shift_j);
  read_optional(j, "max_steps_per_waypoint", p.max_steps_per_waypoint);
  read_optional(j, "action_weight_gain", p.action_weight_gain);
  read_optional(j, "max_propagation_steps", p.max_propagation_steps);
  read_optional(j, "swing_trigger", p.swing_trigger);
  read_optional(j, "swing_lead", p.swing_lead);
  read_optional(j, "step_clearance", p.step_clearance);
  read_optional(j, "edge_margin", p.edge_margin);
  read_optional(j, "max_requests_per_iteration", p.max_requests_per_iteration);
  return p;
}

Aabb boxes_extent(const Scenario& s, bool include_poses) {
  Aabb ext{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& box : s.boxes) {
    const Aabb b = box.obb().bounds();
    ext.min = ext.min.cwiseMin(b.min);
    ext.max = ext.max.cwiseMax(b.max);
  }
  if (include_poses) {
    for (const Vec3& p : {s.start.position, s.goal.position}) {
      ext.min = ext.min.cwiseMin(p);
      ext.max = ext.max.cwiseMax(p);
    }
  }
  return ext;
}

}  // namespace

void PropagationParams::validate() const {
  if (!(delta_p_max > 0.0) || !(delta_r_max > 0.0)) {
    throw ScenarioValidationError("delta_p_max and delta_r_max must be positive");
  }
  if (back_off_shift_j < 0) {
    throw ScenarioValidationError("back_off_shift_j must be >= 0");
  }
  if (max_steps_per_waypoint <= 0 || max_propagation_steps <= 0 ||
      max_requests_per_iteration <= 0) {
    throw ScenarioValidationError("step and request budgets must be positive");
  }
  if (!(action_weight_gain >= 0.0) || !(swing_trigger > 0.0) || !(swing_lead >= 0.0) ||
      !(step_clearance > 0.0) || !(edge_margin >= 0.0)) {
    throw ScenarioValidationError("gait and feedback parameters out of range");
  }
}

std::string to_string(BoxTag tag) {
  return tag == BoxTag::kUserVirtual ? "user_virtual" : "terrain";
}

BoxTag box_tag_from_string(const std::string& s) {
  if (s == "terrain") return BoxTag::kTerrain;
  if (s == "user_virtual") return BoxTag::kUserVirtual;
  throw ScenarioParseError("unknown box tag '" + s + "'");
}

Obb BoxObstacle::obb() const { return {center, rotation_about_z(yaw), half_extents}; }

void BoxObstacle::validate() const {
  if (!((half_extents.array() > 0.0).all()) || !center.allFinite() || !std::isfinite(yaw)) {
    throw ScenarioValidationError("box " + std::to_string(id) +
                                  ": half_extents must be positive and values finite");
  }
}

int Scenario::next_box_id() const {
  int next = 0;
  for (const auto& b : boxes) {
    next = std::max(next, b.id + 1);
  }
  return next;
}

void Scenario::validate() const {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw ScenarioValidationError("resolution must be positive");
  }
  if (!(margin >= 0.0)) {
    throw ScenarioValidationError("margin must be non-negative");
  }
  std::set<int> ids;
  for (const auto& box : boxes) {
    box.validate();
    if (box.id < 0 || !ids.insert(box.id).second) {
      throw ScenarioValidationError("box ids must be unique and non-negative");
    }
  }
  robot.validate();
  params.validate();
  if (!boxes.empty()) {
    const Aabb ext = boxes_extent(*this, false);
    const Aabb world{ext.min - Vec3::Constant(margin), ext.max + Vec3::Constant(margin)};
    if (!world.contains(start.position)) {
      throw EndpointOutOfBounds("start must lie inside the world bounds", true);
    }
    if (!world.contains(goal.position)) {
      throw EndpointOutOfBounds("goal must lie inside the world bounds", false);
    }
  }
  const WorldGrid grid = world_grid(*this);
  const VoxelMap probe(resolution, grid.origin, GridBounds{});
  if (probe.discretize(start.position) == probe.discretize(goal.position)) {
    throw ScenarioValidationError("start and goal fall in the same cell");
  }
}

json box_to_json(const BoxObstacle& box) {
  return {{"id", box.id},
          {"center", vec_to_json(box.center)},
          {"half_extents", vec_to_json(box.half_extents)},
          {"yaw", box.yaw},
          {"tag", to_string(box.tag)}};
}

BoxObstacle box_from_json(const json& j) {
  BoxObstacle box;
  try {
    read_optional(j, "id", box.id);
    box.center = vec_from_json(j.at("center"), "box.center");
    box.half_extents = vec_from_json(j.at("half_extents"), "box.half_extents");
    read_optional(j, "yaw", box.yaw);
    if (const auto it = j.find("tag"); it != j.end()) {
      box.tag = box_tag_from_string(it->get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed box: ") + e.what());
  }
  return box;
}

json pose_to_json(const Pose& pose) {
  return {{"position", vec_to_json(pose.position)}, {"yaw", pose.yaw}};
}

Pose pose_from_json(const json& j) {
  Pose pose;
  try {
    pose.position = vec_from_json(j.at("position"), "pose.position");
    read_optional(j, "yaw", pose.yaw);
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed pose: ") + e.what());
  }
  return pose;
}

json scenario_to_json(const Scenario& s) {
  json boxes = json::array();
  for (const auto& b : s.boxes) {
    boxes.push_back(box_to_json(b));
  }
  return {{"boxes", boxes},
          {"start", pose_to_json(s.start)},
          {"goal", pose_to_json(s.goal)},
          {"resolution", s.resolution},
          {"margin", s.margin},
          {"max_cells", s.max_cells},
          {"robot", robot_to_json(s.robot)},
          {"params", params_to_json(s.params)}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  try {
    if (!j.is_object()) {
      throw ScenarioParseError("scenario document must be an object");
    }
    s.resolution = j.at("resolution").get<double>();
    read_optional(j, "margin", s.margin);
    read_optional(j, "max_cells", s.max_cells);
    int auto_id = 0;
    for (const auto& jb : j.at("boxes")) {
      BoxObstacle box = box_from_json(jb);
      if (box.id < 0) {
        box.id = auto_id;
      }
      auto_id = std::max(auto_id, box.id) + 1;
      s.boxes.push_back(box);
    }
    s.start = pose_from_json(j.at("start"));
    s.goal = pose_from_json(j.at("goal"));
    s.robot = robot_from_json(j.contains("robot") ? j.at("robot") : json(), s.resolution);
    s.params = params_from_json(j.contains("params") ? j.at("params") : json());
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(doc);
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read scenario file " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return load_scenario(text.str());
}

std::string save_scenario(const Scenario& scenario) {
  return scenario_to_json(scenario).dump(2) + "\n";
}

std::vector<BoxObstacle> generate_stairs(int steps, double rise, double run, double width) {
  if (steps < 1) {
    throw std::invalid_argument("stairs need at least one step");
  }
  if (!(rise > 0.0 && run > 0.0 && width > 0.0)) {
    throw std::invalid_argument("stair rise, run and width must be positive");
  }
  std::vector<BoxObstacle> boxes;
  for (int i = 1; i <= steps; ++i) {
    BoxObstacle b;
    b.id = i - 1;
    b.center = {(i + 0.5) * run, 0.0, 0.5 * i * rise};
    b.half_extents = {0.5 * run, 0.5 * width, 0.5 * i * rise};
    boxes.push_back(b);
  }
  return boxes;
}

Scenario make_stairs_scenario(const StairsLayout& layout) {
  Scenario s;
  s.resolution = layout.resolution;
  s.robot = RobotConfig::defaults_for_resolution(layout.resolution);

  const double stairs_end = (layout.steps + 1) * layout.run;
  BoxObstacle floor;
  floor.id = 0;
  const double floor_min_x = -1.2;
  const double floor_max_x = stairs_end + layout.landing;
  floor.center = {0.5 * (floor_min_x + floor_max_x), 0.0, -0.05};
  floor.half_extents = {0.5 * (floor_max_x - floor_min_x), 0.5 * layout.width + 0.5, 0.05};
  s.boxes.push_back(floor);
  for (BoxObstacle step : generate_stairs(layout.steps, layout.rise, layout.run, layout.width)) {
    step.id += 1;
    s.boxes.push_back(step);
  }
  const double top = layout.steps * layout.rise;
  if (layout.landing > 0.0) {
    BoxObstacle landing;
    landing.id = layout.steps + 1;
    landing.center = {stairs_end + 0.5 * layout.landing, 0.0, 0.5 * top};
    landing.half_extents = {0.5 * layout.landing, 0.5 * layout.width, 0.5 * top};
    s.boxes.push_back(landing);
  }
  // Cell-centred lateral coordinate keeps the straight line on one row of cells.
  const double y = 0.5 * layout.resolution;
  s.start = {{-0.6, y, layout.stance_height}, 0.0};
  s.goal = {{stairs_end + 0.5 * layout.landing, y,
             layout.steps * layout.rise + layout.stance_height},
            0.0};
  s.validate();
  return s;
}

WorldGrid world_grid(const Scenario& s) {
  const Aabb ext = boxes_extent(s, true);
  const double res = s.resolution;
  const Vec3 lo = ext.min - Vec3::Constant(s.margin);
  const Vec3 hi = ext.max + Vec3::Constant(s.margin);
  WorldGrid grid;
  Eigen::Vector3i n;
  for (int k = 0; k < 3; ++k) {
    const double first = std::floor(lo[k] / res);
    grid.origin[k] = first * res;
    n[k] = std::max(1, static_cast<int>(std::ceil(hi[k] / res - first)));
  }
  grid.bounds = {n.x(), n.y(), n.z()};
  return grid;
}

VoxelMap voxelize(const Scenario& s) {
  const WorldGrid grid = world_grid(s);
  if (grid.bounds.cell_count() > s.max_cells) {
    throw WorldTooLarge("world needs " + std::to_string(grid.bounds.cell_count()) +
                        " cells, limit is " + std::to_string(s.max_cells));
  }
  VoxelMap map(s.resolution, grid.origin, grid.bounds);
  for (const auto& box : s.boxes) {
    const Obb obb = box.obb();
    const Aabb b = obb.bounds();
    const DiscreteState lo = map.discretize(b.min);
    const DiscreteState hi = map.discretize(b.max);
    const CellTag tag =
        box.tag == BoxTag::kUserVirtual ? CellTag::kUserVirtual : CellTag::kTerrain;
    for (int x = std::max(lo.x, 0); x <= std::min(hi.x, grid.bounds.nx - 1); ++x) {
      for (int y = std::max(lo.y, 0); y <= std::min(hi.y, grid.bounds.ny - 1); ++y) {
        for (int z = std::max(lo.z, 0); z <= std::min(hi.z, grid.bounds.nz - 1); ++z) {
          const DiscreteState q{x, y, z};
          if (obb_intersects_aabb(obb, map.cell_box(q))) {
            map.mark(q, tag);
          }
        }
      }
    }
  }
  return map;
}

}  // namespace legplan
