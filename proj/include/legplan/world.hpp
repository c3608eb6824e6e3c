#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "legplan/geometry.hpp"
#include "legplan/kinematics.hpp"
#include "legplan/maps.hpp"
#include "legplan/params.hpp"

namespace legplan {

enum class BoxTag { kTerrain, kUserVirtual };

std::string to_string(BoxTag tag);
BoxTag box_tag_from_string(const std::string& s);

/// Yaw-rotated box. `id` is unique within a scenario and is how user edits
/// refer to boxes.
struct BoxObstacle {
  int id = -1;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  double yaw = 0.0;
  BoxTag tag = BoxTag::kTerrain;

  Obb obb() const;
  void validate() const;

  friend bool operator==(const BoxObstacle&, const BoxObstacle&) = default;
};

struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Scenario {
  std::vector<BoxObstacle> boxes;
  Pose start;
  Pose goal;
  double resolution = 0.05;
  /// Free space added around the boxes on every side.
  double margin = 0.5;
  /// Refuse to voxelize worlds with more cells than this.
  std::int64_t max_cells = 16'000'000;
  RobotConfig robot = RobotConfig::defaults_for_resolution(0.05);
  PropagationParams params;

  /// Throws ScenarioValidationError.
  void validate() const;
  int next_box_id() const;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

class ScenarioParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScenarioValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Start or goal outside the world bounds.
class EndpointOutOfBounds : public ScenarioValidationError {
 public:
  EndpointOutOfBounds(const std::string& what, bool is_start)
      : ScenarioValidationError(what), is_start_(is_start) {}
  bool is_start() const { return is_start_; }

 private:
  bool is_start_;
};

class WorldTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Scenario load_scenario(std::string_view text);
Scenario load_scenario_file(const std::filesystem::path& path);
std::string save_scenario(const Scenario& scenario);

nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json box_to_json(const BoxObstacle& box);
BoxObstacle box_from_json(const nlohmann::json& doc);
nlohmann::json pose_to_json(const Pose& pose);
Pose pose_from_json(const nlohmann::json& doc);

/// `steps` solid blocks climbing along +x: block i (1-based) spans
/// x in [i*run, (i+1)*run], y in [-width/2, width/2], z in [0, i*rise].
std::vector<BoxObstacle> generate_stairs(int steps, double rise, double run, double width);

struct StairsLayout {
  int steps = 10;
  double rise = 0.05;
  double run = 0.3;
  double width = 1.0;
  /// Length of the platform after the last step; the goal is at its middle.
  double landing = 0.9;
  double resolution = 0.05;
  /// Trunk-centre height above the surface at start and goal.
  double stance_height = 0.225;
};

/// A floor slab plus generated stairs and a top landing, with the start on the
/// floor in front of the first step and the goal on the landing.
Scenario make_stairs_scenario(const StairsLayout& layout);

/// Grid placement implied by the scenario's boxes, start, goal and margin.
struct WorldGrid {
  Vec3 origin;
  GridBounds bounds;
  friend bool operator==(const WorldGrid&, const WorldGrid&) = default;
};
WorldGrid world_grid(const Scenario& scenario);

/// A cell is occupied iff its cube overlaps some box with positive volume.
/// Throws WorldTooLarge past scenario.max_cells.
VoxelMap voxelize(const Scenario& scenario);

}  // namespace legplan
