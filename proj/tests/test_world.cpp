#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

#include "legplan/world.hpp"

using namespace legplan;

namespace {

Scenario flat_world() {
  Scenario s;
  BoxObstacle floor;
  floor.id = 0;
  floor.center = {0.5, 0.0, -0.05};
  floor.half_extents = {1.0, 0.5, 0.05};
  s.boxes.push_back(floor);
  s.start.position = {-0.2, 0.025, 0.225};
  s.goal.position = {1.2, 0.025, 0.225};
  return s;
}

// Cell/box overlap decided from the box's own frame: the cell's corners are
// mapped into it and tested with interval arithmetic on a fine sub-grid.
bool overlaps_by_sampling(const BoxObstacle& box, const Aabb& cell, int n) {
  const Mat3 axes = rotation_about_z(box.yaw);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 t((i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n);
        const Vec3 p = cell.min + t.cwiseProduct(cell.max - cell.min);
        const Vec3 local = axes.transpose() * (p - box.center);
        if ((local.cwiseAbs().array() < box.half_extents.array()).all()) return true;
      }
  return false;
}

}  // namespace

TEST_CASE("voxelization of axis-aligned boxes matches interval overlap on every cell") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> c(-0.5, 0.5);
  std::uniform_real_distribution<double> h(0.02, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    Scenario s = flat_world();
    s.resolution = 0.1;
    s.robot = RobotConfig::defaults_for_resolution(0.1);
    for (int b = 1; b <= 4; ++b) {
      BoxObstacle box;
      box.id = b;
      box.center = {c(rng), c(rng), c(rng) + 0.3};
      box.half_extents = {h(rng), h(rng), h(rng)};
      s.boxes.push_back(box);
    }
    const VoxelMap map = voxelize(s);
    const auto& bounds = map.bounds();
    for (int x = 0; x < bounds.nx; ++x)
      for (int y = 0; y < bounds.ny; ++y)
        for (int z = 0; z < bounds.nz; ++z) {
          const Aabb cell = map.cell_box({x, y, z});
          bool want = false;
          for (const BoxObstacle& box : s.boxes) {
            bool all = true;
            for (int k = 0; k < 3; ++k) {
              const double len = std::min(cell.max[k], box.center[k] + box.half_extents[k]) -
                                 std::max(cell.min[k], box.center[k] - box.half_extents[k]);
              all = all && len > 1e-9;
            }
            want = want || all;
          }
          REQUIRE(map.occupied({x, y, z}) == want);
        }
  }
}

TEST_CASE("voxelization of yawed boxes covers every sampled overlap and nothing far away") {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> yaw(-kPi, kPi);
  for (int trial = 0; trial < 10; ++trial) {
    Scenario s = flat_world();
    BoxObstacle box;
    box.id = 1;
    box.center = {0.4, 0.1, 0.2};
    box.half_extents = {0.2, 0.07, 0.1};
    box.yaw = yaw(rng);
    box.tag = BoxTag::kUserVirtual;
    s.boxes.push_back(box);
    const VoxelMap map = voxelize(s);
    for (const auto& [q, tag] : map.occupied_cells()) {
      if (tag != CellTag::kUserVirtual) continue;
      // Any tagged cell must come within the box's circumradius.
      const double reach = box.half_extents.norm() + map.resolution() * std::sqrt(3.0);
      CHECK((map.discrete_to_world(q) - box.center).norm() <= reach);
    }
    for (int x = 0; x < map.bounds().nx; ++x)
      for (int y = 0; y < map.bounds().ny; ++y)
        for (int z = 0; z < map.bounds().nz; ++z)
          if (overlaps_by_sampling(box, map.cell_box({x, y, z}), 6))
            CHECK(map.tag({x, y, z}) == CellTag::kUserVirtual);
  }
}

TEST_CASE("user-virtual tags survive overlapping terrain") {
  Scenario s = flat_world();
  BoxObstacle user;
  user.id = 1;
  user.center = {0.5, 0.0, 0.0};
  user.half_extents = {0.1, 0.1, 0.1};
  user.tag = BoxTag::kUserVirtual;
  s.boxes.push_back(user);
  const VoxelMap map = voxelize(s);
  CHECK(map.tag(map.discretize({0.5, 0.0, -0.025})) == CellTag::kUserVirtual);
  CHECK(map.tag(map.discretize({0.0, 0.0, -0.025})) == CellTag::kTerrain);
}

TEST_CASE("world grid: boxes, endpoints and margin, snapped to the resolution") {
  const Scenario s = flat_world();
  const WorldGrid g = world_grid(s);
  const double res = s.resolution;
  // Extent: x [-0.5, 1.5], y [-0.5, 0.5], z [-0.1, 0.225]; plus 0.5 on every side.
  CHECK(g.origin.x() == doctest::Approx(-1.0));
  CHECK(g.origin.y() == doctest::Approx(-1.0));
  CHECK(g.origin.z() == doctest::Approx(-0.6));
  CHECK(g.bounds.nx == static_cast<int>(std::round(3.0 / res)));
  CHECK(g.bounds.ny == static_cast<int>(std::round(2.0 / res)));
  CHECK(g.origin.z() + g.bounds.nz * res >= 0.725 - 1e-9);
  for (int k = 0; k < 3; ++k) {
    const double cells = g.origin[k] / res;
    CHECK(std::abs(cells - std::round(cells)) < 1e-9);
  }
}

TEST_CASE("oversized worlds are refused") {
  Scenario s = flat_world();
  s.max_cells = 1000;
  CHECK_THROWS_AS(voxelize(s), WorldTooLarge);
}

TEST_CASE("scenario validation") {
  Scenario s = flat_world();
  CHECK_NOTHROW(s.validate());
  SUBCASE("non-positive extents") {
    s.boxes[0].half_extents.x() = 0.0;
    CHECK_THROWS_AS(s.validate(), ScenarioValidationError);
  }
  SUBCASE("duplicate ids") {
    s.boxes.push_back(s.boxes[0]);
    CHECK_THROWS_AS(s.validate(), ScenarioValidationError);
  }
  SUBCASE("start outside the world") {
    s.start.position.x() = -5.0;
    CHECK_THROWS_AS(s.validate(), ScenarioValidationError);
  }
  SUBCASE("start and goal in one cell") {
    s.goal.position = s.start.position + Vec3(0.001, 0, 0);
    CHECK_THROWS_AS(s.validate(), ScenarioValidationError);
  }
  SUBCASE("bad resolution") {
    s.resolution = 0.0;
    CHECK_THROWS_AS(s.validate(), ScenarioValidationError);
  }
}

TEST_CASE("scenario JSON round-trip") {
  Scenario s = make_stairs_scenario({});
  s.boxes[3].yaw = 0.3;
  s.boxes[3].tag = BoxTag::kUserVirtual;
  s.params.back_off_shift_j = 2;
  s.robot.link_radius = 0.02;
  CHECK(load_scenario(save_scenario(s)) == s);
}

TEST_CASE("minimal scenario JSON fills defaults and assigns ids") {
  const Scenario s = load_scenario(R"({
    "resolution": 0.05,
    "boxes": [{"center": [0.5, 0, -0.05], "half_extents": [1, 0.5, 0.05]},
              {"id": 4, "center": [0.5, 0, 0.2], "half_extents": [0.1, 0.1, 0.1], "tag": "user_virtual"},
              {"center": [1.0, 0, 0.2], "half_extents": [0.1, 0.1, 0.1]}],
    "start": {"position": [-0.2, 0.025, 0.225]},
    "goal": {"position": [1.2, 0.025, 0.225], "yaw": 0.5}})");
  REQUIRE(s.boxes.size() == 3);
  CHECK(s.boxes[0].id == 0);
  CHECK(s.boxes[1].id == 4);
  CHECK(s.boxes[2].id == 5);
  CHECK(s.boxes[1].tag == BoxTag::kUserVirtual);
  CHECK(s.margin == 0.5);
  CHECK(s.robot == RobotConfig::defaults_for_resolution(0.05));
  CHECK(s.params == PropagationParams{});
  CHECK(s.goal.yaw == 0.5);
  CHECK(s.next_box_id() == 6);
}

TEST_CASE("malformed scenarios") {
  CHECK_THROWS_AS(load_scenario("{"), ScenarioParseError);
  CHECK_THROWS_AS(load_scenario(R"({"boxes": []})"), ScenarioParseError);
  CHECK_THROWS_AS(load_scenario(R"({"resolution": 0.05, "boxes": [{"center": [0, 0], "half_extents": [1, 1, 1]}],
                                    "start": {"position": [0, 0, 0]}, "goal": {"position": [1, 0, 0]}})"),
                  std::exception);
  CHECK_THROWS_AS(load_scenario_file("/nonexistent/scenario.json"), std::exception);
}

TEST_CASE("generated stairs geometry") {
  const auto steps = generate_stairs(3, 0.1, 0.3, 1.0);
  REQUIRE(steps.size() == 3);
  for (int i = 1; i <= 3; ++i) {
    const Aabb b = steps[i - 1].obb().bounds();
    CHECK(b.min.x() == doctest::Approx(i * 0.3));
    CHECK(b.max.x() == doctest::Approx((i + 1) * 0.3));
    CHECK(b.min.z() == doctest::Approx(0.0));
    CHECK(b.max.z() == doctest::Approx(i * 0.1));
    CHECK(b.max.y() - b.min.y() == doctest::Approx(1.0));
  }
  CHECK_THROWS(generate_stairs(0, 0.1, 0.3, 1.0));
  CHECK_THROWS(generate_stairs(2, -0.1, 0.3, 1.0));
}

TEST_CASE("stairs scenario: endpoints stand on floor and landing") {
  const StairsLayout layout;
  const Scenario s = make_stairs_scenario(layout);
  CHECK_NOTHROW(s.validate());
  const VoxelMap map = voxelize(s);
  const int h_cells = 5;
  CHECK(oracle::standable(map, map.discretize(s.start.position), h_cells));
  CHECK(oracle::standable(map, map.discretize(s.goal.position), h_cells));
  CHECK(oracle::surface_under(map, s.start.position) == doctest::Approx(0.0));
  CHECK(*oracle::surface_under(map, s.goal.position) ==
        doctest::Approx(layout.steps * layout.rise));
  CHECK(s.goal.position.z() - s.start.position.z() == doctest::Approx(layout.steps * layout.rise));
}

TEST_CASE("bundled stairs scenario loads and contains the generated steps") {
  const Scenario s = load_scenario_file(LEGPLAN_SOURCE_DIR "/scenarios/stairs10.json");
  const Scenario generated = make_stairs_scenario({});
  REQUIRE(s.boxes.size() == generated.boxes.size() + 1);
  for (std::size_t i = 0; i < generated.boxes.size(); ++i) {
    CHECK((s.boxes[i].center - generated.boxes[i].center).norm() < 1e-12);
    CHECK((s.boxes[i].half_extents - generated.boxes[i].half_extents).norm() < 1e-12);
  }
  CHECK(s.start == generated.start);
  CHECK(s.goal == generated.goal);
}
