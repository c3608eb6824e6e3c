#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "proc.hpp"

#include "legplan/orchestrator.hpp"
#include "legplan/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource(LEGPLAN_SOURCE_DIR);
const std::string kCli(LEGPLAN_CLI);

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("legplan_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string stairs() { return (kSource / "scenarios" / "stairs10.json").string(); }

}  // namespace

TEST_CASE("run: converged scenario exits 0 and writes every artifact") {
  const fs::path dir = scratch("converged");
  std::string out;
  const int code = proc::run({kCli, "run", "--scenario", stairs(), "--out", (dir / "a").string(),
                              "--no-timing"},
                             dir / "log", &out);
  CHECK(code == 0);
  CHECK(out.rfind("converged after", 0) == 0);
  for (const char* name : {"report.csv", "report.json", "final_path.txt", "world.json"}) {
    CHECK(fs::exists(dir / "a" / name));
  }
  const auto report = legplan::report_from_json(json::parse(proc::slurp(dir / "a" / "report.json")));
  CHECK(report.converged);
  for (const auto& row : report.iterations) CHECK(row.wall_time == 0.0);
}

TEST_CASE("run: two executions without timing are byte-identical") {
  const fs::path dir = scratch("determinism");
  for (const char* sub : {"a", "b"}) {
    REQUIRE(proc::run({kCli, "run", "--scenario", stairs(), "--out", (dir / sub).string(),
                       "--no-timing"},
                      dir / sub) == 0);
  }
  for (const char* name : {"report.csv", "report.json", "final_path.txt", "world.json"}) {
    CAPTURE(name);
    CHECK(proc::slurp(dir / "a" / name) == proc::slurp(dir / "b" / name));
  }
}

TEST_CASE("run: exhausted iteration budget exits 2") {
  const fs::path dir = scratch("budget");
  std::string out;
  CHECK(proc::run({kCli, "run", "--scenario", stairs(), "--max-iters", "1", "--out",
                   (dir / "a").string()},
                  dir / "log", &out) == 2);
  CHECK(out.rfind("not converged after 1 iterations", 0) == 0);
  CHECK(fs::exists(dir / "a" / "report.json"));
}

TEST_CASE("run: bad input exits 1") {
  const fs::path dir = scratch("errors");
  std::string err;
  CHECK(proc::run({kCli, "run", "--scenario", (dir / "missing.json").string()}, dir / "l1",
                  nullptr, &err) == 1);
  CHECK(err.find("error:") != std::string::npos);
  CHECK(proc::run({kCli, "run"}, dir / "l2") == 1);
  CHECK(proc::run({kCli, "run", "--scenario", stairs(), "--max-iters", "0"}, dir / "l3") == 1);
  CHECK(proc::run({kCli, "bogus"}, dir / "l4") == 1);
  CHECK(proc::run({kCli}, dir / "l5") == 1);
  std::ofstream(dir / "junk.json") << "{\"boxes\": 7}";
  CHECK(proc::run({kCli, "run", "--scenario", (dir / "junk.json").string()}, dir / "l6") == 1);
  std::string help;
  CHECK(proc::run({kCli, "--help"}, dir / "l7", &help) == 0);
  CHECK(help.find("Exit codes") != std::string::npos);
}

TEST_CASE("run: unreachable goal exits 1 and keeps the partial report") {
  const fs::path dir = scratch("failure");
  legplan::Scenario s = legplan::load_scenario_file(stairs());
  s.boxes.push_back({99, {0.0, 0.0, 0.5}, {0.05, 1.0, 0.5}, 0.0, legplan::BoxTag::kTerrain});
  std::ofstream(dir / "walled.json") << legplan::save_scenario(s);
  std::string err;
  CHECK(proc::run({kCli, "run", "--scenario", (dir / "walled.json").string(), "--out",
                   (dir / "a").string()},
                  dir / "log", nullptr, &err) == 1);
  CHECK(err.find("iteration 1") != std::string::npos);
  CHECK(fs::exists(dir / "a" / "report.json"));
}

TEST_CASE("run: edit script") {
  const fs::path dir = scratch("edits");
  REQUIRE(proc::run({kCli, "run", "--scenario", stairs(), "--edits",
                     (kSource / "scenarios" / "stairs10_guide.json").string(), "--out",
                     (dir / "a").string(), "--no-timing"},
                    dir / "log") == 0);
  const auto world = legplan::load_scenario(proc::slurp(dir / "a" / "world.json"));
  CHECK(world.boxes.back().tag == legplan::BoxTag::kUserVirtual);
  CHECK(world.boxes.size() == legplan::load_scenario_file(stairs()).boxes.size() + 1);
}

TEST_CASE("gen-stairs writes the generated scenario") {
  const fs::path dir = scratch("stairs");
  REQUIRE(proc::run({kCli, "gen-stairs", "--steps", "4", "--rise", "0.05", "--out",
                     (dir / "s.json").string()},
                    dir / "log") == 0);
  legplan::StairsLayout layout;
  layout.steps = 4;
  layout.rise = 0.05;
  CHECK(legplan::load_scenario(proc::slurp(dir / "s.json")) ==
        legplan::make_stairs_scenario(layout));
  CHECK(proc::run({kCli, "gen-stairs"}, dir / "log2") == 1);
}

TEST_CASE("export-map writes the voxel records") {
  const fs::path dir = scratch("map");
  REQUIRE(proc::run({kCli, "export-map", "--scenario", stairs(), "--out",
                     (dir / "m.txt").string()},
                    dir / "log") == 0);
  std::ostringstream expect;
  legplan::write_voxel_records(expect, legplan::voxelize(legplan::load_scenario_file(stairs())));
  CHECK(proc::slurp(dir / "m.txt") == expect.str());
}
