#include "legplan/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace legplan {

using nlohmann::json;

ObstacleEdit ObstacleEdit::add(const BoxObstacle& box) {
  ObstacleEdit e;
  e.kind = EditKind::kAdd;
  e.box = box;
  e.id = box.id;
  return e;
}

ObstacleEdit ObstacleEdit::remove(int id) {
  ObstacleEdit e;
  e.kind = EditKind::kRemove;
  e.id = id;
  return e;
}

int apply_obstacle_edit(Scenario& world, const ObstacleEdit& edit) {
  if (edit.kind == EditKind::kRemove) {
    const auto it = std::find_if(world.boxes.begin(), world.boxes.end(),
                                 [&](const BoxObstacle& b) { return b.id == edit.id; });
    if (it == world.boxes.end()) {
      throw UnknownBoxId("no box with id " + std::to_string(edit.id));
    }
    world.boxes.erase(it);
    return edit.id;
  }
  BoxObstacle box = edit.box;
  box.tag = BoxTag::kUserVirtual;
  box.validate();
  if (box.id < 0) {
    box.id = world.next_box_id();
  } else if (std::any_of(world.boxes.begin(), world.boxes.end(),
                         [&](const BoxObstacle& b) { return b.id == box.id; })) {
    throw ScenarioValidationError("duplicate box id " + std::to_string(box.id));
  }
  world.boxes.push_back(box);
  return box.id;
}

json edit_to_json(const ObstacleEdit& edit) {
  if (edit.kind == EditKind::kRemove) {
    return {{"op", "remove"}, {"id", edit.id}};
  }
  return {{"op", "add"}, {"box", box_to_json(edit.box)}};
}

ObstacleEdit edit_from_json(const json& doc) {
  try {
    const std::string op = doc.at("op").get<std::string>();
    if (op == "add") {
      return ObstacleEdit::add(box_from_json(doc.at("box")));
    }
    if (op == "remove") {
      return ObstacleEdit::remove(doc.at("id").get<int>());
    }
    throw ScenarioParseError("unknown edit op '" + op + "'");
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed edit: ") + e.what());
  }
}

EditScript load_edit_script(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioParseError(std::string("edit script is not JSON: ") + e.what());
  }
  EditScript script;
  try {
    for (const json& item : doc.at("edits")) {
      ScriptedEdit s;
      s.iteration = item.at("iteration").get<int>();
      if (s.iteration < 1) {
        throw ScenarioParseError("edit iteration must be >= 1");
      }
      s.edit = edit_from_json(item);
      script.push_back(s);
    }
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed edit script: ") + e.what());
  }
  return script;
}

EditScript load_edit_script_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioParseError("cannot open " + path.string());
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return load_edit_script(buf.str());
}

std::string save_edit_script(const EditScript& script) {
  json edits = json::array();
  for (const ScriptedEdit& s : script) {
    json item = edit_to_json(s.edit);
    item["iteration"] = s.iteration;
    edits.push_back(item);
  }
  return json{{"edits", edits}}.dump(2) + "\n";
}

void EditQueue::push(const ObstacleEdit& edit) {
  std::lock_guard lock(mutex_);
  pending_.push_back(edit);
}

std::vector<ObstacleEdit> EditQueue::drain() {
  std::lock_guard lock(mutex_);
  std::vector<ObstacleEdit> out(pending_.begin(), pending_.end());
  pending_.clear();
  return out;
}

bool EditQueue::empty() const {
  std::lock_guard lock(mutex_);
  return pending_.empty();
}

void apply_feedback(WeightMaps& weights, const std::vector<WeightUpdate>& feedback) {
  for (const WeightUpdate& u : feedback) {
    if (u.action) {
      weights.action.add(u.state, *u.action, u.delta);
    } else {
      weights.positional.add(u.state, u.delta);
    }
  }
}

bool converged(const std::vector<IterationMetrics>& rows) {
  if (rows.size() < 2) {
    return false;
  }
  const IterationMetrics& a = rows[rows.size() - 2];
  const IterationMetrics& b = rows.back();
  return a.path_length_states == b.path_length_states && a.request_count == b.request_count;
}

namespace {

bool cancelled(const std::atomic<bool>* cancel) {
  return cancel != nullptr && cancel->load();
}

struct IterationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

IterationResult run_iteration(const Scenario& world, const VoxelMap& map, WeightMaps& weights,
                              const std::atomic<bool>* cancel) {
  const double h_th = standing_height_max(world.robot);
  const DiscreteState goal_cell = map.world_to_discrete(world.goal.position);
  IterationResult out;
  out.states.push_back(
      initial_state(world.start.position, world.start.yaw, map, world.robot));
  DiscreteState from = map.world_to_discrete(world.start.position);

  while (true) {
    const PlanResult planned = plan(from, goal_cell, map, weights, h_th);
    out.expansions += planned.expansions;
    if (!planned.ok()) {
      throw IterationFailure("global planner: " + to_string(planned.failure) + " from " +
                             to_string(from));
    }
    out.last_path = *planned.path;
    LocalResult local =
        refine(out.last_path, out.states.back(), world.goal, map, world.robot, world.params, h_th);
    out.states.insert(out.states.end(), local.states.begin() + 1, local.states.end());
    if (local.outcome == LocalOutcome::kSuccess) {
      return out;
    }
    if (local.outcome == LocalOutcome::kStepBudgetExceeded) {
      throw IterationFailure("local planner exceeded " +
                             std::to_string(world.params.max_propagation_steps) + " steps");
    }
    apply_feedback(weights, local.feedback);
    out.requests += local.request_count;
    if (out.requests > world.params.max_requests_per_iteration) {
      throw IterationFailure("more than " +
                             std::to_string(world.params.max_requests_per_iteration) +
                             " replan requests");
    }
    if (cancelled(cancel)) {
      return out;
    }
    from = out.last_path.states[static_cast<std::size_t>(local.rewind_index)];
  }
}

RunReport run_learning(Scenario& world, const RunOptions& options) {
  if (options.max_iterations < 1) {
    throw std::invalid_argument("max_iterations must be >= 1");
  }
  world.validate();
  WeightMaps local_weights;
  WeightMaps& weights = options.weights != nullptr ? *options.weights : local_weights;
  RunObserver fallback;
  RunObserver& observer = options.observer != nullptr ? *options.observer : fallback;

  RunReport report;
  std::optional<VoxelMap> map;
  for (int iteration = 1; iteration <= options.max_iterations; ++iteration) {
    observer.on_iteration_boundary(iteration);
    if (cancelled(options.cancel)) {
      report.interrupted = true;
      break;
    }
    std::vector<ObstacleEdit> edits;
    if (options.script != nullptr) {
      for (const ScriptedEdit& s : *options.script) {
        if (s.iteration == iteration) {
          edits.push_back(s.edit);
        }
      }
    }
    if (options.queue != nullptr) {
      for (const ObstacleEdit& e : options.queue->drain()) {
        edits.push_back(e);
      }
    }
    bool changed = false;
    for (const ObstacleEdit& e : edits) {
      Scenario edited = world;
      try {
        apply_obstacle_edit(edited, e);
      } catch (const std::invalid_argument& err) {
        observer.on_edit_rejected(e, err.what());
        continue;
      }
      // Learned weights are keyed by cell, so the grid must not move mid-run.
      if (map && !(world_grid(edited) == WorldGrid{map->origin(), map->bounds()})) {
        observer.on_edit_rejected(e, "edit would change the world grid");
        continue;
      }
      world = std::move(edited);
      changed = true;
    }
    if (!map || changed) {
      map = voxelize(world);
      observer.on_world(world, *map);
    }

    const auto t0 = std::chrono::steady_clock::now();
    IterationResult result;
    try {
      result = run_iteration(world, *map, weights, options.cancel);
    } catch (const IterationFailure& e) {
      throw RunError("iteration " + std::to_string(iteration) + ": " + e.what(), iteration,
                     report);
    }
    if (cancelled(options.cancel)) {
      report.interrupted = true;
      break;
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    IterationMetrics row;
    row.iteration = iteration;
    row.global_expansions = result.expansions;
    row.path_length_states = static_cast<std::int64_t>(result.states.size());
    row.request_count = result.requests;
    row.positional_weights_set = static_cast<std::int64_t>(weights.positional.log().size());
    row.action_weights_set = static_cast<std::int64_t>(weights.action.log().size());
    row.wall_time = options.record_time ? elapsed : 0.0;
    report.iterations.push_back(row);
    report.total_requests += row.request_count;
    report.total_weights = row.positional_weights_set + row.action_weights_set;
    report.final_path.clear();
    for (const LocalState& s : result.states) {
      report.final_path.push_back(s.robot);
    }
    observer.on_global_path(iteration, result.last_path);
    observer.on_iteration(row, report.final_path, weights);

    if (converged(report.iterations)) {
      report.converged = true;
      break;
    }
  }
  return report;
}

void write_report_csv(std::ostream& out, const RunReport& report) {
  out << kReportCsvHeader << '\n';
  out.precision(std::numeric_limits<double>::max_digits10);
  for (const IterationMetrics& m : report.iterations) {
    out << m.iteration << ',' << m.global_expansions << ',' << m.path_length_states << ','
        << m.request_count << ',' << m.positional_weights_set << ',' << m.action_weights_set
        << ',' << m.wall_time << '\n';
  }
}

json state_to_json(const RobotState& state) {
  const auto v = state.as_vector();
  return std::vector<double>(v.data(), v.data() + v.size());
}

RobotState state_from_json(const json& doc) {
  const auto v = doc.get<std::vector<double>>();
  if (v.size() != 18) {
    throw ScenarioParseError("state needs 18 values");
  }
  return RobotState::from_vector(Eigen::Map<const Eigen::Matrix<double, 18, 1>>(v.data()));
}

json metrics_to_json(const IterationMetrics& m) {
  return {{"iteration", m.iteration},
          {"expansions", m.global_expansions},
          {"path_states", m.path_length_states},
          {"requests", m.request_count},
          {"pos_weights_cum", m.positional_weights_set},
          {"act_weights_cum", m.action_weights_set},
          {"wall_time_s", m.wall_time}};
}

IterationMetrics metrics_from_json(const json& j) {
  IterationMetrics m;
  m.iteration = j.at("iteration").get<int>();
  m.global_expansions = j.at("expansions").get<std::int64_t>();
  m.path_length_states = j.at("path_states").get<std::int64_t>();
  m.request_count = j.at("requests").get<int>();
  m.positional_weights_set = j.at("pos_weights_cum").get<std::int64_t>();
  m.action_weights_set = j.at("act_weights_cum").get<std::int64_t>();
  m.wall_time = j.at("wall_time_s").get<double>();
  return m;
}

json report_to_json(const RunReport& report) {
  json rows = json::array();
  for (const IterationMetrics& m : report.iterations) {
    rows.push_back(metrics_to_json(m));
  }
  json path = json::array();
  for (const RobotState& s : report.final_path) {
    path.push_back(state_to_json(s));
  }
  return {{"iterations", rows},
          {"converged", report.converged},
          {"interrupted", report.interrupted},
          {"total_requests", report.total_requests},
          {"total_weights", report.total_weights},
          {"final_path", path}};
}

RunReport report_from_json(const json& j) {
  RunReport report;
  try {
    for (const json& row : j.at("iterations")) {
      report.iterations.push_back(metrics_from_json(row));
    }
    report.converged = j.at("converged").get<bool>();
    if (j.contains("interrupted")) {
      report.interrupted = j.at("interrupted").get<bool>();
    }
    report.total_requests = j.at("total_requests").get<std::int64_t>();
    report.total_weights = j.at("total_weights").get<std::int64_t>();
    for (const json& item : j.at("final_path")) {
      report.final_path.push_back(state_from_json(item));
    }
  } catch (const json::exception& e) {
    throw ScenarioParseError(std::string("malformed report: ") + e.what());
  }
  return report;
}

void write_run_artifacts(const std::filesystem::path& dir, const RunReport& report,
                         const Scenario& world) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write " + (dir / name).string());
    }
    return out;
  };
  {
    auto out = open("report.csv");
    write_report_csv(out, report);
  }
  {
    auto out = open("report.json");
    out << report_to_json(report).dump(2) << '\n';
  }
  {
    auto out = open("final_path.txt");
    write_state_sequence(out, report.final_path, voxelize(world), world.robot);
  }
  {
    auto out = open("world.json");
    out << save_scenario(world);
  }
}

}  // namespace legplan
