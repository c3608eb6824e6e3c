#include "legplan/protocol.hpp"

#include <algorithm>

namespace legplan {

using nlohmann::json;

namespace {

template <class... Fs>
struct Overload : Fs... {
  using Fs::operator()...;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) {
    throw ProtocolError("invalid_payload", "expected a 3-vector");
  }
  return {v[0], v[1], v[2]};
}

json cells_json(const std::vector<DiscreteState>& cells) {
  json out = json::array();
  for (const DiscreteState& q : cells) {
    out.push_back({q.x, q.y, q.z});
  }
  return out;
}

std::vector<DiscreteState> cells_from(const json& j) {
  std::vector<DiscreteState> out;
  for (const json& c : j) {
    const auto v = c.get<std::vector<int>>();
    if (v.size() != 3) {
      throw ProtocolError("invalid_payload", "expected a cell [x, y, z]");
    }
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

json positional_json(const std::map<DiscreteState, double>& w) {
  json out = json::array();
  for (const auto& [q, value] : w) {
    out.push_back({q.x, q.y, q.z, value});
  }
  return out;
}

std::map<DiscreteState, double> positional_from(const json& j) {
  std::map<DiscreteState, double> out;
  for (const json& r : j) {
    if (!r.is_array() || r.size() != 4) {
      throw ProtocolError("invalid_payload", "positional record needs 4 values");
    }
    out[{r[0].get<int>(), r[1].get<int>(), r[2].get<int>()}] = r[3].get<double>();
  }
  return out;
}

json action_json(const std::map<ActionWeightMap::Key, double>& w) {
  json out = json::array();
  for (const auto& [key, value] : w) {
    const auto& [q, a] = key;
    out.push_back({q.x, q.y, q.z, a.dx, a.dy, a.dz, value});
  }
  return out;
}

std::map<ActionWeightMap::Key, double> action_from(const json& j) {
  std::map<ActionWeightMap::Key, double> out;
  for (const json& r : j) {
    if (!r.is_array() || r.size() != 7) {
      throw ProtocolError("invalid_payload", "action record needs 7 values");
    }
    const DiscreteState q{r[0].get<int>(), r[1].get<int>(), r[2].get<int>()};
    const Action a{r[3].get<int>(), r[4].get<int>(), r[5].get<int>()};
    out[{q, a}] = r[6].get<double>();
  }
  return out;
}

json voxels_json(const VoxelMap& map) {
  json cells = json::array();
  for (const auto& [q, tag] : map.occupied_cells()) {
    cells.push_back({q.x, q.y, q.z, to_string(tag)});
  }
  const GridBounds& b = map.bounds();
  return {{"resolution", map.resolution()},
          {"origin", vec_json(map.origin())},
          {"bounds", {b.nx, b.ny, b.nz}},
          {"cells", cells}};
}

VoxelMap voxels_from(const json& j) {
  const auto b = j.at("bounds").get<std::vector<int>>();
  if (b.size() != 3) {
    throw ProtocolError("invalid_payload", "bounds needs 3 values");
  }
  VoxelMap map(j.at("resolution").get<double>(), vec_from(j.at("origin")), {b[0], b[1], b[2]});
  for (const json& c : j.at("cells")) {
    if (!c.is_array() || c.size() != 4) {
      throw ProtocolError("invalid_payload", "voxel record needs 4 values");
    }
    const DiscreteState q{c[0].get<int>(), c[1].get<int>(), c[2].get<int>()};
    if (!map.in_bounds(q)) {
      throw ProtocolError("invalid_payload", "voxel outside bounds");
    }
    map.mark(q, cell_tag_from_string(c[3].get<std::string>()));
  }
  return map;
}

json states_json(const std::vector<RobotState>& states) {
  json out = json::array();
  for (const RobotState& s : states) {
    out.push_back(state_to_json(s));
  }
  return out;
}

std::vector<RobotState> states_from(const json& j) {
  std::vector<RobotState> out;
  for (const json& s : j) {
    out.push_back(state_from_json(s));
  }
  return out;
}

json frame(std::string_view type) { return {{"v", kProtocolVersion}, {"type", type}}; }

}  // namespace

std::string to_string(ev::RunStatus status) {
  switch (status) {
    case ev::RunStatus::kConverged:
      return "converged";
    case ev::RunStatus::kNotConverged:
      return "not_converged";
    case ev::RunStatus::kInterrupted:
      return "interrupted";
    case ev::RunStatus::kFailed:
      return "failed";
  }
  return "failed";
}

ev::RunStatus run_status_from_string(const std::string& s) {
  if (s == "converged") return ev::RunStatus::kConverged;
  if (s == "not_converged") return ev::RunStatus::kNotConverged;
  if (s == "interrupted") return ev::RunStatus::kInterrupted;
  if (s == "failed") return ev::RunStatus::kFailed;
  throw ProtocolError("invalid_payload", "unknown run status '" + s + "'");
}

std::string_view type_name(const MessageBody& body) {
  return std::visit(Overload{
                        [](const msg::LoadScenario&) { return "load_scenario"; },
                        [](const msg::SetStart&) { return "set_start"; },
                        [](const msg::SetGoal&) { return "set_goal"; },
                        [](const msg::AddObstacle&) { return "add_obstacle"; },
                        [](const msg::RemoveObstacle&) { return "remove_obstacle"; },
                        [](const msg::StartRun&) { return "start_run"; },
                        [](const msg::PauseRun&) { return "pause_run"; },
                        [](const msg::ResetWeights&) { return "reset_weights"; },
                        [](const msg::RequestSnapshot&) { return "request_snapshot"; },
                    },
                    body);
}

std::string_view type_name(const SessionEvent& event) {
  return std::visit(Overload{
                        [](const ev::Ack&) { return "ack"; },
                        [](const ev::WorldSnapshot&) { return "world_snapshot"; },
                        [](const ev::GlobalPathCells&) { return "global_path"; },
                        [](const ev::LocalStates&) { return "local_states"; },
                        [](const ev::WeightUpdate&) { return "weight_update"; },
                        [](const ev::Metrics&) { return "iteration_metrics"; },
                        [](const ev::RunFinished&) { return "run_finished"; },
                        [](const ev::Error&) { return "error"; },
                    },
                    event);
}

json message_to_json(const SessionMessage& message) {
  json j = frame(type_name(message.body));
  j["seq"] = message.seq;
  std::visit(Overload{
                 [&](const msg::LoadScenario& m) { j["scenario"] = scenario_to_json(m.scenario); },
                 [&](const msg::SetStart& m) { j["pose"] = pose_to_json(m.pose); },
                 [&](const msg::SetGoal& m) { j["pose"] = pose_to_json(m.pose); },
                 [&](const msg::AddObstacle& m) { j["box"] = box_to_json(m.box); },
                 [&](const msg::RemoveObstacle& m) { j["id"] = m.id; },
                 [&](const msg::StartRun& m) {
                   j["max_iterations"] = m.max_iterations;
                   j["timing"] = m.timing;
                 },
                 [&](const msg::PauseRun& m) {
                   j["paused"] = m.paused;
                   if (m.before_iteration) {
                     j["before_iteration"] = *m.before_iteration;
                   }
                 },
                 [](const msg::ResetWeights&) {},
                 [](const msg::RequestSnapshot&) {},
             },
             message.body);
  return j;
}

SessionMessage message_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw ProtocolError("bad_frame", "frame must be a JSON object");
  }
  std::optional<std::int64_t> seq;
  if (const auto it = doc.find("seq"); it != doc.end() && it->is_number_integer()) {
    seq = it->get<std::int64_t>();
  }
  if (!seq) {
    throw ProtocolError("bad_frame", "frame needs an integer seq");
  }
  const auto v = doc.find("v");
  if (v == doc.end() || !v->is_number_integer() || v->get<int>() != kProtocolVersion) {
    throw ProtocolError("bad_version", "unsupported schema version", seq);
  }
  const auto type_it = doc.find("type");
  if (type_it == doc.end() || !type_it->is_string()) {
    throw ProtocolError("bad_frame", "frame needs a string type", seq);
  }
  const std::string type = type_it->get<std::string>();

  SessionMessage m;
  m.seq = *seq;
  try {
    if (type == "load_scenario") {
      m.body = msg::LoadScenario{scenario_from_json(doc.at("scenario"))};
    } else if (type == "set_start") {
      m.body = msg::SetStart{pose_from_json(doc.at("pose"))};
    } else if (type == "set_goal") {
      m.body = msg::SetGoal{pose_from_json(doc.at("pose"))};
    } else if (type == "add_obstacle") {
      m.body = msg::AddObstacle{box_from_json(doc.at("box"))};
    } else if (type == "remove_obstacle") {
      m.body = msg::RemoveObstacle{doc.at("id").get<int>()};
    } else if (type == "start_run") {
      msg::StartRun r;
      r.max_iterations = doc.value("max_iterations", r.max_iterations);
      r.timing = doc.value("timing", r.timing);
      if (r.max_iterations < 1) {
        throw ProtocolError("invalid_payload", "max_iterations must be >= 1", seq);
      }
      m.body = r;
    } else if (type == "pause_run") {
      msg::PauseRun p;
      p.paused = doc.value("paused", true);
      if (const auto it = doc.find("before_iteration"); it != doc.end()) {
        p.before_iteration = it->get<int>();
      }
      m.body = p;
    } else if (type == "reset_weights") {
      m.body = msg::ResetWeights{};
    } else if (type == "request_snapshot") {
      m.body = msg::RequestSnapshot{};
    } else {
      throw ProtocolError("unknown_type", "unknown message type '" + type + "'", seq);
    }
  } catch (const ProtocolError& e) {
    throw ProtocolError(e.code(), e.what(), seq);
  } catch (const json::exception& e) {
    throw ProtocolError("invalid_payload", e.what(), seq);
  } catch (const std::exception& e) {
    // Scenario, box and pose codecs report their own errors.
    throw ProtocolError("invalid_payload", e.what(), seq);
  }
  return m;
}

SessionMessage parse_message(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProtocolError("bad_frame", std::string("not JSON: ") + e.what());
  }
  return message_from_json(doc);
}

json event_to_json(const SessionEvent& event) {
  json j = frame(type_name(event));
  std::visit(Overload{
                 [&](const ev::Ack& a) {
                   j["seq"] = a.seq;
                   j["ok"] = a.ok();
                   if (!a.ok()) {
                     j["error"] = {{"code", a.error_code}, {"message", a.message}};
                   }
                   if (a.box_id) {
                     j["id"] = *a.box_id;
                   }
                 },
                 [&](const ev::WorldSnapshot& s) {
                   j["scenario"] = scenario_to_json(s.scenario);
                   j["voxels"] = voxels_json(s.map);
                   j["positional"] = positional_json(s.positional);
                   j["action"] = action_json(s.action);
                   j["global_path"] = cells_json(s.global_path);
                   j["iteration"] = s.iteration;
                   j["running"] = s.running;
                 },
                 [&](const ev::GlobalPathCells& p) {
                   j["run"] = p.run;
                   j["iteration"] = p.iteration;
                   j["cells"] = cells_json(p.cells);
                 },
                 [&](const ev::LocalStates& c) {
                   j["run"] = c.run;
                   j["iteration"] = c.iteration;
                   j["chunk_index"] = c.chunk_index;
                   j["chunk_count"] = c.chunk_count;
                   j["states"] = states_json(c.states);
                 },
                 [&](const ev::WeightUpdate& w) {
                   j["run"] = w.run;
                   j["iteration"] = w.iteration;
                   j["positional"] = positional_json(w.positional);
                   j["action"] = action_json(w.action);
                 },
                 [&](const ev::Metrics& m) {
                   j["run"] = m.run;
                   j["row"] = metrics_to_json(m.row);
                 },
                 [&](const ev::RunFinished& f) {
                   j["run"] = f.run;
                   j["status"] = to_string(f.status);
                   j["message"] = f.message;
                   j["report"] = report_to_json(f.report);
                 },
                 [&](const ev::Error& e) { j["text"] = e.text; },
             },
             event);
  return j;
}

SessionEvent event_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.value("v", 0) != kProtocolVersion) {
      throw ProtocolError("bad_version", "unsupported schema version");
    }
    const std::string type = doc.at("type").get<std::string>();
    if (type == "ack") {
      ev::Ack a;
      a.seq = doc.at("seq").get<std::int64_t>();
      if (!doc.at("ok").get<bool>()) {
        a.error_code = doc.at("error").at("code").get<std::string>();
        a.message = doc.at("error").at("message").get<std::string>();
      }
      if (const auto it = doc.find("id"); it != doc.end()) {
        a.box_id = it->get<int>();
      }
      return a;
    }
    if (type == "world_snapshot") {
      ev::WorldSnapshot s;
      s.scenario = scenario_from_json(doc.at("scenario"));
      s.map = voxels_from(doc.at("voxels"));
      s.positional = positional_from(doc.at("positional"));
      s.action = action_from(doc.at("action"));
      s.global_path = cells_from(doc.at("global_path"));
      s.iteration = doc.at("iteration").get<int>();
      s.running = doc.at("running").get<bool>();
      return s;
    }
    if (type == "global_path") {
      return ev::GlobalPathCells{doc.at("run").get<int>(), doc.at("iteration").get<int>(),
                                 cells_from(doc.at("cells"))};
    }
    if (type == "local_states") {
      return ev::LocalStates{doc.at("run").get<int>(), doc.at("iteration").get<int>(),
                             doc.at("chunk_index").get<int>(), doc.at("chunk_count").get<int>(),
                             states_from(doc.at("states"))};
    }
    if (type == "weight_update") {
      return ev::WeightUpdate{doc.at("run").get<int>(), doc.at("iteration").get<int>(),
                              positional_from(doc.at("positional")),
                              action_from(doc.at("action"))};
    }
    if (type == "iteration_metrics") {
      return ev::Metrics{doc.at("run").get<int>(), metrics_from_json(doc.at("row"))};
    }
    if (type == "run_finished") {
      return ev::RunFinished{doc.at("run").get<int>(),
                             run_status_from_string(doc.at("status").get<std::string>()),
                             doc.at("message").get<std::string>(),
                             report_from_json(doc.at("report"))};
    }
    if (type == "error") {
      return ev::Error{doc.at("text").get<std::string>()};
    }
    throw ProtocolError("unknown_type", "unknown event type '" + type + "'");
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProtocolError("invalid_payload", e.what());
  }
}

SessionEvent parse_event(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ProtocolError("bad_frame", std::string("not JSON: ") + e.what());
  }
  return event_from_json(doc);
}

std::string serialize(const SessionEvent& event) { return event_to_json(event).dump(); }

std::vector<ev::LocalStates> chunk_states(int run, int iteration,
                                          const std::vector<RobotState>& states,
                                          std::size_t chunk_size) {
  if (chunk_size == 0) {
    throw std::invalid_argument("chunk_size must be positive");
  }
  const std::size_t count = std::max<std::size_t>(1, (states.size() + chunk_size - 1) / chunk_size);
  std::vector<ev::LocalStates> out;
  for (std::size_t k = 0; k < count; ++k) {
    ev::LocalStates c;
    c.run = run;
    c.iteration = iteration;
    c.chunk_index = static_cast<int>(k);
    c.chunk_count = static_cast<int>(count);
    const std::size_t lo = k * chunk_size;
    const std::size_t hi = std::min(states.size(), lo + chunk_size);
    c.states.assign(states.begin() + static_cast<std::ptrdiff_t>(lo),
                    states.begin() + static_cast<std::ptrdiff_t>(hi));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace legplan
