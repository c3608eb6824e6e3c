#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "legplan/protocol.hpp"

using namespace legplan;
using nlohmann::json;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(LEGPLAN_SOURCE_DIR) / "docs" / "golden";

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  return json::parse(in);
}

std::string error_code(std::string_view text) {
  try {
    parse_message(text);
  } catch (const ProtocolError& e) {
    return e.code();
  }
  return "";
}

std::optional<std::int64_t> error_seq(std::string_view text) {
  try {
    parse_message(text);
  } catch (const ProtocolError& e) {
    return e.seq();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("golden frames round-trip unchanged") {
  std::set<std::string> messages, events;
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kGolden)) {
    const std::string name = entry.path().filename().string();
    CAPTURE(name);
    const json doc = read_json(entry.path());
    ++files;
    if (name.rfind("msg_", 0) == 0) {
      const SessionMessage m = message_from_json(doc);
      CHECK(message_to_json(m) == doc);
      CHECK(parse_message(doc.dump()) == m);
      messages.insert(std::string(type_name(m.body)));
    } else {
      REQUIRE(name.rfind("ev_", 0) == 0);
      const SessionEvent e = event_from_json(doc);
      CHECK(event_to_json(e) == doc);
      CHECK(json::parse(serialize(e)) == doc);
      CHECK(parse_event(serialize(e)) == e);
      events.insert(std::string(type_name(e)));
    }
    CHECK(doc.at("v") == kProtocolVersion);
  }
  CHECK(files == 18);
  CHECK(messages.size() == std::variant_size_v<MessageBody>);
  CHECK(events.size() == std::variant_size_v<SessionEvent>);
}

TEST_CASE("golden scenario carries every robot and planner key") {
  const json doc = read_json(kGolden / "msg_load_scenario.json");
  const json& scenario = doc.at("scenario");
  for (const char* key : {"boxes", "start", "goal", "resolution", "margin", "max_cells", "robot",
                          "params"}) {
    CHECK(scenario.contains(key));
  }
  CHECK(scenario.at("params").size() == 11);
  CHECK(scenario.at("robot").contains("joint_limits"));
}

TEST_CASE("message error codes") {
  CHECK(error_code("{") == "bad_frame");
  CHECK(error_code("[1, 2]") == "bad_frame");
  CHECK(error_code(R"({"v":1,"type":"reset_weights"})") == "bad_frame");
  CHECK(error_code(R"({"v":1,"seq":"x","type":"reset_weights"})") == "bad_frame");
  CHECK(error_code(R"({"v":1,"seq":1})") == "bad_frame");
  CHECK(error_code(R"({"seq":1,"type":"reset_weights"})") == "bad_version");
  CHECK(error_code(R"({"v":2,"seq":1,"type":"reset_weights"})") == "bad_version");
  CHECK(error_code(R"({"v":1,"seq":1,"type":"fly"})") == "unknown_type");
  CHECK(error_code(R"({"v":1,"seq":1,"type":"remove_obstacle"})") == "invalid_payload");
  CHECK(error_code(R"({"v":1,"seq":1,"type":"start_run","max_iterations":"many"})") ==
        "invalid_payload");
  CHECK(error_code(R"({"v":1,"seq":1,"type":"start_run","max_iterations":0})") ==
        "invalid_payload");
  CHECK(error_code(R"({"v":1,"seq":1,"type":"set_goal","pose":{"position":[1,2],"yaw":0}})") ==
        "invalid_payload");
  CHECK(error_code(R"({"v":1,"seq":1,"type":"load_scenario","scenario":{"boxes":3}})") ==
        "invalid_payload");

  CHECK_FALSE(error_seq("{").has_value());
  CHECK(error_seq(R"({"v":1,"seq":9,"type":"fly"})") == 9);
  CHECK(error_seq(R"({"v":3,"seq":4,"type":"reset_weights"})") == 4);
}

TEST_CASE("message defaults") {
  const SessionMessage run = parse_message(R"({"v":1,"seq":3,"type":"start_run"})");
  const auto& body = std::get<msg::StartRun>(run.body);
  CHECK(body.max_iterations == 20);
  CHECK(body.timing);
  const SessionMessage pause = parse_message(R"({"v":1,"seq":4,"type":"pause_run"})");
  CHECK(std::get<msg::PauseRun>(pause.body) == msg::PauseRun{true, std::nullopt});
  const SessionMessage add = parse_message(
      R"({"v":1,"seq":5,"type":"add_obstacle","box":{"center":[0,0,0],"half_extents":[1,1,1]}})");
  CHECK(std::get<msg::AddObstacle>(add.body).box.id < 0);
}

TEST_CASE("every message and event survives a round-trip") {
  const SessionMessage msgs[] = {
      {1, msg::SetStart{{{1, 2, 3}, 0.5}}},
      {2, msg::RemoveObstacle{4}},
      {3, msg::PauseRun{false, 6}},
      {4, msg::StartRun{7, false}},
      {5, msg::RequestSnapshot{}},
  };
  for (const SessionMessage& m : msgs) {
    CHECK(parse_message(message_to_json(m).dump()) == m);
  }

  RobotState s;
  s.q_p = {0.1, 0.2, 0.3};
  s.q_r = {0.01, -0.02, 3.0};
  s.theta(2, 1) = 1.0 / 3.0;
  IterationMetrics row{4, 1234, 567, 2, 9, 3, 0.0625};
  RunReport report;
  report.iterations = {row};
  report.final_path = {s, s};
  report.interrupted = true;
  const SessionEvent events[] = {
      ev::Ack{7, "", "", 3},
      ev::GlobalPathCells{1, 2, {{1, 2, 3}, {2, 2, 3}}},
      ev::LocalStates{1, 2, 0, 1, {s}},
      ev::Metrics{2, row},
      ev::RunFinished{2, ev::RunStatus::kInterrupted, "stopped", report},
      ev::Error{"boom"},
  };
  for (const SessionEvent& e : events) {
    CHECK(parse_event(serialize(e)) == e);
  }
  for (auto status : {ev::RunStatus::kConverged, ev::RunStatus::kNotConverged,
                      ev::RunStatus::kInterrupted, ev::RunStatus::kFailed}) {
    CHECK(run_status_from_string(to_string(status)) == status);
  }
  CHECK_THROWS_AS(run_status_from_string("meh"), ProtocolError);
}

TEST_CASE("event decoding rejects malformed frames") {
  CHECK_THROWS_AS(parse_event("nope"), ProtocolError);
  CHECK_THROWS_AS(parse_event(R"({"v":1,"type":"party"})"), ProtocolError);
  CHECK_THROWS_AS(parse_event(R"({"v":0,"type":"error","text":"x"})"), ProtocolError);
  CHECK_THROWS_AS(parse_event(R"({"v":1,"type":"global_path","run":1,"iteration":1,"cells":[[1,2]]})"),
                  ProtocolError);
}

TEST_CASE("state sequences split into ordered chunks") {
  std::vector<RobotState> states(450);
  for (std::size_t i = 0; i < states.size(); ++i) states[i].q_p.x() = static_cast<double>(i);
  const auto chunks = chunk_states(3, 5, states, 200);
  REQUIRE(chunks.size() == 3);
  std::vector<RobotState> joined;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    CHECK(chunks[k].run == 3);
    CHECK(chunks[k].iteration == 5);
    CHECK(chunks[k].chunk_index == static_cast<int>(k));
    CHECK(chunks[k].chunk_count == 3);
    CHECK(chunks[k].states.size() <= 200);
    joined.insert(joined.end(), chunks[k].states.begin(), chunks[k].states.end());
  }
  CHECK(chunks[2].states.size() == 50);
  CHECK(joined == states);

  const auto exact = chunk_states(1, 1, std::vector<RobotState>(400), 200);
  CHECK(exact.size() == 2);
  const auto empty = chunk_states(1, 1, {}, 200);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].states.empty());
  CHECK_THROWS_AS(chunk_states(1, 1, states, 0), std::invalid_argument);
}
