#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "legplan/maps.hpp"
#include "legplan/orchestrator.hpp"
#include "legplan/world.hpp"

// Wire schema of the session service. Every frame is one JSON object with
// "v" (schema version) and "type"; docs/protocol.md lists the fields.
namespace legplan {

inline constexpr int kProtocolVersion = 1;

/// Rejected frame. `code` is a stable machine-readable token.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& what, std::optional<std::int64_t> seq = {})
      : std::runtime_error(what), code_(std::move(code)), seq_(seq) {}
  const std::string& code() const { return code_; }
  /// The frame's seq when it could be read.
  std::optional<std::int64_t> seq() const { return seq_; }

 private:
  std::string code_;
  std::optional<std::int64_t> seq_;
};

namespace msg {

struct LoadScenario {
  Scenario scenario;
  friend bool operator==(const LoadScenario&, const LoadScenario&) = default;
};
struct SetStart {
  Pose pose;
  friend bool operator==(const SetStart&, const SetStart&) = default;
};
struct SetGoal {
  Pose pose;
  friend bool operator==(const SetGoal&, const SetGoal&) = default;
};
struct AddObstacle {
  BoxObstacle box;  ///< id < 0 lets the session pick one
  friend bool operator==(const AddObstacle&, const AddObstacle&) = default;
};
struct RemoveObstacle {
  int id = -1;
  friend bool operator==(const RemoveObstacle&, const RemoveObstacle&) = default;
};
struct StartRun {
  int max_iterations = 20;
  /// false zeroes wall_time in every reported row.
  bool timing = true;
  friend bool operator==(const StartRun&, const StartRun&) = default;
};
/// paused=false resumes. With before_iteration set, the run stops at that
/// iteration's boundary instead of the next one.
struct PauseRun {
  bool paused = true;
  std::optional<int> before_iteration;
  friend bool operator==(const PauseRun&, const PauseRun&) = default;
};
struct ResetWeights {
  friend bool operator==(const ResetWeights&, const ResetWeights&) = default;
};
struct RequestSnapshot {
  friend bool operator==(const RequestSnapshot&, const RequestSnapshot&) = default;
};

}  // namespace msg

using MessageBody = std::variant<msg::LoadScenario, msg::SetStart, msg::SetGoal, msg::AddObstacle,
                                 msg::RemoveObstacle, msg::StartRun, msg::PauseRun,
                                 msg::ResetWeights, msg::RequestSnapshot>;

/// Client to server.
struct SessionMessage {
  std::int64_t seq = 0;
  MessageBody body;
  friend bool operator==(const SessionMessage&, const SessionMessage&) = default;
};

namespace ev {

struct Ack {
  std::int64_t seq = 0;
  /// Empty when the message was accepted.
  std::string error_code;
  std::string message;
  /// Id assigned by add_obstacle.
  std::optional<int> box_id;

  bool ok() const { return error_code.empty(); }
  friend bool operator==(const Ack&, const Ack&) = default;
};

struct WorldSnapshot {
  Scenario scenario;
  VoxelMap map;
  std::map<DiscreteState, double> positional;
  std::map<ActionWeightMap::Key, double> action;
  std::vector<DiscreteState> global_path;
  /// Last finished iteration of the current or latest run, 0 before any.
  int iteration = 0;
  bool running = false;
  friend bool operator==(const WorldSnapshot&, const WorldSnapshot&) = default;
};

struct GlobalPathCells {
  int run = 0;
  int iteration = 0;
  std::vector<DiscreteState> cells;
  friend bool operator==(const GlobalPathCells&, const GlobalPathCells&) = default;
};

struct LocalStates {
  int run = 0;
  int iteration = 0;
  int chunk_index = 0;
  int chunk_count = 1;
  std::vector<RobotState> states;
  friend bool operator==(const LocalStates&, const LocalStates&) = default;
};

/// Full weight maps after an iteration.
struct WeightUpdate {
  int run = 0;
  int iteration = 0;
  std::map<DiscreteState, double> positional;
  std::map<ActionWeightMap::Key, double> action;
  friend bool operator==(const WeightUpdate&, const WeightUpdate&) = default;
};

struct Metrics {
  int run = 0;
  IterationMetrics row;
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

enum class RunStatus { kConverged, kNotConverged, kInterrupted, kFailed };

struct RunFinished {
  int run = 0;
  RunStatus status = RunStatus::kConverged;
  std::string message;
  RunReport report;
  friend bool operator==(const RunFinished&, const RunFinished&) = default;
};

struct Error {
  std::string text;
  friend bool operator==(const Error&, const Error&) = default;
};

}  // namespace ev

/// Server to client.
using SessionEvent = std::variant<ev::Ack, ev::WorldSnapshot, ev::GlobalPathCells, ev::LocalStates,
                                  ev::WeightUpdate, ev::Metrics, ev::RunFinished, ev::Error>;

std::string to_string(ev::RunStatus status);
ev::RunStatus run_status_from_string(const std::string& s);

/// The "type" token of a message or event.
std::string_view type_name(const MessageBody& body);
std::string_view type_name(const SessionEvent& event);

nlohmann::json message_to_json(const SessionMessage& message);
/// Throws ProtocolError: "bad_frame", "bad_version", "unknown_type",
/// "invalid_payload".
SessionMessage message_from_json(const nlohmann::json& doc);
SessionMessage parse_message(std::string_view text);

nlohmann::json event_to_json(const SessionEvent& event);
SessionEvent event_from_json(const nlohmann::json& doc);
SessionEvent parse_event(std::string_view text);
std::string serialize(const SessionEvent& event);

/// Splits a state sequence into local_states events of at most chunk_size.
std::vector<ev::LocalStates> chunk_states(int run, int iteration,
                                          const std::vector<RobotState>& states,
                                          std::size_t chunk_size);

}  // namespace legplan
