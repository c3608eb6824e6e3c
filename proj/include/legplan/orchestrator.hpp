#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "legplan/global_planner.hpp"
#include "legplan/kinematics.hpp"
#include "legplan/local_planner.hpp"
#include "legplan/maps.hpp"
#include "legplan/world.hpp"

namespace legplan {

enum class EditKind { kAdd, kRemove };

struct ObstacleEdit {
  EditKind kind = EditKind::kAdd;
  BoxObstacle box;  ///< used by kAdd; id < 0 means "assign one"
  int id = -1;      ///< used by kRemove

  static ObstacleEdit add(const BoxObstacle& box);
  static ObstacleEdit remove(int id);
  friend bool operator==(const ObstacleEdit&, const ObstacleEdit&) = default;
};

class UnknownBoxId : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Adds (tagged user_virtual) or removes a box. Returns the id touched.
/// Throws UnknownBoxId for removals of ids not in the world.
int apply_obstacle_edit(Scenario& world, const ObstacleEdit& edit);

/// Edit applied right before the global plan of `iteration` (1-based).
struct ScriptedEdit {
  int iteration = 1;
  ObstacleEdit edit;
  friend bool operator==(const ScriptedEdit&, const ScriptedEdit&) = default;
};
using EditScript = std::vector<ScriptedEdit>;

nlohmann::json edit_to_json(const ObstacleEdit& edit);
ObstacleEdit edit_from_json(const nlohmann::json& doc);
/// {"edits": [{"iteration": 1, "op": "add", "box": {...}}, ...]}
EditScript load_edit_script(std::string_view text);
EditScript load_edit_script_file(const std::filesystem::path& path);
std::string save_edit_script(const EditScript& script);

/// Many producers, one consumer. Order is preserved per producer.
class EditQueue {
 public:
  void push(const ObstacleEdit& edit);
  std::vector<ObstacleEdit> drain();
  bool empty() const;

 private:
  mutable std::mutex mutex_;
  std::deque<ObstacleEdit> pending_;
};

struct IterationMetrics {
  int iteration = 0;
  std::int64_t global_expansions = 0;
  std::int64_t path_length_states = 0;
  int request_count = 0;
  std::int64_t positional_weights_set = 0;
  std::int64_t action_weights_set = 0;
  double wall_time = 0.0;

  friend bool operator==(const IterationMetrics&, const IterationMetrics&) = default;
};

struct RunReport {
  std::vector<IterationMetrics> iterations;
  bool converged = false;
  bool interrupted = false;
  std::vector<RobotState> final_path;
  std::int64_t total_requests = 0;
  std::int64_t total_weights = 0;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Run failure with the iteration it happened in and the report so far.
class RunError : public std::runtime_error {
 public:
  RunError(const std::string& what, int iteration, RunReport partial)
      : std::runtime_error(what), iteration_(iteration), partial_(std::move(partial)) {}
  int iteration() const { return iteration_; }
  const RunReport& partial() const { return partial_; }

 private:
  int iteration_;
  RunReport partial_;
};

/// Hooks for live consumers. All calls come from the orchestrator thread.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  /// Called before each iteration's edits are drained; may block (pause).
  virtual void on_iteration_boundary(int /*next_iteration*/) {}
  virtual void on_world(const Scenario& /*world*/, const VoxelMap& /*map*/) {}
  virtual void on_edit_rejected(const ObstacleEdit& /*edit*/, const std::string& /*why*/) {}
  virtual void on_global_path(int /*iteration*/, const GlobalPath& /*path*/) {}
  virtual void on_iteration(const IterationMetrics& /*metrics*/,
                            const std::vector<RobotState>& /*states*/,
                            const WeightMaps& /*weights*/) {}
};

struct RunOptions {
  int max_iterations = 20;
  const EditScript* script = nullptr;
  EditQueue* queue = nullptr;
  RunObserver* observer = nullptr;
  /// Checked at iteration boundaries and between replans.
  const std::atomic<bool>* cancel = nullptr;
  /// Persisting weights across runs; a fresh pair is used when null.
  WeightMaps* weights = nullptr;
  bool record_time = true;
};

/// The learning loop. Stops once two consecutive iterations have the same
/// |S| and the same request count, or after max_iterations. `world` receives
/// the applied edits. Edits that fail validation, or that would move the grid
/// after the first voxelization, are skipped and reported to the observer.
RunReport run_learning(Scenario& world, const RunOptions& options);

/// One iteration's global/local exchange on a fixed map, without edits.
struct IterationResult {
  std::vector<LocalState> states;
  GlobalPath last_path;
  std::int64_t expansions = 0;
  int requests = 0;
};
IterationResult run_iteration(const Scenario& world, const VoxelMap& map, WeightMaps& weights,
                              const std::atomic<bool>* cancel = nullptr);

/// Applies refine feedback to the weight maps.
void apply_feedback(WeightMaps& weights, const std::vector<WeightUpdate>& feedback);

/// Whether the last two rows satisfy the convergence test.
bool converged(const std::vector<IterationMetrics>& rows);

inline constexpr std::string_view kReportCsvHeader =
    "iteration,expansions,path_states,requests,pos_weights_cum,act_weights_cum,wall_time_s";

void write_report_csv(std::ostream& out, const RunReport& report);
/// A state as its 18 values.
nlohmann::json state_to_json(const RobotState& state);
RobotState state_from_json(const nlohmann::json& doc);
nlohmann::json metrics_to_json(const IterationMetrics& metrics);
IterationMetrics metrics_from_json(const nlohmann::json& doc);
nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& doc);

/// report.csv, report.json, final_path.txt (state records) and world.json
/// (the scenario with its applied edits) in `dir`, which is created.
void write_run_artifacts(const std::filesystem::path& dir, const RunReport& report,
                         const Scenario& world);

}  // namespace legplan
