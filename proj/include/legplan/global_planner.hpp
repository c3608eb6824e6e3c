#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "legplan/maps.hpp"

namespace legplan {

/// Global discrete plan G_D with the search statistics that produced it.
struct GlobalPath {
  std::vector<DiscreteState> states;
  double total_cost = 0.0;
  std::int64_t expansions = 0;
};

/// Standing height in whole cells, rounded down.
int standing_height_cells(double h_th, double resolution);

/// Free, supported, and no higher above its support than h_th allows.
bool valid_discrete_state(const DiscreteState& q, const VoxelMap& map, int h_th_cells);

/// Euclidean cell distance to the goal plus the positional weight of q,
/// converted from metres to cells.
double heuristic(const DiscreteState& q, const DiscreteState& goal,
                 const PositionalWeightMap& weights, double resolution);

/// ||a|| plus the action weight of (q, a), converted from metres to cells.
double action_cost(const Action& a, const DiscreteState& q, const ActionWeightMap& weights,
                   double resolution);

enum class PlanFailure { kNone, kInvalidStart, kInvalidGoal, kNoPath };
std::string to_string(PlanFailure failure);

struct PlanResult {
  std::optional<GlobalPath> path;
  PlanFailure failure = PlanFailure::kNone;
  std::int64_t expansions = 0;

  bool ok() const { return path.has_value(); }
};

/// Closed-set A* over the 26-connected grid. Open-list ties are broken by
/// (f, h, lexicographic state), so identical inputs give identical paths and
/// expansion counts. `h_th` is a length in metres.
PlanResult plan(const DiscreteState& start, const DiscreteState& goal, const VoxelMap& map,
                const WeightMaps& weights, double h_th);

/// Cells one per line followed by a `metrics expansions path_cells cost` line.
void write_global_path(std::ostream& out, const GlobalPath& path);

}  // namespace legplan
