#include "legplan/global_planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <queue>

namespace legplan {

int standing_height_cells(double h_th, double resolution) {
  // The epsilon absorbs quotients such as 0.3 / 0.05 = 5.999999999999999.
  return static_cast<int>(std::floor(h_th / resolution + 1e-9));
}

bool valid_discrete_state(const DiscreteState& q, const VoxelMap& map, int h_th_cells) {
  if (!map.in_bounds(q) || map.occupied(q)) {
    return false;
  }
  const auto support = map.support_distance(q);
  return support.has_value() && *support <= h_th_cells;
}

double heuristic(const DiscreteState& q, const DiscreteState& goal,
                 const PositionalWeightMap& weights, double resolution) {
  const double dx = goal.x - q.x;
  const double dy = goal.y - q.y;
  const double dz = goal.z - q.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz) + weights.get(q) / resolution;
}

double action_cost(const Action& a, const DiscreteState& q, const ActionWeightMap& weights,
                   double resolution) {
  return a.norm() + weights.get(q, a) / resolution;
}

std::string to_string(PlanFailure failure) {
  switch (failure) {
    case PlanFailure::kNone:
      return "none";
    case PlanFailure::kInvalidStart:
      return "invalid start";
    case PlanFailure::kInvalidGoal:
      return "invalid goal";
    case PlanFailure::kNoPath:
      return "no path";
  }
  return "none";
}

namespace {

struct OpenEntry {
  double f;
  double h;
  DiscreteState q;
};

// Min-heap order on (f, h, q).
struct WorseEntry {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return b.q < a.q;
  }
};

}  // namespace

PlanResult plan(const DiscreteState& start, const DiscreteState& goal, const VoxelMap& map,
                const WeightMaps& weights, double h_th) {
  const double res = map.resolution();
  const int h_cells = standing_height_cells(h_th, res);
  if (!valid_discrete_state(start, map, h_cells)) {
    return {std::nullopt, PlanFailure::kInvalidStart, 0};
  }
  if (!valid_discrete_state(goal, map, h_cells)) {
    return {std::nullopt, PlanFailure::kInvalidGoal, 0};
  }

  const GridBounds& b = map.bounds();
  const auto index = [&](const DiscreteState& q) {
    return (static_cast<std::size_t>(q.x) * b.ny + q.y) * b.nz + q.z;
  };
  const std::size_t n = static_cast<std::size_t>(b.cell_count());
  std::vector<double> g(n, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> parent(n, -1);
  std::vector<bool> closed(n, false);
  // -1 unknown, 0 invalid, 1 valid.
  std::vector<std::int8_t> validity(n, -1);
  const auto is_valid = [&](const DiscreteState& q, std::size_t idx) {
    if (validity[idx] < 0) {
      validity[idx] = valid_discrete_state(q, map, h_cells) ? 1 : 0;
    }
    return validity[idx] == 1;
  };

  std::priority_queue<OpenEntry, std::vector<OpenEntry>, WorseEntry> open;
  g[index(start)] = 0.0;
  {
    const double h = heuristic(start, goal, weights.positional, res);
    open.push({h, h, start});
  }

  std::int64_t expansions = 0;
  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    const std::size_t idx = index(top.q);
    if (closed[idx]) {
      continue;
    }
    closed[idx] = true;
    ++expansions;

    if (top.q == goal) {
      GlobalPath path;
      path.total_cost = g[idx];
      path.expansions = expansions;
      for (std::int64_t cur = static_cast<std::int64_t>(idx); cur >= 0; cur = parent[cur]) {
        const auto u = static_cast<std::size_t>(cur);
        const int z = static_cast<int>(u % b.nz);
        const int y = static_cast<int>((u / b.nz) % b.ny);
        const int x = static_cast<int>(u / (static_cast<std::size_t>(b.nz) * b.ny));
        path.states.push_back({x, y, z});
      }
      std::reverse(path.states.begin(), path.states.end());
      return {std::move(path), PlanFailure::kNone, expansions};
    }

    for (const Action& a : all_actions()) {
      const DiscreteState next = top.q + a;
      if (!map.in_bounds(next)) {
        continue;
      }
      const std::size_t nidx = index(next);
      if (closed[nidx] || !is_valid(next, nidx)) {
        continue;
      }
      const double candidate = g[idx] + action_cost(a, top.q, weights.action, res);
      if (candidate < g[nidx]) {
        g[nidx] = candidate;
        parent[nidx] = static_cast<std::int64_t>(idx);
        const double h = heuristic(next, goal, weights.positional, res);
        open.push({candidate + h, h, next});
      }
    }
  }
  return {std::nullopt, PlanFailure::kNoPath, expansions};
}

void write_global_path(std::ostream& out, const GlobalPath& path) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "global_path 1 " << path.states.size() << '\n';
  for (const auto& q : path.states) {
    out << q.x << ' ' << q.y << ' ' << q.z << '\n';
  }
  out << "metrics " << path.expansions << ' ' << path.states.size() << ' ' << path.total_cost
      << '\n';
}

}  // namespace legplan
