#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "legplan/geometry.hpp"

namespace legplan {

/// Integer cell coordinate of the trunk in the voxel grid.
struct DiscreteState {
  int x = 0;
  int y = 0;
  int z = 0;

  friend auto operator<=>(const DiscreteState&, const DiscreteState&) = default;
};

std::string to_string(const DiscreteState& q);

/// One move to a neighbouring cell of the 26-neighbourhood.
struct Action {
  int dx = 0;
  int dy = 0;
  int dz = 0;

  friend auto operator<=>(const Action&, const Action&) = default;

  double norm() const;
  /// The move taking `from` to `to`; throws if they are not 26-neighbours.
  static Action between(const DiscreteState& from, const DiscreteState& to);
};

inline DiscreteState operator+(const DiscreteState& q, const Action& a) {
  return {q.x + a.dx, q.y + a.dy, q.z + a.dz};
}

/// All 26 actions in a fixed lexicographic order.
const std::array<Action, 26>& all_actions();

enum class CellTag : std::uint8_t { kFree = 0, kTerrain = 1, kUserVirtual = 2 };

std::string to_string(CellTag tag);
CellTag cell_tag_from_string(const std::string& s);

class OutOfBounds : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct GridBounds {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  bool contains(const DiscreteState& q) const {
    return q.x >= 0 && q.y >= 0 && q.z >= 0 && q.x < nx && q.y < ny && q.z < nz;
  }
  friend bool operator==(const GridBounds&, const GridBounds&) = default;
};

/// Occupancy of the world at a fixed resolution. Cells live in
/// [0, nx) x [0, ny) x [0, nz); cell (i, j, k) covers
/// origin + resolution * [i, i+1) x [j, j+1) x [k, k+1).
/// Storage is dense (one tag byte per cell); occupied cells are enumerated in
/// lexicographic (x, y, z) order.
class VoxelMap {
 public:
  VoxelMap() = default;
  VoxelMap(double resolution, const Vec3& origin, GridBounds bounds);

  double resolution() const { return resolution_; }
  const Vec3& origin() const { return origin_; }
  const GridBounds& bounds() const { return bounds_; }

  bool in_bounds(const DiscreteState& q) const { return bounds_.contains(q); }
  CellTag tag(const DiscreteState& q) const;
  /// Cells outside the bounds read as free.
  bool occupied(const DiscreteState& q) const { return tag(q) != CellTag::kFree; }
  /// A user-virtual tag is never overwritten by a terrain tag.
  void mark(const DiscreteState& q, CellTag tag);

  std::size_t occupied_count() const;
  std::vector<std::pair<DiscreteState, CellTag>> occupied_cells() const;

  /// floor((p - origin) / resolution); no bounds check.
  DiscreteState discretize(const Vec3& p) const;
  /// Checked variant; throws OutOfBounds.
  DiscreteState world_to_discrete(const Vec3& p) const;
  /// Cell centre.
  Vec3 discrete_to_world(const DiscreteState& q) const;
  Aabb cell_box(const DiscreteState& q) const;

  /// Free cells strictly below q before the first occupied cell in its
  /// column; nullopt when the whole column below is free.
  std::optional<int> support_distance(const DiscreteState& q) const;

  /// Height of the top face of the first occupied cell at or below p in its
  /// column; nullopt over empty columns or outside the map footprint.
  std::optional<double> surface_below(const Vec3& p) const;

  friend bool operator==(const VoxelMap&, const VoxelMap&) = default;

 private:
  std::size_t index(const DiscreteState& q) const {
    return (static_cast<std::size_t>(q.x) * bounds_.ny + q.y) * bounds_.nz + q.z;
  }

  double resolution_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  GridBounds bounds_;
  std::vector<std::uint8_t> cells_;
};

inline DiscreteState world_to_discrete(const Vec3& p, const VoxelMap& map) {
  return map.world_to_discrete(p);
}
inline std::optional<int> support_distance(const DiscreteState& q, const VoxelMap& map) {
  return map.support_distance(q);
}

struct PositionalUpdate {
  std::uint64_t seq;
  DiscreteState state;
  double delta;
  double value;
};

struct ActionUpdate {
  std::uint64_t seq;
  DiscreteState state;
  Action action;
  double delta;
  double value;
};

/// Additional cell costs, in metres. Unwritten cells weigh 0.
class PositionalWeightMap {
 public:
  double get(const DiscreteState& q) const;
  /// Increases w(q) by delta (>= 0) and appends a log entry, even for delta 0.
  void add(const DiscreteState& q, double delta);
  void reset();

  const std::map<DiscreteState, double>& entries() const { return weights_; }
  const std::vector<PositionalUpdate>& log() const { return log_; }
  double max_value() const;

 private:
  std::map<DiscreteState, double> weights_;
  std::vector<PositionalUpdate> log_;
  std::uint64_t next_seq_ = 0;
};

/// Additional action costs keyed by (source cell, action), in metres.
class ActionWeightMap {
 public:
  using Key = std::pair<DiscreteState, Action>;

  double get(const DiscreteState& q, const Action& a) const;
  void add(const DiscreteState& q, const Action& a, double delta);
  void reset();

  const std::map<Key, double>& entries() const { return weights_; }
  const std::vector<ActionUpdate>& log() const { return log_; }

 private:
  std::map<Key, double> weights_;
  std::vector<ActionUpdate> log_;
  std::uint64_t next_seq_ = 0;
};

struct WeightMaps {
  PositionalWeightMap positional;
  ActionWeightMap action;

  void reset() {
    positional.reset();
    action.reset();
  }
};

// Record streams shared by the CLI exports, the session service and tests.
// Text, one record per line, doubles printed with round-trip precision.
void write_voxel_records(std::ostream& out, const VoxelMap& map);
VoxelMap read_voxel_records(std::istream& in);
void write_positional_records(std::ostream& out, const PositionalWeightMap& weights);
std::map<DiscreteState, double> read_positional_records(std::istream& in);
void write_action_records(std::ostream& out, const ActionWeightMap& weights);
std::map<ActionWeightMap::Key, double> read_action_records(std::istream& in);

}  // namespace legplan
