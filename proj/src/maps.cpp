#include "legplan/maps.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace legplan {

namespace {

std::ostream& precise(std::ostream& out) {
  out.precision(std::numeric_limits<double>::max_digits10);
  return out;
}

void expect_header(std::istream& in, const std::string& name) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != name || version != 1) {
    throw std::runtime_error("expected '" + name + " 1' record header");
  }
}

}  // namespace

std::string to_string(const DiscreteState& q) {
  std::ostringstream out;
  out << '(' << q.x << ", " << q.y << ", " << q.z << ')';
  return out.str();
}

double Action::norm() const {
  return std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz));
}

Action Action::between(const DiscreteState& from, const DiscreteState& to) {
  const Action a{to.x - from.x, to.y - from.y, to.z - from.z};
  if (std::abs(a.dx) > 1 || std::abs(a.dy) > 1 || std::abs(a.dz) > 1 || a == Action{}) {
    throw std::invalid_argument("cells " + to_string(from) + " and " + to_string(to) +
                                " are not 26-neighbours");
  }
  return a;
}

const std::array<Action, 26>& all_actions() {
  static const std::array<Action, 26> actions = [] {
    std::array<Action, 26> out{};
    std::size_t n = 0;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx != 0 || dy != 0 || dz != 0) {
            out[n++] = Action{dx, dy, dz};
          }
        }
      }
    }
    return out;
  }();
  return actions;
}

std::string to_string(CellTag tag) {
  switch (tag) {
    case CellTag::kFree:
      return "free";
    case CellTag::kTerrain:
      return "terrain";
    case CellTag::kUserVirtual:
      return "user_virtual";
  }
  return "free";
}

CellTag cell_tag_from_string(const std::string& s) {
  if (s == "terrain") return CellTag::kTerrain;
  if (s == "user_virtual") return CellTag::kUserVirtual;
  if (s == "free") return CellTag::kFree;
  throw std::invalid_argument("unknown cell tag '" + s + "'");
}

VoxelMap::VoxelMap(double resolution, const Vec3& origin, GridBounds bounds)
    : resolution_(resolution), origin_(origin), bounds_(bounds) {
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("voxel resolution must be positive");
  }
  if (bounds.nx < 0 || bounds.ny < 0 || bounds.nz < 0) {
    throw std::invalid_argument("negative grid bounds");
  }
  cells_.assign(static_cast<std::size_t>(bounds.cell_count()), 0);
}

CellTag VoxelMap::tag(const DiscreteState& q) const {
  if (!in_bounds(q)) {
    return CellTag::kFree;
  }
  return static_cast<CellTag>(cells_[index(q)]);
}

void VoxelMap::mark(const DiscreteState& q, CellTag tag) {
  if (!in_bounds(q)) {
    throw OutOfBounds("cell " + to_string(q) + " outside voxel map");
  }
  auto& cell = cells_[index(q)];
  cell = std::max(cell, static_cast<std::uint8_t>(tag));
}

std::size_t VoxelMap::occupied_count() const {
  return static_cast<std::size_t>(
      std::count_if(cells_.begin(), cells_.end(), [](std::uint8_t c) { return c != 0; }));
}

std::vector<std::pair<DiscreteState, CellTag>> VoxelMap::occupied_cells() const {
  std::vector<std::pair<DiscreteState, CellTag>> out;
  for (int x = 0; x < bounds_.nx; ++x) {
    for (int y = 0; y < bounds_.ny; ++y) {
      for (int z = 0; z < bounds_.nz; ++z) {
        const DiscreteState q{x, y, z};
        if (const auto t = static_cast<CellTag>(cells_[index(q)]); t != CellTag::kFree) {
          out.emplace_back(q, t);
        }
      }
    }
  }
  return out;
}

DiscreteState VoxelMap::discretize(const Vec3& p) const {
  const Vec3 rel = (p - origin_) / resolution_;
  return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
          static_cast<int>(std::floor(rel.z()))};
}

DiscreteState VoxelMap::world_to_discrete(const Vec3& p) const {
  const DiscreteState q = discretize(p);
  if (!in_bounds(q)) {
    std::ostringstream msg;
    msg << "point (" << p.x() << ", " << p.y() << ", " << p.z() << ") outside voxel map";
    throw OutOfBounds(msg.str());
  }
  return q;
}

Vec3 VoxelMap::discrete_to_world(const DiscreteState& q) const {
  return origin_ + resolution_ * Vec3(q.x + 0.5, q.y + 0.5, q.z + 0.5);
}

Aabb VoxelMap::cell_box(const DiscreteState& q) const {
  const Vec3 lo = origin_ + resolution_ * Vec3(q.x, q.y, q.z);
  return {lo, lo + Vec3::Constant(resolution_)};
}

std::optional<int> VoxelMap::support_distance(const DiscreteState& q) const {
  int free_cells = 0;
  for (int z = q.z - 1; z >= 0; --z) {
    if (occupied({q.x, q.y, z})) {
      return free_cells;
    }
    ++free_cells;
  }
  return std::nullopt;
}

std::optional<double> VoxelMap::surface_below(const Vec3& p) const {
  const DiscreteState c = discretize(p);
  if (c.x < 0 || c.y < 0 || c.x >= bounds_.nx || c.y >= bounds_.ny) {
    return std::nullopt;
  }
  for (int z = std::min(c.z, bounds_.nz - 1); z >= 0; --z) {
    if (occupied({c.x, c.y, z})) {
      return origin_.z() + resolution_ * (z + 1);
    }
  }
  return std::nullopt;
}

double PositionalWeightMap::get(const DiscreteState& q) const {
  const auto it = weights_.find(q);
  return it == weights_.end() ? 0.0 : it->second;
}

void PositionalWeightMap::add(const DiscreteState& q, double delta) {
  if (!(delta >= 0.0)) {
    throw std::invalid_argument("positional weight increment must be non-negative");
  }
  double& w = weights_[q];
  w += delta;
  log_.push_back({next_seq_++, q, delta, w});
}

void PositionalWeightMap::reset() {
  weights_.clear();
  log_.clear();
}

double PositionalWeightMap::max_value() const {
  double m = 0.0;
  for (const auto& [q, w] : weights_) {
    m = std::max(m, w);
  }
  return m;
}

double ActionWeightMap::get(const DiscreteState& q, const Action& a) const {
  const auto it = weights_.find({q, a});
  return it == weights_.end() ? 0.0 : it->second;
}

void ActionWeightMap::add(const DiscreteState& q, const Action& a, double delta) {
  if (!(delta >= 0.0)) {
    throw std::invalid_argument("action weight increment must be non-negative");
  }
  double& w = weights_[{q, a}];
  w += delta;
  log_.push_back({next_seq_++, q, a, delta, w});
}

void ActionWeightMap::reset() {
  weights_.clear();
  log_.clear();
}

void write_voxel_records(std::ostream& out, const VoxelMap& map) {
  precise(out);
  const auto cells = map.occupied_cells();
  const auto& b = map.bounds();
  out << "voxels 1 " << map.resolution() << ' ' << map.origin().x() << ' ' << map.origin().y()
      << ' ' << map.origin().z() << ' ' << b.nx << ' ' << b.ny << ' ' << b.nz << ' '
      << cells.size() << '\n';
  for (const auto& [q, tag] : cells) {
    out << q.x << ' ' << q.y << ' ' << q.z << ' ' << to_string(tag) << '\n';
  }
}

VoxelMap read_voxel_records(std::istream& in) {
  expect_header(in, "voxels");
  double res = 0;
  Vec3 origin;
  GridBounds b;
  std::size_t count = 0;
  if (!(in >> res >> origin.x() >> origin.y() >> origin.z() >> b.nx >> b.ny >> b.nz >> count)) {
    throw std::runtime_error("malformed voxel header");
  }
  VoxelMap map(res, origin, b);
  for (std::size_t i = 0; i < count; ++i) {
    DiscreteState q;
    std::string tag;
    if (!(in >> q.x >> q.y >> q.z >> tag)) {
      throw std::runtime_error("truncated voxel records");
    }
    map.mark(q, cell_tag_from_string(tag));
  }
  return map;
}

void write_positional_records(std::ostream& out, const PositionalWeightMap& weights) {
  precise(out);
  out << "positional_weights 1 " << weights.entries().size() << '\n';
  for (const auto& [q, w] : weights.entries()) {
    out << q.x << ' ' << q.y << ' ' << q.z << ' ' << w << '\n';
  }
}

std::map<DiscreteState, double> read_positional_records(std::istream& in) {
  expect_header(in, "positional_weights");
  std::size_t count = 0;
  in >> count;
  std::map<DiscreteState, double> out;
  for (std::size_t i = 0; i < count; ++i) {
    DiscreteState q;
    double w = 0;
    if (!(in >> q.x >> q.y >> q.z >> w)) {
      throw std::runtime_error("truncated positional weight records");
    }
    out[q] = w;
  }
  return out;
}

void write_action_records(std::ostream& out, const ActionWeightMap& weights) {
  precise(out);
  out << "action_weights 1 " << weights.entries().size() << '\n';
  for (const auto& [key, w] : weights.entries()) {
    const auto& [q, a] = key;
    out << q.x << ' ' << q.y << ' ' << q.z << ' ' << a.dx << ' ' << a.dy << ' ' << a.dz << ' '
        << w << '\n';
  }
}

std::map<ActionWeightMap::Key, double> read_action_records(std::istream& in) {
  expect_header(in, "action_weights");
  std::size_t count = 0;
  in >> count;
  std::map<ActionWeightMap::Key, double> out;
  for (std::size_t i = 0; i < count; ++i) {
    DiscreteState q;
    Action a;
    double w = 0;
    if (!(in >> q.x >> q.y >> q.z >> a.dx >> a.dy >> a.dz >> w)) {
      throw std::runtime_error("truncated action weight records");
    }
    out[{q, a}] = w;
  }
  return out;
}

}  // namespace legplan
