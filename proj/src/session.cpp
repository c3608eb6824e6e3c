#include "legplan/session.hpp"

#include <algorithm>

namespace legplan {

namespace {

template <class... Fs>
struct Overload : Fs... {
  using Fs::operator()...;
};

bool replaceable(const SessionEvent& e) {
  return std::holds_alternative<ev::WorldSnapshot>(e) ||
         std::holds_alternative<ev::GlobalPathCells>(e) ||
         std::holds_alternative<ev::WeightUpdate>(e) || std::holds_alternative<ev::LocalStates>(e);
}

ev::Ack ok(std::int64_t seq) { return ev::Ack{seq, "", "", std::nullopt}; }

ev::Ack error(std::int64_t seq, std::string code, std::string text) {
  return ev::Ack{seq, std::move(code), std::move(text), std::nullopt};
}

bool endpoint_valid(const Vec3& p, const VoxelMap& map, int h_cells) {
  const DiscreteState q = map.discretize(p);
  return valid_discrete_state(q, map, h_cells);
}

}  // namespace

ClientQueue::ClientQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

void ClientQueue::drop_one_locked() {
  const auto victim = std::find_if(events_.begin(), events_.end(), [&](const SessionEvent& e) {
    if (const auto* c = std::get_if<ev::LocalStates>(&e)) {
      return ChunkKey{c->run, c->iteration} != delivering_;
    }
    return replaceable(e);
  });
  if (victim == events_.end()) {
    return;
  }
  if (const auto* chunk = std::get_if<ev::LocalStates>(&*victim)) {
    // Take the rest of that iteration too, including chunks not pushed yet.
    const ChunkKey key{chunk->run, chunk->iteration};
    const auto before = events_.size();
    std::erase_if(events_, [&](const SessionEvent& e) {
      const auto* c = std::get_if<ev::LocalStates>(&e);
      return c != nullptr && ChunkKey{c->run, c->iteration} == key;
    });
    dropped_ += before - events_.size();
    discarding_ = key;
    return;
  }
  events_.erase(victim);
  ++dropped_;
}

void ClientQueue::note_popped_locked(const SessionEvent& event) {
  if (const auto* c = std::get_if<ev::LocalStates>(&event)) {
    delivering_ = c->chunk_index + 1 < c->chunk_count
                      ? std::optional<ChunkKey>(ChunkKey{c->run, c->iteration})
                      : std::nullopt;
  }
}

void ClientQueue::push(SessionEvent event) {
  std::function<void()> notify;
  {
    std::lock_guard lock(mutex_);
    if (closed_) {
      return;
    }
    if (const auto* c = std::get_if<ev::LocalStates>(&event)) {
      if (ChunkKey{c->run, c->iteration} == discarding_) {
        ++dropped_;
        return;
      }
    }
    if (events_.size() >= capacity_) {
      drop_one_locked();
    }
    events_.push_back(std::move(event));
    notify = notify_;
  }
  ready_.notify_all();
  if (notify) {
    notify();
  }
}

std::optional<SessionEvent> ClientQueue::try_pop() {
  std::lock_guard lock(mutex_);
  if (events_.empty()) {
    return std::nullopt;
  }
  SessionEvent e = std::move(events_.front());
  events_.pop_front();
  note_popped_locked(e);
  return e;
}

std::optional<SessionEvent> ClientQueue::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  ready_.wait_for(lock, timeout, [&] { return !events_.empty() || closed_; });
  if (events_.empty()) {
    return std::nullopt;
  }
  SessionEvent e = std::move(events_.front());
  events_.pop_front();
  note_popped_locked(e);
  return e;
}

void ClientQueue::set_notify(std::function<void()> notify) {
  std::lock_guard lock(mutex_);
  notify_ = std::move(notify);
}

void ClientQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
    notify_ = nullptr;
  }
  ready_.notify_all();
}

bool ClientQueue::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t ClientQueue::size() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

std::uint64_t ClientQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

// Runs on the worker thread; publishes orchestrator progress to clients.
class Session::Observer : public RunObserver {
 public:
  Observer(Session& session, int run) : s_(session), run_(run) {}

  void on_iteration_boundary(int next_iteration) override {
    std::unique_lock lock(s_.mutex_);
    s_.pause_changed_.wait(lock, [&] {
      const bool holding = s_.paused_ && (!s_.pause_at_ || next_iteration >= *s_.pause_at_);
      return !holding || s_.cancel_.load();
    });
  }

  void on_world(const Scenario& world, const VoxelMap& map) override {
    std::lock_guard lock(s_.mutex_);
    s_.world_ = world;
    s_.map_ = std::make_shared<const VoxelMap>(map);
    s_.pending_removals_.clear();
    s_.pending_adds_.clear();
    if (auto snap = s_.snapshot_locked()) {
      s_.broadcast_locked(std::move(*snap));
    }
  }

  void on_edit_rejected(const ObstacleEdit& edit, const std::string& why) override {
    std::lock_guard lock(s_.mutex_);
    s_.broadcast_locked(ev::Error{"edit " + edit_to_json(edit).dump() + " rejected: " + why});
  }

  void on_global_path(int iteration, const GlobalPath& path) override {
    std::lock_guard lock(s_.mutex_);
    s_.last_path_ = path.states;
    s_.broadcast_locked(ev::GlobalPathCells{run_, iteration, path.states});
  }

  void on_iteration(const IterationMetrics& metrics, const std::vector<RobotState>& states,
                    const WeightMaps& weights) override {
    std::lock_guard lock(s_.mutex_);
    s_.last_iteration_ = metrics.iteration;
    s_.weights_ = weights;
    for (ev::LocalStates& chunk :
         chunk_states(run_, metrics.iteration, states, s_.options_.states_per_chunk)) {
      s_.broadcast_locked(std::move(chunk));
    }
    s_.broadcast_locked(ev::WeightUpdate{run_, metrics.iteration, weights.positional.entries(),
                                         weights.action.entries()});
    s_.broadcast_locked(ev::Metrics{run_, metrics});
  }

 private:
  Session& s_;
  int run_;
};

Session::Session(SessionOptions options) : options_(options) {}

Session::Session(Scenario scenario, SessionOptions options) : options_(options) {
  map_ = std::make_shared<const VoxelMap>(voxelize(scenario));
  next_box_id_ = scenario.next_box_id();
  world_ = std::move(scenario);
}

Session::~Session() { shutdown(); }

std::pair<Session::ClientId, std::shared_ptr<ClientQueue>> Session::attach() {
  std::lock_guard lock(mutex_);
  const ClientId id = next_client_++;
  auto queue = std::make_shared<ClientQueue>(options_.client_queue_capacity);
  if (auto snap = snapshot_locked()) {
    queue->push(std::move(*snap));
  }
  clients_[id] = queue;
  return {id, queue};
}

void Session::detach(ClientId client) {
  std::shared_ptr<ClientQueue> queue;
  {
    std::lock_guard lock(mutex_);
    const auto it = clients_.find(client);
    if (it == clients_.end()) {
      return;
    }
    queue = it->second;
    clients_.erase(it);
  }
  queue->close();
}

void Session::broadcast_locked(const SessionEvent& event) {
  for (auto& [id, queue] : clients_) {
    queue->push(event);
  }
}

void Session::send_locked(ClientId client, SessionEvent event) {
  if (const auto it = clients_.find(client); it != clients_.end()) {
    it->second->push(std::move(event));
  }
}

std::optional<ev::WorldSnapshot> Session::snapshot_locked() const {
  if (!world_ || !map_) {
    return std::nullopt;
  }
  ev::WorldSnapshot s;
  s.scenario = *world_;
  s.map = *map_;
  s.positional = weights_.positional.entries();
  s.action = weights_.action.entries();
  s.global_path = last_path_;
  s.iteration = last_iteration_;
  s.running = running_;
  return s;
}

std::optional<ev::WorldSnapshot> Session::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_locked();
}

std::optional<RunReport> Session::last_report() const {
  std::lock_guard lock(mutex_);
  return last_report_;
}

bool Session::running() const {
  std::lock_guard lock(mutex_);
  return running_;
}

void Session::wait_idle() {
  {
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [&] { return !running_; });
  }
  join_worker();
}

void Session::join_worker() {
  // Only one thread joins; the others see a non-joinable handle.
  std::thread worker;
  {
    std::lock_guard lock(mutex_);
    if (running_ || !worker_.joinable()) {
      return;
    }
    worker = std::move(worker_);
  }
  worker.join();
}

void Session::shutdown() {
  {
    std::lock_guard lock(mutex_);
    cancel_ = true;
  }
  pause_changed_.notify_all();
  wait_idle();
  std::lock_guard lock(mutex_);
  cancel_ = false;
}

ev::Ack Session::handle(ClientId client, const SessionMessage& message) {
  return dispatch(client, message);
}

void Session::handle_text(ClientId client, std::string_view text) {
  SessionMessage message;
  try {
    message = parse_message(text);
  } catch (const ProtocolError& e) {
    std::lock_guard lock(mutex_);
    if (e.seq()) {
      send_locked(client, error(*e.seq(), e.code(), e.what()));
    } else {
      send_locked(client, ev::Error{std::string(e.code()) + ": " + e.what()});
    }
    return;
  }
  dispatch(client, message);
}

ev::Ack Session::set_world(ClientId client, std::int64_t seq, Scenario candidate,
                           bool keep_weights, const char* invalid_code, const char* invalid_text,
                           std::optional<int> box_id) {
  std::shared_ptr<const VoxelMap> map;
  try {
    candidate.validate();
    map = std::make_shared<const VoxelMap>(voxelize(candidate));
  } catch (const std::exception& e) {
    std::string code = "invalid_scenario";
    if (const auto* out = dynamic_cast<const EndpointOutOfBounds*>(&e)) {
      code = invalid_code != nullptr ? invalid_code : out->is_start() ? "invalid_start"
                                                                      : "invalid_goal";
    }
    ev::Ack ack = error(seq, code, e.what());
    std::lock_guard lock(mutex_);
    send_locked(client, ack);
    return ack;
  }
  const int h_cells = standing_height_cells(standing_height_max(candidate.robot), map->resolution());
  std::string code;
  std::string text;
  if (!endpoint_valid(candidate.start.position, *map, h_cells)) {
    code = invalid_code != nullptr ? invalid_code : "invalid_start";
    text = invalid_text != nullptr ? invalid_text : "start invalid";
  } else if (!endpoint_valid(candidate.goal.position, *map, h_cells)) {
    code = invalid_code != nullptr ? invalid_code : "invalid_goal";
    text = invalid_text != nullptr ? invalid_text : "goal invalid";
  }

  std::lock_guard lock(mutex_);
  if (running_) {
    ev::Ack ack = error(seq, "run_in_progress", "a run is in progress");
    send_locked(client, ack);
    return ack;
  }
  if (!code.empty()) {
    ev::Ack ack = error(seq, code, text);
    send_locked(client, ack);
    return ack;
  }
  // Weights are keyed by cell; a moved or resized grid invalidates them.
  const bool same_grid = map_ && map_->origin() == map->origin() && map_->bounds() == map->bounds();
  if (!keep_weights || !same_grid) {
    weights_.reset();
    last_path_.clear();
    last_iteration_ = 0;
  }
  next_box_id_ = std::max(next_box_id_, candidate.next_box_id());
  world_ = std::move(candidate);
  map_ = std::move(map);
  ev::Ack ack = ok(seq);
  ack.box_id = box_id;
  send_locked(client, ack);
  if (auto snap = snapshot_locked()) {
    broadcast_locked(std::move(*snap));
  }
  return ack;
}

ev::Ack Session::dispatch(ClientId client, const SessionMessage& message) {
  const std::int64_t seq = message.seq;
  const auto reply = [&](ev::Ack ack) {
    std::lock_guard lock(mutex_);
    send_locked(client, ack);
    return ack;
  };
  const auto current_world = [&]() -> std::optional<Scenario> {
    std::lock_guard lock(mutex_);
    return world_;
  };

  return std::visit(
      Overload{
          [&](const msg::LoadScenario& m) {
            {
              std::lock_guard lock(mutex_);
              next_box_id_ = 0;
            }
            return set_world(client, seq, m.scenario, false, nullptr, nullptr);
          },
          [&](const msg::SetStart& m) {
            auto w = current_world();
            if (!w) {
              return reply(error(seq, "no_scenario", "no scenario loaded"));
            }
            w->start = m.pose;
            return set_world(client, seq, *w, true, "invalid_start", "start invalid");
          },
          [&](const msg::SetGoal& m) {
            auto w = current_world();
            if (!w) {
              return reply(error(seq, "no_scenario", "no scenario loaded"));
            }
            w->goal = m.pose;
            return set_world(client, seq, *w, true, "invalid_goal", "goal invalid");
          },
          [&](const msg::AddObstacle& m) {
            BoxObstacle box = m.box;
            box.tag = BoxTag::kUserVirtual;
            try {
              box.validate();
            } catch (const std::exception& e) {
              return reply(error(seq, "invalid_box", e.what()));
            }
            std::unique_lock lock(mutex_);
            if (!world_) {
              lock.unlock();
              return reply(error(seq, "no_scenario", "no scenario loaded"));
            }
            if (box.id >= 0) {
              if (std::any_of(world_->boxes.begin(), world_->boxes.end(),
                              [&](const BoxObstacle& b) { return b.id == box.id; }) ||
                  box.id < next_box_id_) {
                lock.unlock();
                return reply(error(seq, "duplicate_id", "box id already used"));
              }
            } else {
              box.id = next_box_id_;
            }
            if (!running_) {
              Scenario w = *world_;
              w.boxes.push_back(box);
              lock.unlock();
              return set_world(client, seq, std::move(w), true, "invalid_scenario",
                               "box leaves start or goal invalid", box.id);
            }
            Scenario w = *world_;
            w.boxes.push_back(box);
            if (!(world_grid(w) == WorldGrid{map_->origin(), map_->bounds()})) {
              lock.unlock();
              return reply(error(seq, "grid_change", "box reaches outside the world grid"));
            }
            next_box_id_ = box.id + 1;
            pending_adds_.push_back(box.id);
            edits_.push(ObstacleEdit::add(box));
            ev::Ack ack = ok(seq);
            ack.box_id = box.id;
            send_locked(client, ack);
            return ack;
          },
          [&](const msg::RemoveObstacle& m) {
            std::unique_lock lock(mutex_);
            if (!world_) {
              lock.unlock();
              return reply(error(seq, "no_scenario", "no scenario loaded"));
            }
            // During a run, boxes queued for addition count and queued
            // removals do not.
            const bool pending_removal = std::find(pending_removals_.begin(),
                                                   pending_removals_.end(),
                                                   m.id) != pending_removals_.end();
            const bool in_world = std::any_of(world_->boxes.begin(), world_->boxes.end(),
                                              [&](const BoxObstacle& b) { return b.id == m.id; });
            const bool known =
                !pending_removal &&
                (in_world || std::find(pending_adds_.begin(), pending_adds_.end(), m.id) !=
                                 pending_adds_.end());
            if (!known) {
              lock.unlock();
              return reply(error(seq, "unknown_box", "no box with id " + std::to_string(m.id)));
            }
            if (running_) {
              pending_removals_.push_back(m.id);
              edits_.push(ObstacleEdit::remove(m.id));
              ev::Ack ack = ok(seq);
              send_locked(client, ack);
              return ack;
            }
            Scenario w = *world_;
            std::erase_if(w.boxes, [&](const BoxObstacle& b) { return b.id == m.id; });
            lock.unlock();
            return set_world(client, seq, std::move(w), true, "invalid_scenario",
                             "removal leaves start or goal invalid");
          },
          [&](const msg::StartRun& m) { return start_run(client, seq, m); },
          [&](const msg::PauseRun& m) {
            {
              std::lock_guard lock(mutex_);
              paused_ = m.paused;
              pause_at_ = m.paused ? m.before_iteration : std::nullopt;
            }
            pause_changed_.notify_all();
            return reply(ok(seq));
          },
          [&](const msg::ResetWeights&) {
            std::lock_guard lock(mutex_);
            if (running_) {
              ev::Ack ack = error(seq, "run_in_progress", "a run is in progress");
              send_locked(client, ack);
              return ack;
            }
            weights_.reset();
            ev::Ack ack = ok(seq);
            send_locked(client, ack);
            if (auto snap = snapshot_locked()) {
              broadcast_locked(std::move(*snap));
            }
            return ack;
          },
          [&](const msg::RequestSnapshot&) {
            std::lock_guard lock(mutex_);
            auto snap = snapshot_locked();
            if (!snap) {
              ev::Ack ack = error(seq, "no_scenario", "no scenario loaded");
              send_locked(client, ack);
              return ack;
            }
            ev::Ack ack = ok(seq);
            send_locked(client, ack);
            send_locked(client, std::move(*snap));
            return ack;
          },
      },
      message.body);
}

ev::Ack Session::start_run(ClientId client, std::int64_t seq, const msg::StartRun& request) {
  join_worker();
  std::lock_guard lock(mutex_);
  if (running_) {
    ev::Ack ack = error(seq, "run_in_progress", "a run is in progress");
    send_locked(client, ack);
    return ack;
  }
  if (!world_) {
    ev::Ack ack = error(seq, "no_scenario", "no scenario loaded");
    send_locked(client, ack);
    return ack;
  }
  running_ = true;
  cancel_ = false;
  const int run_id = ++run_id_;
  last_iteration_ = 0;
  pending_removals_.clear();
  pending_adds_.clear();
  RunOptions options;
  options.max_iterations = request.max_iterations;
  options.record_time = request.timing;
  options.queue = &edits_;
  options.cancel = &cancel_;
  ev::Ack ack = ok(seq);
  send_locked(client, ack);
  worker_ = std::thread(&Session::run_body, this, *world_, options, run_id);
  return ack;
}

void Session::run_body(Scenario world, RunOptions options, int run_id) {
  Observer observer(*this, run_id);
  options.observer = &observer;
  // The worker owns the weight maps while running; observers publish copies.
  WeightMaps weights;
  {
    std::lock_guard lock(mutex_);
    weights = weights_;
  }
  options.weights = &weights;

  ev::RunFinished finished;
  finished.run = run_id;
  try {
    finished.report = run_learning(world, options);
    finished.status = finished.report.interrupted ? ev::RunStatus::kInterrupted
                      : finished.report.converged ? ev::RunStatus::kConverged
                                                  : ev::RunStatus::kNotConverged;
  } catch (const RunError& e) {
    finished.status = ev::RunStatus::kFailed;
    finished.message = e.what();
    finished.report = e.partial();
  } catch (const std::exception& e) {
    finished.status = ev::RunStatus::kFailed;
    finished.message = e.what();
  }

  std::lock_guard lock(mutex_);
  // Edits still queued at the end never reached the world.
  for (const ObstacleEdit& e : edits_.drain()) {
    broadcast_locked(ev::Error{"edit " + edit_to_json(e).dump() + " dropped: run ended"});
  }
  weights_ = std::move(weights);
  world_ = std::move(world);
  next_box_id_ = std::max(next_box_id_, world_->next_box_id());
  pending_removals_.clear();
  pending_adds_.clear();
  paused_ = false;
  pause_at_.reset();
  last_report_ = finished.report;
  running_ = false;
  broadcast_locked(finished);
  idle_.notify_all();
}

}  // namespace legplan
