#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <thread>

#include "legplan/orchestrator.hpp"
#include "legplan/protocol.hpp"

namespace legplan {

/// Outgoing events of one client. push never blocks: past `capacity` the
/// oldest event that a later snapshot can replace is dropped (world
/// snapshots, global paths, weight updates, local state chunks). Acks,
/// metrics rows, run_finished and errors are never dropped. Chunks of one
/// iteration are delivered all or none.
class ClientQueue {
 public:
  explicit ClientQueue(std::size_t capacity);

  void push(SessionEvent event);
  std::optional<SessionEvent> try_pop();
  /// Waits up to `timeout`; nullopt on timeout or once closed and empty.
  std::optional<SessionEvent> pop(std::chrono::milliseconds timeout);
  /// Called after every push, outside the queue lock.
  void set_notify(std::function<void()> notify);
  void close();
  bool closed() const;
  std::size_t size() const;
  std::uint64_t dropped() const;

 private:
  using ChunkKey = std::pair<int, int>;  // run, iteration

  void drop_one_locked();
  void note_popped_locked(const SessionEvent& event);

  const std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<SessionEvent> events_;
  std::function<void()> notify_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
  // Iteration whose chunks are partly delivered, and one whose chunks were dropped.
  std::optional<ChunkKey> delivering_;
  std::optional<ChunkKey> discarding_;
};

struct SessionOptions {
  std::size_t client_queue_capacity = 256;
  std::size_t states_per_chunk = 200;
};

/// One world, one learning loop at a time, any number of clients. Message
/// handlers may be called from several threads.
class Session {
 public:
  using ClientId = std::uint64_t;

  explicit Session(SessionOptions options = {});
  explicit Session(Scenario scenario, SessionOptions options = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// The new client's queue starts with a world snapshot when a world is
  /// loaded.
  std::pair<ClientId, std::shared_ptr<ClientQueue>> attach();
  void detach(ClientId client);

  /// Applies or enqueues the message and pushes its ack to `client` (0 for
  /// none) before any event the message causes. Returns the ack.
  ev::Ack handle(ClientId client, const SessionMessage& message);
  /// Parses a frame and handles it; malformed frames get an error ack when
  /// their seq is readable and an error event otherwise.
  void handle_text(ClientId client, std::string_view text);

  bool running() const;
  /// Blocks until no run is active.
  void wait_idle();
  /// Cancels and joins any run; its run_finished reports "interrupted".
  void shutdown();

  /// Current world, weights and last global path.
  std::optional<ev::WorldSnapshot> snapshot() const;
  /// Report of the last finished run.
  std::optional<RunReport> last_report() const;

 private:
  class Observer;
  friend class Observer;

  ev::Ack dispatch(ClientId client, const SessionMessage& message);
  ev::Ack set_world(ClientId client, std::int64_t seq, Scenario candidate, bool keep_weights,
                    const char* invalid_code, const char* invalid_text,
                    std::optional<int> box_id = std::nullopt);
  ev::Ack start_run(ClientId client, std::int64_t seq, const msg::StartRun& request);
  void run_body(Scenario world, RunOptions options, int run_id);
  std::optional<ev::WorldSnapshot> snapshot_locked() const;
  void broadcast_locked(const SessionEvent& event);
  void send_locked(ClientId client, SessionEvent event);
  void join_worker();

  const SessionOptions options_;
  mutable std::mutex mutex_;
  std::map<ClientId, std::shared_ptr<ClientQueue>> clients_;
  ClientId next_client_ = 1;

  std::optional<Scenario> world_;
  std::shared_ptr<const VoxelMap> map_;
  WeightMaps weights_;
  std::vector<DiscreteState> last_path_;
  int last_iteration_ = 0;
  std::optional<RunReport> last_report_;

  // Run state.
  bool running_ = false;
  int run_id_ = 0;
  int next_box_id_ = 0;
  std::vector<int> pending_removals_;
  std::vector<int> pending_adds_;
  EditQueue edits_;
  std::atomic<bool> cancel_{false};
  bool paused_ = false;
  std::optional<int> pause_at_;
  std::condition_variable pause_changed_;
  std::condition_variable idle_;
  std::thread worker_;
};

}  // namespace legplan
