#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>

#include "CLI11.hpp"
#include "json.hpp"

#include "legplan/orchestrator.hpp"
#include "legplan/protocol.hpp"
#include "legplan/server.hpp"
#include "legplan/session.hpp"
#include "legplan/world.hpp"

namespace {

using legplan::Scenario;
using nlohmann::json;

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitBudget = 2;

struct RunArgs {
  std::string scenario;
  std::string edits;
  int max_iterations = 20;
  std::string out = "out";
  bool no_timing = false;
};

struct ServeArgs {
  std::string listen;
  std::string scenario;
  std::string out;
  int threads = 2;
};

struct StairsArgs {
  legplan::StairsLayout layout;
  std::string out;
};

struct MapArgs {
  std::string scenario;
  std::string out;
};

// Structured log line on stderr.
void log_line(json fields) { std::cerr << fields.dump() << std::endl; }

int cmd_run(const RunArgs& args) {
  Scenario world;
  legplan::EditScript script;
  try {
    world = legplan::load_scenario_file(args.scenario);
    if (!args.edits.empty()) {
      script = legplan::load_edit_script_file(args.edits);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }

  legplan::RunOptions options;
  options.max_iterations = args.max_iterations;
  options.script = &script;
  options.record_time = !args.no_timing;
  try {
    const legplan::RunReport report = legplan::run_learning(world, options);
    legplan::write_run_artifacts(args.out, report, world);
    const auto& last = report.iterations.back();
    std::cout << (report.converged ? "converged" : "not converged") << " after "
              << report.iterations.size() << " iterations: " << last.path_length_states
              << " states, " << last.request_count << " requests\n";
    return report.converged ? kExitConverged : kExitBudget;
  } catch (const legplan::RunError& e) {
    std::cerr << "error: " << e.what() << '\n';
    try {
      legplan::write_run_artifacts(args.out, e.partial(), world);
    } catch (const std::exception& inner) {
      std::cerr << "error: " << inner.what() << '\n';
    }
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

void log_event(const legplan::SessionEvent& event) {
  namespace ev = legplan::ev;
  if (const auto* m = std::get_if<ev::Metrics>(&event)) {
    log_line({{"event", "iteration"}, {"run", m->run}, {"row", legplan::metrics_to_json(m->row)}});
  } else if (const auto* f = std::get_if<ev::RunFinished>(&event)) {
    log_line({{"event", "run_finished"},
              {"run", f->run},
              {"status", legplan::to_string(f->status)},
              {"message", f->message}});
  } else if (const auto* e = std::get_if<ev::Error>(&event)) {
    log_line({{"event", "error"}, {"text", e->text}});
  }
}

int cmd_serve(const ServeArgs& args) {
  // Signals are taken synchronously by this thread; every thread started
  // below inherits the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<legplan::Session> session;
  std::unique_ptr<legplan::SessionServer> server;
  try {
    const legplan::ListenAddress address = legplan::parse_listen_address(args.listen);
    session = args.scenario.empty()
                  ? std::make_unique<legplan::Session>()
                  : std::make_unique<legplan::Session>(legplan::load_scenario_file(args.scenario));
    server = std::make_unique<legplan::SessionServer>(*session, address);
    server->set_log([](const std::string& line) { std::cerr << line << std::endl; });
    log_line({{"event", "listening"}, {"host", address.host}, {"port", server->port()}});
  } catch (const std::exception& e) {
    log_line({{"event", "fatal"}, {"text", e.what()}});
    return kExitError;
  }

  auto [monitor_id, monitor] = session->attach();
  std::atomic<bool> stopping{false};
  std::thread monitor_thread([&, queue = monitor] {
    for (;;) {
      auto event = queue->pop(std::chrono::milliseconds(100));
      if (!event) {
        if (stopping && queue->size() == 0) {
          return;
        }
        continue;
      }
      log_event(*event);
      const auto* finished = std::get_if<legplan::ev::RunFinished>(&*event);
      if (finished != nullptr && !args.out.empty()) {
        try {
          const auto snap = session->snapshot();
          if (snap) {
            legplan::write_run_artifacts(args.out, finished->report, snap->scenario);
            log_line({{"event", "report_written"}, {"run", finished->run}, {"dir", args.out}});
          }
        } catch (const std::exception& e) {
          log_line({{"event", "error"}, {"text", e.what()}});
        }
      }
    }
  });
  std::thread io([&] { server->run(args.threads); });

  int received = 0;
  sigwait(&signals, &received);
  log_line({{"event", "shutdown"}, {"signal", received}});
  session->shutdown();
  stopping = true;
  monitor_thread.join();
  server->stop();
  io.join();
  session->detach(monitor_id);
  log_line({{"event", "stopped"}});
  return 0;
}

int cmd_gen_stairs(const StairsArgs& args) {
  try {
    const Scenario scenario = legplan::make_stairs_scenario(args.layout);
    std::ofstream out(args.out, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write " + args.out);
    }
    out << legplan::save_scenario(scenario);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

int cmd_export_map(const MapArgs& args) {
  try {
    const Scenario scenario = legplan::load_scenario_file(args.scenario);
    const legplan::VoxelMap map = legplan::voxelize(scenario);
    std::ofstream out(args.out, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write " + args.out);
    }
    legplan::write_voxel_records(out, map);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Legged-robot path planning with weight-map learning."};
  app.footer(
      "Exit codes of `run`: 0 converged, 2 iteration budget exhausted before convergence, "
      "1 error (unreadable or invalid input, planner failure).");
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the learning loop on a scenario and write reports.");
  run->add_option("--scenario", run_args.scenario, "Scenario JSON")->required();
  run->add_option("--edits", run_args.edits, "Edit script JSON");
  run->add_option("--max-iters", run_args.max_iterations, "Iteration budget")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--out", run_args.out, "Output directory")->capture_default_str();
  run->add_flag("--no-timing", run_args.no_timing, "Write 0 in the wall-time column");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Serve the session protocol over WebSocket.");
  serve->add_option("--listen", serve_args.listen, "host:port")->required();
  serve->add_option("--scenario", serve_args.scenario, "Initial scenario JSON");
  serve->add_option("--out", serve_args.out, "Write each finished run's reports here");
  serve->add_option("--threads", serve_args.threads, "I/O threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  StairsArgs stairs_args;
  auto* stairs = app.add_subcommand("gen-stairs", "Write a stairs scenario.");
  stairs->add_option("--steps", stairs_args.layout.steps)->capture_default_str();
  stairs->add_option("--rise", stairs_args.layout.rise, "Step height (m)")->capture_default_str();
  stairs->add_option("--run", stairs_args.layout.run, "Step depth (m)")->capture_default_str();
  stairs->add_option("--width", stairs_args.layout.width, "Stair width (m)")->capture_default_str();
  stairs->add_option("--out", stairs_args.out, "Scenario JSON to write")->required();

  MapArgs map_args;
  auto* map = app.add_subcommand("export-map", "Write the voxel records of a scenario.");
  map->add_option("--scenario", map_args.scenario, "Scenario JSON")->required();
  map->add_option("--out", map_args.out, "Record file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  if (*run) return cmd_run(run_args);
  if (*serve) return cmd_serve(serve_args);
  if (*stairs) return cmd_gen_stairs(stairs_args);
  return cmd_export_map(map_args);
}
