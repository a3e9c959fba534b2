#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "cacc/sim.hpp"

namespace {

std::vector<cacc::LeaderPhase> parse_phases(const std::string& s) {
  std::vector<cacc::LeaderPhase> phases;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find(',', pos);
    if (end == std::string::npos) end = s.size();
    const std::string tok = s.substr(pos, end - pos);
    double start = 0.0, speed = 0.0;
    if (std::sscanf(tok.c_str(), "%lf:%lf", &start, &speed) != 2)
      throw CLI::ValidationError("leader_phases",
                                 "expected start:speed[,start:speed...]");
    phases.push_back({start, speed});
    pos = end + 1;
  }
  return phases;
}

cacc::Policy parse_policy(const std::string& s) {
  if (s == "dhmpc") return cacc::Policy::kDhmpc;
  if (s == "dhsmpc") return cacc::Policy::kDhsmpc;
  if (s == "dh-dhsmpc") return cacc::Policy::kDhDhsmpc;
  throw CLI::ValidationError("policy", "must be dhmpc, dhsmpc, or dh-dhsmpc");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal CACC platoon simulator"};
  app.require_subcommand(1);
  auto* cmd = app.add_subcommand("run", "Simulate one scenario");

  cacc::ScenarioConfig cfg;
  std::string out_dir;
  std::string policy = "dhmpc";
  std::string phases;
  double loss = 0.0;

  cmd->set_config("--config", "", "Scenario file, key=value per line");
  cmd->add_option("--out", out_dir, "Output directory")->required();
  cmd->add_option("--policy", policy, "dhmpc | dhsmpc | dh-dhsmpc")
      ->capture_default_str();
  cmd->add_option("--seed", cfg.channel.seed, "Channel RNG seed")
      ->capture_default_str();
  cmd->add_option("--tau,--time_gap_s", cfg.params.time_gap_s,
                  "Headway time gap [s]")
      ->capture_default_str();
  cmd->add_option("--tc,--comm_period_s", cfg.channel.comm_period_s,
                  "Broadcast period [s]")
      ->capture_default_str();
  auto* loss_opt =
      cmd->add_option("--loss", loss, "Packet loss probability in [0, 1]");
  auto* ps_opt = cmd->add_option("--success_prob", cfg.channel.success_prob,
                                 "Delivery probability in [0, 1]");
  loss_opt->excludes(ps_opt);
  cmd->add_flag("--halt-on-collision", cfg.halt_on_collision,
                "Stop the run at the first collision");

  cmd->add_option("--vehicle_count", cfg.vehicle_count)->capture_default_str();
  cmd->add_option("--horizon", cfg.horizon)->capture_default_str();
  cmd->add_option("--ts", cfg.ts, "Sample period [s]")->capture_default_str();
  cmd->add_option("--duration_s", cfg.duration_s)->capture_default_str();
  cmd->add_option("--initial_speed", cfg.initial_speed)->capture_default_str();
  cmd->add_option("--leader_phases", phases,
                  "start:speed[,start:speed...] e.g. 0:27,15:0,30:25");
  cmd->add_option("--chance_bound", cfg.chance_bound)->capture_default_str();
  cmd->add_option("--node_budget", cfg.node_budget)->capture_default_str();
  cmd->add_flag("--broadcast_gp,!--no-broadcast_gp", cfg.broadcast_gp);
  cmd->add_flag("--refit_local_gp", cfg.refit_local_gp);
  cmd->add_option("--leader_speed_weight", cfg.leader_speed_weight)
      ->capture_default_str();
  cmd->add_option("--leader_accel_weight", cfg.leader_accel_weight)
      ->capture_default_str();

  cmd->add_option("--length_m", cfg.params.length_m)->capture_default_str();
  cmd->add_option("--standstill_gap_m", cfg.params.standstill_gap_m)
      ->capture_default_str();
  cmd->add_option("--driveline_rate", cfg.params.driveline_rate)
      ->capture_default_str();
  cmd->add_option("--accel_min", cfg.params.accel_min)->capture_default_str();
  cmd->add_option("--accel_max", cfg.params.accel_max)->capture_default_str();
  cmd->add_option("--input_min", cfg.params.input_min)->capture_default_str();
  cmd->add_option("--input_max", cfg.params.input_max)->capture_default_str();
  cmd->add_option("--speed_max", cfg.params.speed_max)->capture_default_str();
  cmd->add_option("--brake_speed_floor", cfg.params.brake_speed_floor)
      ->capture_default_str();
  cmd->add_option("--brake_gap_slack", cfg.params.brake_gap_slack)
      ->capture_default_str();

  cmd->add_option("--weight_gap", cfg.weights.state[0])->capture_default_str();
  cmd->add_option("--weight_speed", cfg.weights.state[1])
      ->capture_default_str();
  cmd->add_option("--weight_accel", cfg.weights.state[2])
      ->capture_default_str();
  cmd->add_option("--weight_input", cfg.weights.input)->capture_default_str();
  cmd->add_option("--weight_prob", cfg.weights.prob)->capture_default_str();
  cmd->add_option("--reg", cfg.weights.reg)->capture_default_str();
  cmd->add_option("--gap_err_max", cfg.limits.gap_err_max)
      ->capture_default_str();
  cmd->add_option("--eps", cfg.limits.eps)->capture_default_str();
  cmd->add_option("--gap_margin", cfg.limits.gap_margin)
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.policy = parse_policy(policy);
    if (!phases.empty()) cfg.leader_phases = parse_phases(phases);
    if (loss_opt->count() > 0) {
      if (loss < 0.0 || loss > 1.0)
        throw std::invalid_argument("loss probability must lie in [0, 1]");
      cfg.channel.success_prob = 1.0 - loss;
    }
    cfg.validate();

    const cacc::SimResult res = cacc::run(cfg);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
      std::ofstream f(fs::path(out_dir) / "trace.csv");
      if (!f) throw std::runtime_error("cannot write trace.csv");
      cacc::write_trace_csv(res.trace, f);
    }
    {
      std::ofstream f(fs::path(out_dir) / "diagnostics.csv");
      if (!f) throw std::runtime_error("cannot write diagnostics.csv");
      cacc::write_diagnostics_csv(res.trace, f);
    }
    {
      std::ofstream f(fs::path(out_dir) / "metrics.txt");
      if (!f) throw std::runtime_error("cannot write metrics.txt");
      cacc::write_metrics(res.metrics, f);
    }

    std::printf("%s: %d vehicles, %d steps, min gap %.3f m, %s\n",
                cacc::policy_name(cfg.policy), cfg.vehicle_count, cfg.steps(),
                res.metrics.min_gap_m,
                res.metrics.collision ? "COLLISION" : "no collision");
    return res.metrics.collision ? 2 : 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
