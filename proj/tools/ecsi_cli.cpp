// ecsi: command-line driver for the data -> interpolant -> train -> sample -> evaluate pipeline.
// Exit codes: 0 success, 2 configuration or usage error, 1 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ecsi/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ecsi;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string effective_config;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON config file (defaults apply to missing keys)");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  cmd->add_option("--effective-config", c.effective_config, "Write the fully resolved config JSON here");
}

PipelineConfig load_config(const Common& c) {
  Json j = Json::object();
  if (!c.config.empty()) {
    try {
      j = Json::parse(detail::read_file(c.config));
    } catch (const Json::parse_error& e) {
      throw ConfigError("cannot parse config " + c.config + ": " + e.what());
    } catch (const IoError& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  PipelineConfig cfg = config_from_json(j);
  if (!c.effective_config.empty()) detail::write_atomic(c.effective_config, config_to_json(cfg).dump(2) + "\n");
  return cfg;
}

TrajectoryDataset load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("dataset " + path + " does not exist");
  return to_dataset(read_trajectory_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-consistent stochastic interpolants for coarse 2D flow"};
  app.require_subcommand(1);

  Common dns_c, opt_c, train_c, sample_c, eval_c;
  std::string split = "train";
  auto* dns = app.add_subcommand("dns", "Run the DNS, filter to the coarse grid, write a dataset file");
  add_common(dns, dns_c);
  dns->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  std::string opt_data;
  auto* opt = app.add_subcommand("optimize-interpolant", "Fit the interpolant coefficients to a dataset");
  add_common(opt, opt_c);
  opt->add_option("--data", opt_data, "Training dataset file")->required();

  std::string train_data, train_coeffs, train_resume, train_report;
  int epoch_budget = 0;
  auto* trn = app.add_subcommand("train", "Train the drift network; writes a checkpoint and a report CSV");
  add_common(trn, train_c);
  trn->add_option("--data", train_data, "Training dataset file")->required();
  trn->add_option("--coeffs", train_coeffs, "Interpolant coefficient JSON")->required();
  trn->add_option("--resume", train_resume, "Continue from this checkpoint");
  trn->add_option("--epoch-budget", epoch_budget, "Stop after this many epochs in this run (0: no limit)");
  trn->add_option("--report", train_report, "Report CSV (default: <out> with extension .report.csv)");

  std::string smp_ckpt, smp_coeffs, smp_data;
  std::optional<bool> smp_project;
  auto* smp = app.add_subcommand("sample", "Generate rollout ensembles from reference initial states");
  add_common(smp, sample_c);
  smp->add_option("--checkpoint", smp_ckpt, "Checkpoint file")->required();
  smp->add_option("--coeffs", smp_coeffs, "Interpolant coefficient JSON")->required();
  smp->add_option("--data", smp_data, "Reference (test) dataset file")->required();
  smp->add_flag("--project,!--no-project", smp_project, "Override sde.project");

  std::string ev_ens, ev_ref;
  auto* ev = app.add_subcommand("evaluate", "Compare an ensemble against its reference; writes CSV and JSON");
  add_common(ev, eval_c);
  ev->add_option("--ensemble", ev_ens, "Ensemble file from 'sample'")->required();
  ev->add_option("--reference", ev_ref, "Reference dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*dns) {
      const PipelineConfig cfg = load_config(dns_c);
      const TrajectoryFile f = cmd_dns(cfg, split == "train" ? Split::train : Split::test);
      write_trajectory_file(dns_c.out, f);
      std::cout << "wrote " << f.n_traj() << " trajectories x " << f.n_steps() << " states to " << dns_c.out << "\n";
    } else if (*opt) {
      const PipelineConfig cfg = load_config(opt_c);
      const OptimizeResult r = cmd_optimize_interpolant(cfg, load_dataset(opt_data));
      write_coeffs(opt_c.out, r.coeffs);
      std::cout << "status " << to_string(r.status) << ", " << r.iterations << " iterations, objective "
                << detail::fmt(r.objective) << "\n";
      if (r.warning) std::cerr << "warning: optimizer did not converge (" << to_string(r.status) << ")\n";
    } else if (*trn) {
      const PipelineConfig cfg = load_config(train_c);
      std::optional<Checkpoint> resume;
      if (!train_resume.empty()) resume = read_checkpoint(train_resume);
      const Checkpoint ck = cmd_train(cfg, load_dataset(train_data), read_coeffs(train_coeffs), resume,
                                      fs::path(train_c.out), epoch_budget);
      fs::path report = train_report;
      if (report.empty()) {
        report = train_c.out;
        report.replace_extension(".report.csv");
      }
      detail::write_atomic(report, training_report_csv(ck.state.report));
      std::cout << "trained " << ck.state.epochs_done << " epochs; best validation rollout MSE "
                << detail::fmt(ck.state.best_val) << " at epoch " << ck.state.best_epoch << "\n";
    } else if (*smp) {
      PipelineConfig cfg = load_config(sample_c);
      if (smp_project) cfg.sde.project = *smp_project;
      const TrajectoryFile f =
          cmd_sample(cfg, read_checkpoint(smp_ckpt), read_coeffs(smp_coeffs), load_dataset(smp_data));
      write_trajectory_file(sample_c.out, f);
      std::cout << "wrote " << f.n_traj() << " x " << f.n_realizations() << " rollouts of " << f.n_steps()
                << " steps to " << sample_c.out << "\n";
    } else if (*ev) {
      const PipelineConfig cfg = load_config(eval_c);
      if (!fs::exists(ev_ref)) throw ConfigError("reference " + ev_ref + " does not exist");
      const MetricReport r = cmd_evaluate(cfg, read_trajectory_file(ev_ens), load_dataset(ev_ref));
      write_metric_report(eval_c.out, r);
      std::cout << metric_report_csv(r);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
