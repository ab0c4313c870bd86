#pragma once

// Pipeline configuration: one JSON document with a section per stage. Every key
// is optional; unknown keys and wrong types are rejected with a ConfigError.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecsi/coeff_optimizer.hpp"
#include "ecsi/drift_net.hpp"
#include "ecsi/io.hpp"
#include "ecsi/metrics.hpp"
#include "ecsi/nsolve.hpp"
#include "ecsi/sample.hpp"
#include "ecsi/train.hpp"

namespace ecsi {

struct InterpolantOptions {
  int n_coeffs = 5;
  double gamma_scale = 0.1;
  Schedule schedule = Schedule::trigonometric;
  /// Run the Newton optimizer; otherwise emit the base schedule with zero corrections.
  bool optimize = true;
  int quadrature_points = 64;
  double w_energy = 1.0;
  double w_transport = 1.0;
  int max_iterations = 200;
  double grad_tol = 1e-8;
  /// Cap on the number of (x0, x1) pairs; 0 uses every pair.
  int max_pairs = 0;
};

struct SampleOptions {
  int n_realizations = 5;
  /// Model steps per rollout; 0 runs to the end of each reference trajectory.
  int n_steps = 0;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int ns_n = 256;
  NsConfig ns;
  DataGenConfig data;
  DType dtype = DType::f64;
  InterpolantOptions interpolant;
  DriftArch net;
  TrainConfig train;
  SdeConfig sde;
  SampleOptions sample;
  EvaluateOptions metrics;

  /// Copies the root seed into every stage and checks each section.
  void finalize() {
    ns.grid = Grid(ns_n);
    ns.seed = seed;
    train.seed = seed;
    sde.seed = seed;
    ns.validate();
    data.validate(ns.grid);
    net.validate();
    train.validate();
    sde.validate();
    if (interpolant.n_coeffs < 0) throw ConfigError("interpolant.n_coeffs must be >= 0");
    if (interpolant.quadrature_points < 1) throw ConfigError("interpolant.quadrature_points must be >= 1");
    if (interpolant.max_iterations < 0) throw ConfigError("interpolant.max_iterations must be >= 0");
    if (interpolant.max_pairs < 0) throw ConfigError("interpolant.max_pairs must be >= 0");
    if (!(interpolant.gamma_scale >= 0.0)) throw ConfigError("interpolant.gamma_scale must be >= 0");
    if (sample.n_realizations < 1) throw ConfigError("sample.n_realizations must be >= 1");
    if (sample.n_steps < 0) throw ConfigError("sample.n_steps must be >= 0");
    if (metrics.short_horizon < 1) throw ConfigError("metrics.short_horizon must be >= 1");
  }
};

namespace detail {

/// Reads the keys of one JSON object section, rejecting anything not consumed.
class SectionReader {
 public:
  SectionReader(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }
  ~SectionReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
  }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("config key '" + path(key) + "' has the wrong type");
    }
  }

  const Json* section(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline Schedule parse_schedule(const std::string& s) {
  if (s == "trigonometric") return Schedule::trigonometric;
  if (s == "quadratic") return Schedule::quadratic;
  throw ConfigError("interpolant.schedule must be 'trigonometric' or 'quadratic', got '" + s + "'");
}

inline DType parse_dtype(const std::string& s) {
  if (s == "f64") return DType::f64;
  if (s == "f32") return DType::f32;
  throw ConfigError("data.dtype must be 'f64' or 'f32', got '" + s + "'");
}

}  // namespace detail

inline PipelineConfig config_from_json(const Json& root) {
  PipelineConfig c;
  {
    detail::SectionReader r(root, "");
    r.read("seed", c.seed);
    if (const Json* s = r.section("ns")) {
      detail::SectionReader ns(*s, "ns");
      ns.read("n", c.ns_n);
      ns.read("re", c.ns.re);
      ns.read("dt", c.ns.dt);
      ns.read("forcing", c.ns.forcing_on);
      ns.read("forcing_wavenumber", c.ns.forcing_wavenumber);
      ns.read("drag", c.ns.drag);
    }
    if (const Json* s = r.section("data")) {
      detail::SectionReader d(*s, "data");
      d.read("burn_in", c.data.burn_in);
      d.read("stride", c.data.stride);
      d.read("n_train_traj", c.data.n_train_traj);
      d.read("n_test_traj", c.data.n_test_traj);
      d.read("n_train_steps", c.data.n_train_steps);
      d.read("n_test_steps", c.data.n_test_steps);
      d.read("coarsen_factor", c.data.coarsen_factor);
      d.read("ic_peak_wavenumber", c.data.ic_peak_wavenumber);
      d.read("ic_rms", c.data.ic_rms);
      std::string dtype = "f64";
      d.read("dtype", dtype);
      c.dtype = detail::parse_dtype(dtype);
    }
    if (const Json* s = r.section("interpolant")) {
      detail::SectionReader in(*s, "interpolant");
      auto& o = c.interpolant;
      in.read("n_coeffs", o.n_coeffs);
      in.read("gamma_scale", o.gamma_scale);
      std::string sched = "trigonometric";
      in.read("schedule", sched);
      o.schedule = detail::parse_schedule(sched);
      in.read("optimize", o.optimize);
      in.read("quadrature_points", o.quadrature_points);
      in.read("w_energy", o.w_energy);
      in.read("w_transport", o.w_transport);
      in.read("max_iterations", o.max_iterations);
      in.read("grad_tol", o.grad_tol);
      in.read("max_pairs", o.max_pairs);
    }
    if (const Json* s = r.section("net")) {
      detail::SectionReader n(*s, "net");
      n.read("channels", c.net.channels);
      n.read("depth", c.net.depth);
      n.read("kernel", c.net.kernel);
      n.read("embed_dim", c.net.embed_dim);
      n.read("history", c.net.history);
    }
    if (const Json* s = r.section("train")) {
      detail::SectionReader t(*s, "train");
      auto& o = c.train;
      t.read("epochs", o.epochs);
      t.read("batch_size", o.batch_size);
      t.read("lr_max", o.lr_max);
      t.read("warmup_steps", o.warmup_steps);
      t.read("weight_decay", o.weight_decay);
      t.read("early_stop_patience", o.early_stop_patience);
      t.read("val_rollout_steps", o.val_rollout_steps);
      t.read("steps_per_epoch", o.steps_per_epoch);
      t.read("val_windows", o.val_windows);
      t.read("keep_best", o.keep_best);
      t.read("beta1", o.beta1);
      t.read("beta2", o.beta2);
      t.read("adam_eps", o.adam_eps);
    }
    if (const Json* s = r.section("sde")) {
      detail::SectionReader d(*s, "sde");
      d.read("n_pseudo_steps", c.sde.n_pseudo_steps);
      d.read("project", c.sde.project);
    }
    if (const Json* s = r.section("sample")) {
      detail::SectionReader d(*s, "sample");
      d.read("n_realizations", c.sample.n_realizations);
      d.read("n_steps", c.sample.n_steps);
    }
    if (const Json* s = r.section("metrics")) {
      detail::SectionReader m(*s, "metrics");
      m.read("short_horizon", c.metrics.short_horizon);
      m.read("spectrum_steps", c.metrics.spectrum_steps);
      m.read("corr_threshold", c.metrics.corr_threshold);
    }
  }
  c.finalize();
  return c;
}

/// Effective configuration with every key spelled out.
inline Json config_to_json(const PipelineConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["ns"] = {{"n", c.ns_n},
             {"re", c.ns.re},
             {"dt", c.ns.dt},
             {"forcing", c.ns.forcing_on},
             {"forcing_wavenumber", c.ns.forcing_wavenumber},
             {"drag", c.ns.drag}};
  j["data"] = {{"burn_in", c.data.burn_in},
               {"stride", c.data.stride},
               {"n_train_traj", c.data.n_train_traj},
               {"n_test_traj", c.data.n_test_traj},
               {"n_train_steps", c.data.n_train_steps},
               {"n_test_steps", c.data.n_test_steps},
               {"coarsen_factor", c.data.coarsen_factor},
               {"ic_peak_wavenumber", c.data.ic_peak_wavenumber},
               {"ic_rms", c.data.ic_rms},
               {"dtype", c.dtype == DType::f64 ? "f64" : "f32"}};
  const auto& o = c.interpolant;
  j["interpolant"] = {{"n_coeffs", o.n_coeffs},
                      {"gamma_scale", o.gamma_scale},
                      {"schedule", o.schedule == Schedule::trigonometric ? "trigonometric" : "quadratic"},
                      {"optimize", o.optimize},
                      {"quadrature_points", o.quadrature_points},
                      {"w_energy", o.w_energy},
                      {"w_transport", o.w_transport},
                      {"max_iterations", o.max_iterations},
                      {"grad_tol", o.grad_tol},
                      {"max_pairs", o.max_pairs}};
  j["net"] = arch_to_json(c.net);
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr_max", t.lr_max},
                {"warmup_steps", t.warmup_steps},
                {"weight_decay", t.weight_decay},
                {"early_stop_patience", t.early_stop_patience},
                {"val_rollout_steps", t.val_rollout_steps},
                {"steps_per_epoch", t.steps_per_epoch},
                {"val_windows", t.val_windows},
                {"keep_best", t.keep_best},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps}};
  j["sde"] = {{"n_pseudo_steps", c.sde.n_pseudo_steps}, {"project", c.sde.project}};
  j["sample"] = {{"n_realizations", c.sample.n_realizations}, {"n_steps", c.sample.n_steps}};
  j["metrics"] = {{"short_horizon", c.metrics.short_horizon},
                  {"spectrum_steps", c.metrics.spectrum_steps},
                  {"corr_threshold", c.metrics.corr_threshold}};
  return j;
}

inline PipelineConfig read_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(detail::read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

}  // namespace ecsi
