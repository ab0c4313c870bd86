#pragma once

// On-disk formats. All writes go to a temporary sibling and are renamed into
// place, so readers never see a partial file.
//
// Trajectory file (datasets and rollout ensembles), little-endian:
//   "ECSI" | u32 version | u32 nx | u32 ny | u32 n_channels (2) | u32 n_traj | u32 n_steps
//   | u32 n_realizations | 4-byte dtype tag "f64\0" or "f32\0"
//   | payload [traj][realization][step][channel][y][x]
//   | JSON metadata | u64 JSON byte length
//
// Checkpoint file: "ECSC" | u32 version | u64 JSON length | JSON | f64 arrays listed in the JSON.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/drift_net.hpp"
#include "ecsi/interpolant.hpp"
#include "ecsi/metrics.hpp"
#include "ecsi/train.hpp"

namespace ecsi {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

using Json = nlohmann::json;

/// I/O failure or malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("unexpected end of file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

/// Locale-independent, round-trip formatting for CSV cells.
inline std::string fmt(double v) {
  std::ostringstream ss;
  ss.imbue(std::locale::classic());
  ss << std::setprecision(17) << v;
  return ss.str();
}

/// JSON has no infinities; they are stored as null.
inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
inline double from_finite_or_null(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

// ---- interpolant coefficients ----

inline Json coeffs_to_json(const InterpolantCoeffs& c) {
  Json j;
  j["n_alpha"] = c.alpha_hat.size();
  j["alpha_hat"] = c.alpha_hat;
  j["beta_hat"] = c.beta_hat;
  j["gamma_scale"] = c.gamma_scale;
  j["schedule"] = c.schedule == Schedule::trigonometric ? "trigonometric" : "quadratic";
  return j;
}

inline InterpolantCoeffs coeffs_from_json(const Json& j) {
  try {
    InterpolantCoeffs c;
    c.alpha_hat = j.at("alpha_hat").get<Vector>();
    c.beta_hat = j.at("beta_hat").get<Vector>();
    c.gamma_scale = j.at("gamma_scale").get<double>();
    const std::string sched = j.value("schedule", std::string("trigonometric"));
    if (sched == "trigonometric")
      c.schedule = Schedule::trigonometric;
    else if (sched == "quadratic")
      c.schedule = Schedule::quadratic;
    else
      throw ConfigError("unknown interpolant schedule '" + sched + "'");
    if (j.contains("n_alpha") && j.at("n_alpha").get<std::size_t>() != c.alpha_hat.size())
      throw ConfigError("n_alpha does not match alpha_hat");
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed coefficient JSON: ") + e.what());
  }
}

inline void write_coeffs(const std::filesystem::path& path, const InterpolantCoeffs& c) {
  detail::write_atomic(path, coeffs_to_json(c).dump(2) + "\n");
}

inline InterpolantCoeffs read_coeffs(const std::filesystem::path& path) {
  try {
    return coeffs_from_json(Json::parse(detail::read_file(path)));
  } catch (const Json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

inline Json stats_to_json(const ChannelStats& s) {
  return Json{{"mean", s.mean}, {"stddev", s.stddev}, {"clamped", s.clamped}};
}

inline ChannelStats stats_from_json(const Json& j) {
  ChannelStats s;
  s.mean = j.at("mean").get<std::array<double, 2>>();
  s.stddev = j.at("stddev").get<std::array<double, 2>>();
  s.clamped = j.value("clamped", false);
  return s;
}

// ---- trajectory files ----

enum class DType { f64, f32 };

/// Trajectories grouped as data[traj][realization]; a dataset has one realization per trajectory.
struct TrajectoryFile {
  StateShape shape;
  std::vector<std::vector<Trajectory>> data;
  DType dtype = DType::f64;
  Json meta = Json::object();

  std::size_t n_traj() const { return data.size(); }
  std::size_t n_realizations() const { return data.empty() ? 0 : data.front().size(); }
  std::size_t n_steps() const { return data.empty() || data.front().empty() ? 0 : data.front().front().size(); }
};

inline constexpr std::uint32_t kTrajectoryFileVersion = 1;

inline std::string encode(const TrajectoryFile& f) {
  const std::size_t n_real = f.n_realizations(), n_steps = f.n_steps(), d = f.shape.size();
  std::string out = "ECSI";
  detail::put<std::uint32_t>(out, kTrajectoryFileVersion);
  for (std::size_t v : {static_cast<std::size_t>(f.shape.nx), static_cast<std::size_t>(f.shape.ny), std::size_t{2},
                        f.n_traj(), n_steps, n_real}) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw IoError("trajectory file dimension too large");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  out.append(f.dtype == DType::f64 ? std::string("f64\0", 4) : std::string("f32\0", 4));
  for (const auto& reals : f.data) {
    if (reals.size() != n_real) throw IoError("ragged realization counts");
    for (const auto& traj : reals) {
      if (traj.size() != n_steps) throw IoError("ragged trajectory lengths");
      for (const auto& s : traj) {
        if (s.size() != d) throw IoError("state size does not match the grid");
        for (double v : s) {
          if (f.dtype == DType::f64)
            detail::put<double>(out, v);
          else
            detail::put<float>(out, static_cast<float>(v));
        }
      }
    }
  }
  const std::string meta = f.meta.dump();
  out += meta;
  detail::put<std::uint64_t>(out, meta.size());
  return out;
}

inline TrajectoryFile decode(const std::string& in) {
  if (in.size() < 36 + 8 || in.compare(0, 4, "ECSI") != 0) throw IoError("not a trajectory file (bad magic)");
  std::size_t pos = 4;
  const auto version = detail::get<std::uint32_t>(in, pos);
  if (version != kTrajectoryFileVersion) throw IoError("unsupported trajectory file version " + std::to_string(version));
  TrajectoryFile f;
  f.shape.nx = static_cast<int>(detail::get<std::uint32_t>(in, pos));
  f.shape.ny = static_cast<int>(detail::get<std::uint32_t>(in, pos));
  const auto channels = detail::get<std::uint32_t>(in, pos);
  const std::size_t n_traj = detail::get<std::uint32_t>(in, pos);
  const std::size_t n_steps = detail::get<std::uint32_t>(in, pos);
  const std::size_t n_real = detail::get<std::uint32_t>(in, pos);
  const std::string tag = in.substr(pos, 4);
  pos += 4;
  if (channels != 2) throw IoError("trajectory file must have 2 channels");
  if (tag == std::string("f64\0", 4))
    f.dtype = DType::f64;
  else if (tag == std::string("f32\0", 4))
    f.dtype = DType::f32;
  else
    throw IoError("unknown dtype tag");
  const std::size_t width = f.dtype == DType::f64 ? 8 : 4;
  const std::size_t d = f.shape.size();
  const std::size_t payload = n_traj * n_real * n_steps * d * width;
  std::size_t meta_pos = in.size() - 8;
  const auto meta_len = detail::get<std::uint64_t>(in, meta_pos);
  if (pos + payload + meta_len + 8 != in.size())
    throw IoError("header sizes do not match the file length (truncated or corrupt file)");
  f.data.assign(n_traj, std::vector<Trajectory>(n_real, Trajectory(n_steps, State(d))));
  for (auto& reals : f.data)
    for (auto& traj : reals)
      for (auto& s : traj)
        for (double& v : s) v = f.dtype == DType::f64 ? detail::get<double>(in, pos) : detail::get<float>(in, pos);
  try {
    f.meta = Json::parse(in.substr(pos, meta_len));
  } catch (const Json::parse_error& e) {
    throw IoError(std::string("corrupt metadata footer: ") + e.what());
  }
  return f;
}

inline void write_trajectory_file(const std::filesystem::path& path, const TrajectoryFile& f) {
  detail::write_atomic(path, encode(f));
}

inline TrajectoryFile read_trajectory_file(const std::filesystem::path& path) {
  return decode(detail::read_file(path));
}

inline TrajectoryFile to_file(const TrajectoryDataset& ds, Json meta = Json::object()) {
  TrajectoryFile f;
  f.shape = ds.shape;
  for (const auto& t : ds.trajectories) f.data.push_back({t});
  meta["dt"] = ds.dt;
  f.meta = std::move(meta);
  return f;
}

inline TrajectoryDataset to_dataset(const TrajectoryFile& f) {
  if (f.n_realizations() > 1) throw ConfigError("expected a dataset file, got an ensemble with several realizations");
  TrajectoryDataset ds;
  ds.shape = f.shape;
  ds.dt = f.meta.value("dt", 0.0);
  for (const auto& reals : f.data)
    if (!reals.empty()) ds.trajectories.push_back(reals.front());
  return ds;
}

// ---- checkpoints ----

/// Trained network plus everything needed to resume or sample.
struct Checkpoint {
  DriftArch arch;
  StateShape shape;
  ChannelStats stats;
  TrainState state;
  bool keep_best = true;
  Json extra = Json::object();

  /// The parameters a finished training run would return.
  DriftNet model() const {
    DriftNet net(arch, shape);
    net.set_params(keep_best && !state.best_params.empty() ? state.best_params : state.params);
    return net;
  }
};

inline Json arch_to_json(const DriftArch& a) {
  return Json{{"channels", a.channels}, {"depth", a.depth}, {"kernel", a.kernel}, {"embed_dim", a.embed_dim},
              {"history", a.history}};
}

inline DriftArch arch_from_json(const Json& j) {
  DriftArch a;
  a.channels = j.at("channels").get<int>();
  a.depth = j.at("depth").get<int>();
  a.kernel = j.at("kernel").get<int>();
  a.embed_dim = j.at("embed_dim").get<int>();
  a.history = j.at("history").get<int>();
  return a;
}

inline std::string encode(const Checkpoint& c) {
  const TrainState& st = c.state;
  Json j;
  j["arch"] = arch_to_json(c.arch);
  j["shape"] = {{"nx", c.shape.nx}, {"ny", c.shape.ny}};
  j["stats"] = stats_to_json(c.stats);
  j["keep_best"] = c.keep_best;
  j["extra"] = c.extra;
  Json s;
  s["epochs_done"] = st.epochs_done;
  s["adam_t"] = st.adam.t;
  s["best_val"] = detail::finite_or_null(st.best_val);
  s["best_epoch"] = st.best_epoch;
  s["epochs_since_improvement"] = st.epochs_since_improvement;
  s["stopped"] = st.stopped;
  Json rep = Json::array();
  for (const auto& r : st.report)
    rep.push_back({{"epoch", r.epoch},
                   {"train_loss", detail::finite_or_null(r.train_loss)},
                   {"val_rollout_mse", detail::finite_or_null(r.val_rollout_mse)},
                   {"lr", r.lr}});
  s["report"] = rep;
  j["train_state"] = s;
  const std::vector<std::pair<std::string, const Vector*>> arrays{
      {"params", &st.params}, {"best_params", &st.best_params}, {"adam_m", &st.adam.m}, {"adam_v", &st.adam.v}};
  Json layout = Json::array();
  for (const auto& [name, v] : arrays) layout.push_back({{"name", name}, {"count", v->size()}});
  j["arrays"] = layout;

  const std::string meta = j.dump();
  std::string out = "ECSC";
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint64_t>(out, meta.size());
  out += meta;
  for (const auto& [name, v] : arrays)
    for (double x : *v) detail::put<double>(out, x);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& in) {
  if (in.size() < 16 || in.compare(0, 4, "ECSC") != 0) throw IoError("not a checkpoint file (bad magic)");
  std::size_t pos = 4;
  if (detail::get<std::uint32_t>(in, pos) != 1) throw IoError("unsupported checkpoint version");
  const auto meta_len = detail::get<std::uint64_t>(in, pos);
  if (pos + meta_len > in.size()) throw IoError("truncated checkpoint");
  Checkpoint c;
  try {
    const Json j = Json::parse(in.substr(pos, meta_len));
    pos += meta_len;
    c.arch = arch_from_json(j.at("arch"));
    c.shape = {j.at("shape").at("ny").get<int>(), j.at("shape").at("nx").get<int>()};
    c.stats = stats_from_json(j.at("stats"));
    c.keep_best = j.at("keep_best").get<bool>();
    c.extra = j.value("extra", Json::object());
    const Json& s = j.at("train_state");
    TrainState& st = c.state;
    st.epochs_done = s.at("epochs_done").get<int>();
    st.adam.t = s.at("adam_t").get<long>();
    st.best_val = detail::from_finite_or_null(s.at("best_val"));
    st.best_epoch = s.at("best_epoch").get<int>();
    st.epochs_since_improvement = s.at("epochs_since_improvement").get<int>();
    st.stopped = s.at("stopped").get<bool>();
    for (const Json& r : s.at("report"))
      st.report.push_back({r.at("epoch").get<int>(), detail::from_finite_or_null(r.at("train_loss")),
                           detail::from_finite_or_null(r.at("val_rollout_mse")), r.at("lr").get<double>()});
    for (const Json& a : j.at("arrays")) {
      const std::string name = a.at("name").get<std::string>();
      const auto count = a.at("count").get<std::size_t>();
      Vector* dst = name == "params"        ? &st.params
                    : name == "best_params" ? &st.best_params
                    : name == "adam_m"      ? &st.adam.m
                    : name == "adam_v"      ? &st.adam.v
                                            : nullptr;
      if (!dst) throw IoError("unknown checkpoint array '" + name + "'");
      dst->resize(count);
      for (double& x : *dst) x = detail::get<double>(in, pos);
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  if (pos != in.size()) throw IoError("checkpoint has trailing bytes");
  c.arch.validate();
  if (c.state.params.size() != DriftNet(c.arch, c.shape).n_params())
    throw IoError("checkpoint parameter count does not match its architecture");
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  detail::write_atomic(path, encode(c));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

// ---- reports ----

/// Columns: epoch,train_loss,val_rollout_mse,lr
inline std::string training_report_csv(const std::vector<EpochRecord>& report) {
  std::string out = "epoch,train_loss,val_rollout_mse,lr\n";
  for (const auto& r : report)
    out += std::to_string(r.epoch) + "," + detail::fmt(r.train_loss) + "," + detail::fmt(r.val_rollout_mse) + "," +
           detail::fmt(r.lr) + "\n";
  return out;
}

/// Columns: metric,horizon,value (horizon in model steps).
inline std::string metric_report_csv(const MetricReport& r) {
  const std::string full = std::to_string(r.energy_series.empty() ? 0 : r.energy_series.front().size());
  std::string out = "metric,horizon,value\n";
  out += "mse," + std::to_string(r.short_horizon) + "," + detail::fmt(r.mse_short) + "\n";
  out += "mse," + full + "," + detail::fmt(r.mse_full) + "\n";
  out += "energy_w1," + full + "," + detail::fmt(r.energy_w1) + "\n";
  out += "corr_time," + full + "," + detail::fmt(r.corr_time) + "\n";
  return out;
}

/// Columns: step,gen_energy_mean,ref_energy_mean,gen_roc,ref_roc (roc empty at step 0).
inline std::string metric_series_csv(const MetricReport& r) {
  std::string out = "step,gen_energy_mean,ref_energy_mean,gen_roc,ref_roc\n";
  const std::size_t len = r.energy_series.empty() ? 0 : r.energy_series.front().size();
  for (std::size_t n = 0; n < len; ++n) {
    double ge = 0.0, re = 0.0;
    for (const auto& s : r.energy_series) ge += s[n];
    for (const auto& s : r.reference_energy) re += s[n];
    ge /= static_cast<double>(r.energy_series.size());
    re /= static_cast<double>(r.reference_energy.size());
    out += std::to_string(n) + "," + detail::fmt(ge) + "," + detail::fmt(re) + ",";
    if (n > 0) out += detail::fmt(r.roc_series[n - 1]) + "," + detail::fmt(r.reference_roc[n - 1]);
    else out += ",";
    out += "\n";
  }
  return out;
}

/// Columns: step,k,generated,reference
inline std::string spectra_csv(const MetricReport& r) {
  std::string out = "step,k,generated,reference\n";
  for (const auto& sp : r.spectra)
    for (std::size_t k = 0; k < sp.generated.size(); ++k)
      out += std::to_string(sp.step) + "," + std::to_string(k) + "," + detail::fmt(sp.generated[k]) + "," +
             detail::fmt(sp.reference[k]) + "\n";
  return out;
}

inline Json metric_report_json(const MetricReport& r) {
  Json j;
  j["mse_short"] = r.mse_short;
  j["short_horizon"] = r.short_horizon;
  j["mse_full"] = r.mse_full;
  j["energy_w1"] = r.energy_w1;
  j["corr_time"] = r.corr_time;
  j["n_realizations"] = r.n_realizations;
  j["energy_series"] = r.energy_series;
  j["reference_energy"] = r.reference_energy;
  j["roc_series"] = r.roc_series;
  j["reference_roc"] = r.reference_roc;
  Json sp = Json::array();
  for (const auto& s : r.spectra) sp.push_back({{"step", s.step}, {"generated", s.generated}, {"reference", s.reference}});
  j["spectra"] = sp;
  return j;
}

}  // namespace ecsi
