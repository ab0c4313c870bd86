#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ecsi/pipeline.hpp"

using namespace ecsi;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecsi_io_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrajectoryFile random_file(std::size_t n_traj, std::size_t n_real, std::size_t n_steps, StateShape shape,
                           std::uint64_t seed) {
  TrajectoryFile f;
  f.shape = shape;
  Rng rng(seed);
  f.data.assign(n_traj, std::vector<Trajectory>(n_real, Trajectory(n_steps, State(shape.size()))));
  for (auto& reals : f.data)
    for (auto& t : reals)
      for (auto& s : t) fill_normal(rng, s);
  f.meta = {{"dt", 0.05}, {"note", "random"}};
  return f;
}

/// Small but real pipeline config: 32^2 DNS filtered to 8^2.
PipelineConfig tiny_config() {
  Json j = {{"seed", 5},
            {"ns", {{"n", 32}, {"re", 100.0}, {"dt", 0.01}}},
            {"data",
             {{"burn_in", 0.2},
              {"stride", 2},
              {"n_train_traj", 1},
              {"n_test_traj", 2},
              {"n_train_steps", 24},
              {"n_test_steps", 6},
              {"coarsen_factor", 4}}},
            {"net", {{"channels", 4}, {"depth", 1}, {"embed_dim", 4}, {"history", 1}}},
            {"train", {{"epochs", 3}, {"batch_size", 4}, {"steps_per_epoch", 3}, {"val_rollout_steps", 2}}},
            {"sde", {{"n_pseudo_steps", 3}}},
            {"metrics", {{"short_horizon", 2}, {"spectrum_steps", {0, 3}}}}};
  return config_from_json(j);
}

}  // namespace

TEST(TrajectoryFileFormat, RoundTripIsBitExact) {
  const fs::path dir = temp_dir("roundtrip");
  TrajectoryFile f = random_file(2, 3, 4, StateShape{6, 6}, 1);
  f.data[0][0][0][0] = -0.0;
  f.data[1][2][3][5] = std::numeric_limits<double>::denorm_min();
  write_trajectory_file(dir / "a.ecsi", f);
  const TrajectoryFile g = read_trajectory_file(dir / "a.ecsi");
  EXPECT_EQ(g.shape, f.shape);
  EXPECT_EQ(g.n_traj(), 2u);
  EXPECT_EQ(g.n_realizations(), 3u);
  EXPECT_EQ(g.n_steps(), 4u);
  EXPECT_EQ(g.meta, f.meta);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t n = 0; n < 4; ++n)
        EXPECT_EQ(std::memcmp(g.data[t][r][n].data(), f.data[t][r][n].data(), f.shape.size() * sizeof(double)), 0);
  EXPECT_TRUE(std::signbit(g.data[0][0][0][0]));
  EXPECT_FALSE(fs::exists(dir / "a.ecsi.tmp"));
}

TEST(TrajectoryFileFormat, HeaderLayoutAndSize) {
  const TrajectoryFile f = random_file(1, 2, 3, StateShape{4, 4}, 2);
  const std::string bytes = encode(f);
  EXPECT_EQ(bytes.substr(0, 4), "ECSI");
  std::uint32_t words[8];
  std::memcpy(words, bytes.data() + 4, sizeof(words));
  EXPECT_EQ(words[0], 1u);  // version
  EXPECT_EQ(words[1], 4u);  // nx
  EXPECT_EQ(words[2], 4u);  // ny
  EXPECT_EQ(words[3], 2u);  // channels
  EXPECT_EQ(words[4], 1u);  // trajectories
  EXPECT_EQ(words[5], 3u);  // steps
  EXPECT_EQ(words[6], 2u);  // realizations
  EXPECT_EQ(bytes.substr(32, 4), std::string("f64\0", 4));
  const std::string meta = f.meta.dump();
  EXPECT_EQ(bytes.size(), 36 + 1 * 2 * 3 * 32 * 8 + meta.size() + 8);
}

TEST(TrajectoryFileFormat, SinglePrecisionStoresRoundedValues) {
  TrajectoryFile f = random_file(1, 1, 2, StateShape{4, 4}, 3);
  f.dtype = DType::f32;
  const TrajectoryFile g = decode(encode(f));
  EXPECT_EQ(g.dtype, DType::f32);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 32; ++k)
      EXPECT_EQ(g.data[0][0][n][k], static_cast<double>(static_cast<float>(f.data[0][0][n][k])));
  EXPECT_EQ(encode(g), encode(f));
}

TEST(TrajectoryFileFormat, RejectsCorruptFiles) {
  const std::string good = encode(random_file(1, 1, 2, StateShape{4, 4}, 4));
  EXPECT_THROW(decode(good.substr(0, good.size() - 20)), IoError);
  EXPECT_THROW(decode("XXXX" + good.substr(4)), IoError);
  std::string bad_tag = good;
  bad_tag[33] = 'x';
  EXPECT_THROW(decode(bad_tag), IoError);
  std::string extra = good;
  extra.insert(40, "abcdefgh");
  EXPECT_THROW(decode(extra), IoError);
  TrajectoryFile ragged = random_file(2, 1, 2, StateShape{4, 4}, 5);
  ragged.data[1][0].pop_back();
  EXPECT_THROW(encode(ragged), IoError);
  EXPECT_THROW(read_trajectory_file("/nonexistent/file.ecsi"), IoError);
}

TEST(TrajectoryFileFormat, DatasetConversion) {
  TrajectoryDataset ds;
  ds.shape = {4, 4};
  ds.dt = 0.25;
  Rng rng(6);
  for (int t = 0; t < 2; ++t) {
    Trajectory tr(3, State(32));
    for (auto& s : tr) fill_normal(rng, s);
    ds.trajectories.push_back(tr);
  }
  const TrajectoryDataset back = to_dataset(decode(encode(to_file(ds))));
  EXPECT_EQ(back.trajectories, ds.trajectories);
  EXPECT_EQ(back.dt, 0.25);
  EXPECT_THROW(to_dataset(random_file(1, 2, 2, StateShape{4, 4}, 7)), ConfigError);
}

TEST(Coefficients, JsonRoundTripIsExact) {
  const fs::path dir = temp_dir("coeffs");
  InterpolantCoeffs c = InterpolantCoeffs::zeros(5, 0.1);
  Rng rng(8);
  fill_normal(rng, c.alpha_hat);
  fill_normal(rng, c.beta_hat);
  c.alpha_hat[2] = 1.0 / 3.0;
  write_coeffs(dir / "c.json", c);
  const InterpolantCoeffs back = read_coeffs(dir / "c.json");
  EXPECT_EQ(back.alpha_hat, c.alpha_hat);
  EXPECT_EQ(back.beta_hat, c.beta_hat);
  EXPECT_EQ(back.gamma_scale, c.gamma_scale);
  EXPECT_EQ(back.schedule, Schedule::trigonometric);
  const Json j = coeffs_to_json(c);
  EXPECT_EQ(j.at("n_alpha").get<int>(), 5);

  EXPECT_EQ(coeffs_from_json(coeffs_to_json(InterpolantCoeffs::quadratic(0.2))).schedule, Schedule::quadratic);
  Json no_schedule = {{"alpha_hat", {0.1}}, {"beta_hat", {0.2}}, {"gamma_scale", 0.1}};
  EXPECT_EQ(coeffs_from_json(no_schedule).schedule, Schedule::trigonometric);
  Json bad = no_schedule;
  bad["schedule"] = "cubic";
  EXPECT_THROW(coeffs_from_json(bad), ConfigError);
  bad = no_schedule;
  bad["n_alpha"] = 3;
  EXPECT_THROW(coeffs_from_json(bad), ConfigError);
  EXPECT_THROW(coeffs_from_json(Json{{"alpha_hat", {0.1}}}), ConfigError);
}

TEST(CheckpointFormat, RoundTripKeepsTrainingState) {
  const fs::path dir = temp_dir("ckpt");
  Checkpoint c;
  c.arch = DriftArch{4, 1, 3, 4, 1};
  c.shape = {8, 8};
  c.stats.mean = {0.1, -0.2};
  c.stats.stddev = {1.5, 0.5};
  const DriftNet net = DriftNet::initialized(c.arch, c.shape, 3);
  c.state.params = net.params();
  c.state.best_params = net.params();
  c.state.best_params[0] += 1.0;
  c.state.adam.m.assign(net.n_params(), 0.25);
  c.state.adam.v.assign(net.n_params(), 0.125);
  c.state.adam.t = 17;
  c.state.epochs_done = 2;
  c.state.best_epoch = 1;
  c.state.best_val = 0.3;
  c.state.report = {{0, 1.5, std::numeric_limits<double>::infinity(), 1e-4}, {1, 1.25, 0.3, 2e-4}};
  c.extra = {{"note", "x"}};
  write_checkpoint(dir / "c.ecsc", c);
  const Checkpoint back = read_checkpoint(dir / "c.ecsc");
  EXPECT_EQ(back.arch, c.arch);
  EXPECT_EQ(back.shape, c.shape);
  EXPECT_EQ(back.stats.mean, c.stats.mean);
  EXPECT_EQ(back.stats.stddev, c.stats.stddev);
  EXPECT_EQ(back.state.params, c.state.params);
  EXPECT_EQ(back.state.best_params, c.state.best_params);
  EXPECT_EQ(back.state.adam.m, c.state.adam.m);
  EXPECT_EQ(back.state.adam.v, c.state.adam.v);
  EXPECT_EQ(back.state.adam.t, 17);
  EXPECT_EQ(back.state.best_val, 0.3);
  ASSERT_EQ(back.state.report.size(), 2u);
  EXPECT_TRUE(std::isinf(back.state.report[0].val_rollout_mse));
  EXPECT_EQ(back.state.report[1].lr, 2e-4);
  EXPECT_EQ(back.extra, c.extra);
  EXPECT_EQ(back.model().params(), c.state.best_params);
  Checkpoint last = back;
  last.keep_best = false;
  EXPECT_EQ(last.model().params(), c.state.params);

  // Untrained state: best_val is infinite and has to survive JSON.
  Checkpoint fresh = c;
  fresh.state.best_val = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(std::isinf(decode_checkpoint(encode(fresh)).state.best_val));

  const std::string bytes = encode(c);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), IoError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), IoError);
  Checkpoint wrong = c;
  wrong.state.params.pop_back();
  EXPECT_THROW(decode_checkpoint(encode(wrong)), IoError);
}

TEST(Config, DefaultsAndSeedPropagation) {
  const PipelineConfig c = config_from_json(Json{{"seed", 42}});
  EXPECT_EQ(c.ns.seed, 42u);
  EXPECT_EQ(c.train.seed, 42u);
  EXPECT_EQ(c.sde.seed, 42u);
  EXPECT_EQ(c.interpolant.n_coeffs, 5);
  EXPECT_EQ(c.interpolant.gamma_scale, 0.1);
  EXPECT_EQ(c.sample.n_realizations, 5);
  EXPECT_EQ(c.net, DriftArch{});
  EXPECT_EQ(c.ns.grid.n(), 256);
  EXPECT_EQ(c.data.coarsen_factor, 8);
  EXPECT_EQ(c.data.stride, 25);
  EXPECT_EQ(c.ns.dt, 2e-3);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(config_from_json(Json{{"sed", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"train", {{"epoch", 3}}}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"train", {{"epochs", "three"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"ns", 5}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"interpolant", {{"schedule", "cubic"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"data", {{"coarsen_factor", 3}}}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"sde", {{"n_pseudo_steps", 0}}}}), ConfigError);
  try {
    config_from_json(Json{{"metrics", {{"bogus", 1}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("metrics.bogus"), std::string::npos);
  }
}

TEST(Config, EffectiveConfigRoundTrips) {
  const PipelineConfig c = tiny_config();
  const Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
}

TEST(Reports, CsvColumns) {
  const std::string train_csv = training_report_csv({{0, 0.5, 1.25, 1e-3}, {1, 0.25, 1.0, 0.0}});
  EXPECT_EQ(train_csv, "epoch,train_loss,val_rollout_mse,lr\n0,0.5,1.25,0.001\n1,0.25,1,0\n");
  MetricReport r;
  r.short_horizon = 2;
  r.mse_short = 0.5;
  r.mse_full = 1.5;
  r.energy_w1 = 0.25;
  r.corr_time = 1.0;
  r.energy_series = {{1.0, 2.0, 3.0}};
  EXPECT_EQ(metric_report_csv(r), "metric,horizon,value\nmse,2,0.5\nmse,3,1.5\nenergy_w1,3,0.25\ncorr_time,3,1\n");
}

TEST(Pipeline, OptimizeEmitsFiveCoefficientsAndRejectsEmptyData) {
  const PipelineConfig cfg = tiny_config();
  const TrajectoryDataset train = to_dataset(cmd_dns(cfg, Split::train));
  const OptimizeResult r = cmd_optimize_interpolant(cfg, train);
  EXPECT_EQ(r.coeffs.alpha_hat.size(), 5u);
  EXPECT_EQ(r.coeffs.beta_hat.size(), 5u);
  EXPECT_FALSE(r.warning) << to_string(r.status);
  EXPECT_THROW(cmd_optimize_interpolant(cfg, TrajectoryDataset{}), ConfigError);
  PipelineConfig plain = cfg;
  plain.interpolant.schedule = Schedule::quadratic;
  plain.interpolant.optimize = false;
  EXPECT_EQ(cmd_optimize_interpolant(plain, train).coeffs.schedule, Schedule::quadratic);
}

TEST(Pipeline, ResumeReproducesUninterruptedTraining) {
  const fs::path dir = temp_dir("resume");
  const PipelineConfig cfg = tiny_config();
  const TrajectoryDataset train = to_dataset(cmd_dns(cfg, Split::train));
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5, 0.1);
  const Checkpoint full = cmd_train(cfg, train, c);
  cmd_train(cfg, train, c, {}, dir / "part.ecsc", 1);
  const Checkpoint part = read_checkpoint(dir / "part.ecsc");
  EXPECT_EQ(part.state.epochs_done, 1);
  const Checkpoint resumed = cmd_train(cfg, train, c, part);
  ASSERT_EQ(resumed.state.report.size(), full.state.report.size());
  for (std::size_t e = 0; e < full.state.report.size(); ++e)
    EXPECT_EQ(resumed.state.report[e].train_loss, full.state.report[e].train_loss) << "epoch " << e;
  EXPECT_EQ(resumed.state.params, full.state.params);
  PipelineConfig other = cfg;
  other.net.channels = 5;
  EXPECT_THROW(cmd_train(other, train, c, part), ConfigError);
}

TEST(Pipeline, SampleAndEvaluate) {
  PipelineConfig cfg = tiny_config();
  const TrajectoryDataset train = to_dataset(cmd_dns(cfg, Split::train));
  const TrajectoryDataset test = to_dataset(cmd_dns(cfg, Split::test));
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5, 0.1);
  const Checkpoint ck = cmd_train(cfg, train, c);

  const TrajectoryFile ens = cmd_sample(cfg, ck, c, test);
  EXPECT_EQ(ens.n_traj(), 2u);
  EXPECT_EQ(ens.n_realizations(), 5u);
  EXPECT_EQ(ens.n_steps(), 6u - 2u);
  for (const auto& reals : ens.data)
    for (const auto& t : reals)
      for (const auto& s : t) EXPECT_LE(max_divergence(VelocityField(Grid(8), s)), 1e-9);
  EXPECT_EQ(encode(cmd_sample(cfg, ck, c, test)), encode(ens));
  EXPECT_NE(ens.data[0][0], ens.data[0][1]);

  cfg.sde.project = false;
  const TrajectoryFile raw = cmd_sample(cfg, ck, c, test);
  double worst = 0.0;
  for (const auto& s : raw.data[0][0]) worst = std::max(worst, max_divergence(VelocityField(Grid(8), s)));
  EXPECT_GT(worst, 1e-6);

  const MetricReport rep = cmd_evaluate(cfg, ens, test);
  EXPECT_EQ(rep.n_realizations, 10u);
  EXPECT_TRUE(std::isfinite(rep.energy_w1));

  // An ensemble that replays the reference scores zero error.
  TrajectoryFile self = ens;
  for (std::size_t t = 0; t < 2; ++t)
    for (auto& r : self.data[t]) r.assign(test.trajectories[t].begin() + 2, test.trajectories[t].end());
  const MetricReport zero = cmd_evaluate(cfg, self, test);
  EXPECT_EQ(zero.mse_full, 0.0);
  EXPECT_EQ(zero.energy_w1, 0.0);
  EXPECT_EQ(zero.corr_time, 1.0);

  TrajectoryDataset short_ref = test;
  short_ref.trajectories.pop_back();
  EXPECT_THROW(cmd_evaluate(cfg, ens, short_ref), ConfigError);
  TrajectoryFile no_meta = ens;
  no_meta.meta.erase("history_states");
  EXPECT_THROW(cmd_evaluate(cfg, no_meta, test), ConfigError);
}
