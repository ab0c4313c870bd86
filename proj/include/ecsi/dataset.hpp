#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/fields.hpp"

namespace ecsi {

/// Spatial layout of a flat two-channel state: 2 x ny x nx.
struct StateShape {
  int ny = 0;
  int nx = 0;

  std::size_t plane() const { return static_cast<std::size_t>(ny) * nx; }
  std::size_t size() const { return 2 * plane(); }
  bool square() const { return ny == nx; }
  friend bool operator==(const StateShape&, const StateShape&) = default;
};

inline StateShape shape_of(const Grid& g) { return {g.n(), g.n()}; }

using State = Vector;
using Trajectory = std::vector<State>;

/// Ordered sequences of (coarse) states sharing one shape and model step.
struct TrajectoryDataset {
  StateShape shape;
  double dt = 0.0;
  std::vector<Trajectory> trajectories;

  bool empty() const {
    for (const auto& t : trajectories)
      if (!t.empty()) return false;
    return true;
  }
  std::size_t n_states() const {
    std::size_t s = 0;
    for (const auto& t : trajectories) s += t.size();
    return s;
  }
};

/// Per-channel affine standardization statistics.
struct ChannelStats {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> stddev{1.0, 1.0};
  /// Set when a zero-variance channel had its std clamped to 1.
  bool clamped = false;
};

inline void standardize_state(State& x, const ChannelStats& s) {
  const std::size_t plane = x.size() / 2;
  for (int c = 0; c < 2; ++c) {
    const double inv = 1.0 / s.stddev[c];
    for (std::size_t k = c * plane; k < (c + 1) * plane; ++k) x[k] = (x[k] - s.mean[c]) * inv;
  }
}

inline void destandardize_state(State& x, const ChannelStats& s) {
  const std::size_t plane = x.size() / 2;
  for (int c = 0; c < 2; ++c)
    for (std::size_t k = c * plane; k < (c + 1) * plane; ++k) x[k] = x[k] * s.stddev[c] + s.mean[c];
}

inline ChannelStats channel_stats(const TrajectoryDataset& ds) {
  if (ds.empty()) throw ConfigError("cannot standardize an empty dataset");
  ChannelStats s;
  const std::size_t plane = ds.shape.plane();
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& t : ds.trajectories)
      for (const auto& x : t)
        for (std::size_t k = c * plane; k < (c + 1) * plane; ++k) {
          sum += x[k];
          ++count;
        }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& t : ds.trajectories)
      for (const auto& x : t)
        for (std::size_t k = c * plane; k < (c + 1) * plane; ++k) ss += (x[k] - mean) * (x[k] - mean);
    double sd = std::sqrt(ss / static_cast<double>(count));
    if (!(sd > 1e-300)) {
      sd = 1.0;
      s.clamped = true;
    }
    s.mean[c] = mean;
    s.stddev[c] = sd;
  }
  return s;
}

inline TrajectoryDataset apply_stats(TrajectoryDataset ds, const ChannelStats& s, bool forward) {
  for (auto& t : ds.trajectories)
    for (auto& x : t) forward ? standardize_state(x, s) : destandardize_state(x, s);
  return ds;
}

/// Standardizes every channel to zero mean and unit std over all snapshots.
inline std::pair<TrajectoryDataset, ChannelStats> standardize(const TrajectoryDataset& ds) {
  ChannelStats s = channel_stats(ds);
  return {apply_stats(ds, s, true), s};
}

inline TrajectoryDataset destandardize(const TrajectoryDataset& ds, const ChannelStats& s) {
  return apply_stats(ds, s, false);
}

}  // namespace ecsi
