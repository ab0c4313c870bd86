#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ecsi/interpolant.hpp"

using namespace ecsi;

namespace {

constexpr double pi = std::numbers::pi;

InterpolantCoeffs random_coeffs(Rng& rng, int n = 5, double gamma = 0.1) {
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  InterpolantCoeffs c = InterpolantCoeffs::zeros(n, gamma);
  for (auto& a : c.alpha_hat) a = unif(rng);
  for (auto& b : c.beta_hat) b = unif(rng);
  return c;
}

Vector random_vector(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  fill_normal(rng, v);
  for (double& x : v) x *= scale;
  return v;
}

PairBatch random_batch(Rng& rng, int pairs, std::size_t d) {
  std::vector<Vector> a, b;
  for (int p = 0; p < pairs; ++p) {
    a.push_back(random_vector(rng, d));
    b.push_back(random_vector(rng, d));
  }
  return PairBatch(a, b);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Independent oracle: alpha, beta by direct series evaluation; derivatives by central differences.
double oracle_alpha(const InterpolantCoeffs& c, double t) {
  double a = std::cos(0.5 * pi * t);
  for (std::size_t i = 0; i < c.alpha_hat.size(); ++i) a += c.alpha_hat[i] * std::sin((i + 1.0) * pi * t);
  return a;
}
double oracle_beta(const InterpolantCoeffs& c, double t) {
  double b = std::sin(0.5 * pi * t);
  for (std::size_t i = 0; i < c.beta_hat.size(); ++i) b += c.beta_hat[i] * std::sin((i + 1.0) * pi * t);
  return b;
}

/// Composite Simpson integral of E|a' x0 + b' x1 + g' sqrt(t) z|^2 for a single pair.
double oracle_transport(const InterpolantCoeffs& c, double n00, double n11, double n01, double d, int panels) {
  const double h = 1.0 / panels;
  const double eps = 1e-6;
  auto integrand = [&](double t) {
    const double tl = std::max(0.0, t - eps), tr = std::min(1.0, t + eps);
    const double ad = (oracle_alpha(c, tr) - oracle_alpha(c, tl)) / (tr - tl);
    const double bd = (oracle_beta(c, tr) - oracle_beta(c, tl)) / (tr - tl);
    return ad * ad * n00 + bd * bd * n11 + 2.0 * ad * bd * n01 + c.gamma_scale * c.gamma_scale * t * d;
  };
  double s = integrand(0.0) + integrand(1.0);
  for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * integrand(k * h);
  return s * h / 3.0;
}

}  // namespace

TEST(EvalCoeffs, BoundaryValuesWithZeroSeries) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5);
  const CoeffEval e0 = eval_coeffs(c, 0.0);
  EXPECT_EQ(e0.alpha, 1.0);
  EXPECT_EQ(e0.beta, 0.0);
  EXPECT_DOUBLE_EQ(e0.gamma, 0.1);
  const CoeffEval e1 = eval_coeffs(c, 1.0);
  EXPECT_NEAR(e1.alpha, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(e1.beta, 1.0);
  EXPECT_EQ(e1.gamma, 0.0);
}

TEST(EvalCoeffs, SeriesValue) {
  InterpolantCoeffs c = InterpolantCoeffs::zeros(5);
  c.alpha_hat[0] = 0.3;
  EXPECT_NEAR(eval_coeffs(c, 0.5).alpha, std::cos(pi / 4) + 0.3, 1e-14);
  EXPECT_NEAR(eval_coeffs(c, 0.5).alpha, 1.00711, 1e-5);
}

TEST(EvalCoeffs, RejectsTauOutsideUnitInterval) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(2);
  EXPECT_THROW(eval_coeffs(c, -1e-9), ConfigError);
  EXPECT_THROW(eval_coeffs(c, 1.0 + 1e-9), ConfigError);
  EXPECT_THROW(eval_coeffs(c, std::nan("")), ConfigError);
}

TEST(EvalCoeffs, DerivativesMatchFiniteDifferences) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    InterpolantCoeffs c = random_coeffs(rng);
    if (trial % 2) c.schedule = Schedule::quadratic;
    for (double t : {0.1, 0.37, 0.5, 0.81, 0.95}) {
      const double eps = 1e-6;
      const CoeffEval e = eval_coeffs(c, t), ep = eval_coeffs(c, t + eps), em = eval_coeffs(c, t - eps);
      EXPECT_NEAR(e.alpha_dot, (ep.alpha - em.alpha) / (2 * eps), 1e-7);
      EXPECT_NEAR(e.beta_dot, (ep.beta - em.beta) / (2 * eps), 1e-7);
      EXPECT_NEAR(e.gamma_dot, (ep.gamma - em.gamma) / (2 * eps), 1e-9);
    }
  }
}

TEST(EvalCoeffs, BoundaryConditionsForRandomCoefficients) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    InterpolantCoeffs c = random_coeffs(rng);
    c.gamma_scale = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const CoeffEval e0 = eval_coeffs(c, 0.0), e1 = eval_coeffs(c, 1.0);
    EXPECT_LE(std::abs(e0.alpha - 1.0), 1e-12);
    EXPECT_LE(std::abs(e1.alpha), 1e-12);
    EXPECT_LE(std::abs(e0.beta), 1e-12);
    EXPECT_LE(std::abs(e1.beta - 1.0), 1e-12);
    EXPECT_LE(std::abs(e1.gamma), 1e-12);
  }
}

TEST(EvalCoeffs, QuadraticBaseline) {
  const InterpolantCoeffs c = InterpolantCoeffs::quadratic();
  const CoeffEval e = eval_coeffs(c, 0.3);
  EXPECT_DOUBLE_EQ(e.alpha, 0.7);
  EXPECT_DOUBLE_EQ(e.beta, 0.09);
  EXPECT_DOUBLE_EQ(e.alpha_dot, -1.0);
  EXPECT_DOUBLE_EQ(e.beta_dot, 0.6);
}

TEST(Interpolate, EndpointsRecoverStates) {
  Rng rng(3);
  const InterpolantCoeffs c = random_coeffs(rng);
  const Vector x0 = random_vector(rng, 16), x1 = random_vector(rng, 16), z = random_vector(rng, 16);
  EXPECT_EQ(interpolate(c, 0.0, x0, x1, z), x0);
  const Vector at1 = interpolate(c, 1.0, x0, x1, z);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(at1[k], x1[k], 1e-12);
}

TEST(Interpolate, ScalarClosedForm) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5);
  const Vector x0{1, 0, 0}, x1{2, 0, 0}, w{0, 0, 0};
  const Vector out = interpolate(c, 0.25, x0, x1, w);
  EXPECT_NEAR(out[0], std::cos(pi / 8) + 2 * std::sin(pi / 8), 1e-14);
  EXPECT_NEAR(out[0], 1.68925, 1e-5);
  EXPECT_EQ(out[1], 0.0);
}

TEST(DriftTarget, AtZeroIsQuarterTurnOfTarget) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5);
  Rng rng(4);
  const Vector x0 = random_vector(rng, 8), x1 = random_vector(rng, 8);
  const Vector r = drift_target(c, 0.0, x0, x1, Vector(8, 0.0));
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(r[k], 0.5 * pi * x1[k], 1e-14);
}

TEST(DriftTarget, NoiseOnly) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5);
  Rng rng(5);
  const Vector z = random_vector(rng, 8), zero(8, 0.0);
  const Vector r = drift_target(c, 0.64, zero, zero, z);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(r[k], -0.1 * 0.8 * z[k], 1e-15);
}

TEST(DriftTarget, MatchesCentralDifferenceOfInterpolant) {
  Rng rng(6);
  const InterpolantCoeffs c = random_coeffs(rng);
  const Vector x0 = random_vector(rng, 8), x1 = random_vector(rng, 8), w(8, 0.0);
  for (double t : {0.2, 0.5, 0.7}) {
    std::vector<double> errs;
    for (double eps : {1e-2, 5e-3}) {
      const Vector ip = interpolate(c, t + eps, x0, x1, w), im = interpolate(c, t - eps, x0, x1, w);
      const Vector r = drift_target(c, t, x0, x1, w);
      double e = 0.0;
      for (std::size_t k = 0; k < 8; ++k) e = std::max(e, std::abs((ip[k] - im[k]) / (2 * eps) - r[k]));
      errs.push_back(e);
    }
    // Second-order: halving eps divides the error by about four.
    EXPECT_NEAR(errs[0] / errs[1], 4.0, 0.2);
  }
}

TEST(EnergyRate, TrigIdentityWithoutNoise) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5, 0.0);
  for (double t : {0.0, 0.1, 0.25, 0.5, 0.9}) EXPECT_NEAR(energy_rate_H(c, t, 1, 1, 1, 1), 0.5 * pi * std::cos(pi * t), 1e-14);
  EXPECT_NEAR(energy_rate_H(c, 0.5, 1, 1, 1, 1), 0.0, 1e-15);
}

TEST(EnergyRate, NoiseTerms) {
  const InterpolantCoeffs c = InterpolantCoeffs::zeros(5, 0.1);
  EXPECT_NEAR(energy_rate_H(c, 0.5, 0, 0, 0, 4), -0.005, 1e-15);
}

TEST(EnergyRate, MonteCarloDerivativeOfExpectedEnergy) {
  Rng rng(7);
  const std::size_t d = 16;
  const InterpolantCoeffs c = random_coeffs(rng, 5, 0.5);
  const Vector x0 = random_vector(rng, d), x1 = random_vector(rng, d);
  const int draws = 100000;
  const double eps = 1e-5;
  for (double t : {0.2, 0.5, 0.8}) {
    // Antithetic pairs (z, -z) with common random numbers across t +- eps.
    double sum = 0.0, sum2 = 0.0, energy = 0.0;
    Vector z(d), mz(d);
    for (int s = 0; s < draws / 2; ++s) {
      fill_normal(rng, z);
      for (std::size_t k = 0; k < d; ++k) mz[k] = -z[k];
      auto half_sq = [&](double tt, const Vector& zz) {
        const Vector i = interpolate(c, tt, x0, x1, zz);
        return 0.5 * dot(i, i);
      };
      const double fd = 0.5 * ((half_sq(t + eps, z) - half_sq(t - eps, z)) + (half_sq(t + eps, mz) - half_sq(t - eps, mz))) / (2 * eps);
      sum += fd;
      sum2 += fd * fd;
      energy += half_sq(t, z);
    }
    const double n = draws / 2;
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / (n - 1));
    const double h = energy_rate_H(c, t, dot(x0, x0), dot(x1, x1), dot(x0, x1), static_cast<double>(d));
    EXPECT_LE(std::abs(mean - h), 3.0 * se + 1e-7 * std::max({1.0, std::abs(h), energy / n}));
  }
}

TEST(EnergyRate, ItoIdentityAlongFrozenPath) {
  Rng rng(8);
  const std::size_t d = 8;
  auto pathwise_error = [&](const InterpolantCoeffs& c, const Vector& x0, const Vector& x1,
                            const std::vector<Vector>& increments_fine, int coarsen) {
    const int n = static_cast<int>(increments_fine.size()) / coarsen;
    const double dt = 1.0 / n;
    Vector w(d, 0.0);
    double em = 0.0;
    for (int k = 0; k < n; ++k) {
      const double t = k * dt;
      Vector dw(d, 0.0);
      for (int s = 0; s < coarsen; ++s)
        for (std::size_t q = 0; q < d; ++q) dw[q] += increments_fine[k * coarsen + s][q];
      const CoeffEval e = eval_coeffs(c, t);
      Vector i(d), r(d);
      for (std::size_t q = 0; q < d; ++q) {
        i[q] = e.alpha * x0[q] + e.beta * x1[q] + e.gamma * w[q];
        r[q] = e.alpha_dot * x0[q] + e.beta_dot * x1[q] + e.gamma_dot * w[q];
      }
      em += (dot(i, r) + 0.5 * static_cast<double>(d) * e.gamma * e.gamma) * dt + e.gamma * dot(i, dw);
      for (std::size_t q = 0; q < d; ++q) w[q] += dw[q];
    }
    const CoeffEval e1 = eval_coeffs(c, 1.0);
    Vector i1(d);
    for (std::size_t q = 0; q < d; ++q) i1[q] = e1.alpha * x0[q] + e1.beta * x1[q] + e1.gamma * w[q];
    const double exact = 0.5 * dot(i1, i1) - 0.5 * dot(x0, x0);
    return std::abs(em - exact);
  };

  const int fine = 1 << 14;
  // Without noise the scheme is forward Euler on a smooth ODE: first order.
  {
    const InterpolantCoeffs c = random_coeffs(rng, 5, 0.0);
    const Vector x0 = random_vector(rng, d), x1 = random_vector(rng, d);
    std::vector<Vector> inc(fine, Vector(d, 0.0));
    const double e_coarse = pathwise_error(c, x0, x1, inc, 16);
    const double e_fine = pathwise_error(c, x0, x1, inc, 8);
    EXPECT_NEAR(e_coarse / e_fine, 2.0, 0.1);
  }
  // With noise the pathwise error shrinks with the step on average over paths.
  {
    const InterpolantCoeffs c = random_coeffs(rng, 5, 0.5);
    double coarse = 0.0, fine_err = 0.0, scale = 0.0;
    for (int path = 0; path < 20; ++path) {
      const Vector x0 = random_vector(rng, d), x1 = random_vector(rng, d);
      std::vector<Vector> inc(fine, Vector(d));
      for (auto& v : inc) {
        fill_normal(rng, v);
        for (double& x : v) x *= std::sqrt(1.0 / fine);
      }
      coarse += pathwise_error(c, x0, x1, inc, 64);
      fine_err += pathwise_error(c, x0, x1, inc, 1);
      scale += 0.5 * dot(x0, x0);
    }
    EXPECT_LT(fine_err, 0.5 * coarse);
    EXPECT_LT(fine_err / scale, 1e-2);
  }
}

TEST(EnergyLoss, ZeroWhenTargetMatches) {
  Rng rng(9);
  const PairBatch b = random_batch(rng, 5, 8);
  const InterpolantCoeffs c = random_coeffs(rng);
  const PairMoments m = moments(b);
  const RateTarget k = [&](double t) { return mean_energy_rate(c, t, m); };
  EXPECT_NEAR(energy_loss(c, b, Quadrature::midpoint(64), k), 0.0, 1e-20);
}

TEST(EnergyLoss, InvariantToBatchOrder) {
  Rng rng(10);
  PairBatch b = random_batch(rng, 7, 8);
  const InterpolantCoeffs c = random_coeffs(rng);
  const Quadrature q = Quadrature::midpoint(64);
  const double l0 = energy_loss(c, b, q);
  std::vector<Vector> a = b.x0, bb = b.x1;
  std::reverse(a.begin(), a.end());
  std::reverse(bb.begin(), bb.end());
  EXPECT_NEAR(energy_loss(c, PairBatch(a, bb), q), l0, 1e-12 * l0);
}

TEST(EnergyLoss, ScalingMatchesDenseReevaluation) {
  Rng rng(11);
  const PairBatch b = random_batch(rng, 6, 8);
  const InterpolantCoeffs c = random_coeffs(rng);
  const Quadrature q = Quadrature::midpoint(64);
  const double scale = 2.0;
  std::vector<Vector> a = b.x0, bb = b.x1;
  for (auto& v : a)
    for (double& x : v) x *= std::sqrt(scale);
  for (auto& v : bb)
    for (double& x : v) x *= std::sqrt(scale);
  const PairBatch scaled(a, bb);
  // Oracle: per-pair H, averaged explicitly, squared and summed over nodes.
  double oracle = 0.0;
  for (std::size_t n = 0; n < q.nodes.size(); ++n) {
    double mean = 0.0;
    for (std::size_t p = 0; p < scaled.size(); ++p)
      mean += energy_rate_H(c, q.nodes[n], dot(a[p], a[p]), dot(bb[p], bb[p]), dot(a[p], bb[p]), 8.0);
    mean /= static_cast<double>(scaled.size());
    oracle += q.weights[n] * mean * mean;
  }
  EXPECT_NEAR(energy_loss(c, scaled, q), oracle, 1e-10 * oracle);
  EXPECT_NE(energy_loss(c, scaled, q), energy_loss(c, b, q));
}

TEST(EnergyLoss, RejectsEmptyBatch) {
  EXPECT_THROW(energy_loss(InterpolantCoeffs::zeros(5), PairBatch(), Quadrature::midpoint(8)), ConfigError);
}

TEST(TransportLoss, ZeroForZeroStatesWithoutNoise) {
  const PairBatch b({Vector(4, 0.0)}, {Vector(4, 0.0)});
  EXPECT_EQ(transport_loss(InterpolantCoeffs::zeros(5, 0.0), b, Quadrature::midpoint(64)), 0.0);
}

TEST(TransportLoss, IdenticalStatesClosedForm) {
  Rng rng(12);
  const Vector x = random_vector(rng, 10);
  const PairBatch b({x}, {x});
  const double expected = (pi * pi / 4.0) * (1.0 - 2.0 / pi) * dot(x, x);
  EXPECT_NEAR(transport_loss(InterpolantCoeffs::zeros(5, 0.0), b, Quadrature::midpoint(10000)), expected, 1e-8 * expected);
  EXPECT_NEAR(expected / dot(x, x), 0.89660, 1e-5);
}

TEST(TransportLoss, FourierTermAgainstDenseQuadratureOracle) {
  Rng rng(13);
  const PairBatch b = random_batch(rng, 1, 6);
  InterpolantCoeffs c = InterpolantCoeffs::zeros(5, 0.1);
  c.alpha_hat[0] = 0.2;
  c.beta_hat[2] = -0.15;
  const double oracle = oracle_transport(c, b.n00[0], b.n11[0], b.n01[0], 6.0, 10000);
  EXPECT_NEAR(transport_loss(c, b, Quadrature::midpoint(10000)), oracle, 1e-4 * oracle);
}

TEST(TransportLoss, SampledNoiseAgreesWithAnalytic) {
  Rng rng(14);
  const PairBatch b = random_batch(rng, 3, 8);
  const InterpolantCoeffs c = random_coeffs(rng, 5, 0.5);
  const Quadrature q = Quadrature::midpoint(16);
  const double analytic = transport_loss(c, b, q);
  const double sampled = transport_loss_sampled(c, b, q, 2000, rng);
  EXPECT_NEAR(sampled, analytic, 0.02 * analytic);
}

TEST(LossGradients, MatchCentralDifferences) {
  Rng rng(15);
  const PairBatch b = random_batch(rng, 4, 8);
  const PairMoments m = moments(b);
  const Quadrature q = Quadrature::midpoint(64);
  for (const LossWeights w : {LossWeights{1.0, 0.0}, LossWeights{0.0, 1.0}, LossWeights{1.0, 1.0}}) {
    const InterpolantCoeffs c = random_coeffs(rng);
    Vector g;
    interpolant_objective(c, m, q, w, &g);
    const Vector p = c.flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double eps = 1e-6;
      Vector pp = p, pm = p;
      pp[i] += eps;
      pm[i] -= eps;
      const double fd = (interpolant_objective(c.with_flat(pp), m, q, w) - interpolant_objective(c.with_flat(pm), m, q, w)) / (2 * eps);
      EXPECT_LE(rel_err(g[i], fd), 1e-6) << "component " << i;
    }
  }
}
