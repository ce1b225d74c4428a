#include <gtest/gtest.h>

#include "damc/imc.hpp"
#include "oracles.hpp"

using namespace damc;

namespace {

struct Instance {
  SideInfo side;
  Matrix core;
  std::vector<LabeledEntry> labeled;
};

Instance make_instance(int m, int n, int d, int count, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.side = side_info(truncated_svd(oracle::gaussian(m, n, rng), d), m, n);
  in.core = oracle::gaussian(d, d, rng);
  std::uniform_int_distribution<int> ri(0, m - 1), ci(0, n - 1);
  std::normal_distribution<double> nd;
  const Matrix full = in.side.x * in.core * in.side.y.transpose();
  for (int k = 0; k < count; ++k) {
    const int i = ri(rng), j = ci(rng);
    in.labeled.push_back({{i, j}, full(i, j) + noise * nd(rng)});
  }
  return in;
}

}  // namespace

TEST(SimplexProjection, MatchesBisectionOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int t = 0; t < 200; ++t) {
    Vector v(1 + t % 7);
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = u(rng);
    const double budget = u(rng);
    const Vector got = l1_simplex_project(v, budget);
    const Vector ref = oracle::simplex_project_bisect(v, budget);
    EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(got.sum(), budget + 1e-12);
    EXPECT_GE(got.minCoeff(), 0.0);
  }
}

TEST(SimplexProjection, EdgeCases) {
  Vector v(3);
  v << 1, 2, 3;
  EXPECT_EQ(l1_simplex_project(v, 10.0), v);
  EXPECT_NEAR(l1_simplex_project(v, 0.0).norm(), 0.0, 1e-15);
  Vector ties(3);
  ties << 2, 2, 2;
  const Vector p = l1_simplex_project(ties, 3.0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p(k), 1.0, 1e-15);
  EXPECT_THROW(l1_simplex_project(v, -1.0), ArgumentError);
  v(0) = -1;
  EXPECT_THROW(l1_simplex_project(v, 1.0), ArgumentError);
}

TEST(NuclearProjection, FeasibleIdempotentAndClosest) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 30; ++t) {
    const Matrix a = 2.0 * oracle::gaussian(4, 4, rng);
    const double budget = 1.0 + t * 0.1;
    const Matrix p = project_nuclear_ball(a, budget);
    EXPECT_LE(oracle::nuclear_norm(p), budget + 1e-9);
    EXPECT_LT((project_nuclear_ball(p, budget) - p).norm(), 1e-12);
    const double dist = (a - p).norm();
    for (int k = 0; k < 100; ++k) {
      Matrix q = oracle::gaussian(4, 4, rng);
      q *= budget / oracle::nuclear_norm(q) * std::uniform_real_distribution<double>(0, 1)(rng);
      EXPECT_LE(dist, (a - q).norm() + 1e-12);
    }
  }
}

TEST(NuclearProjection, InsideBallUnchanged) {
  Matrix a = Matrix::Identity(3, 3) * 0.1;
  EXPECT_EQ(project_nuclear_ball(a, 1.0), a);
  EXPECT_THROW(project_nuclear_ball(a, -1.0), ArgumentError);
}

TEST(Loss, ValuesDerivativesAndConstants) {
  const LossSpec sq = LossSpec::squared(), ab = LossSpec::absolute(), cl = LossSpec::clipped_squared(1, 5);
  EXPECT_DOUBLE_EQ(sq.value(3, 1), 4);
  EXPECT_DOUBLE_EQ(ab.value(3, 1), 2);
  EXPECT_DOUBLE_EQ(cl.value(7, 1), 16);  // prediction clipped to 5
  EXPECT_DOUBLE_EQ(cl.value(3, 0), 4);   // label clipped to 1
  EXPECT_FALSE(sq.lipschitz().has_value());
  EXPECT_FALSE(sq.bound().has_value());
  EXPECT_EQ(*ab.lipschitz(), 1.0);
  EXPECT_EQ(*cl.lipschitz(), 8.0);
  EXPECT_EQ(*cl.bound(), 16.0);
  for (double p : {1.3, 2.7, 4.4})
    for (const LossSpec* l : {&sq, &cl}) {
      const double h = 1e-6;
      const double fd = (l->value(p + h, 2.0) - l->value(p - h, 2.0)) / (2 * h);
      EXPECT_NEAR(l->derivative(p, 2.0), fd, 1e-6);
    }
  EXPECT_EQ(cl.derivative(6.0, 2.0), 0.0);
  EXPECT_THROW(LossSpec::clipped_squared(2, 2), ArgumentError);
  std::vector<LabeledEntry> labs = {{{0, 0}, 1.0}, {{0, 1}, 4.0}};
  const LossSpec inferred = LossSpec::clipped_squared(labs);
  EXPECT_EQ(inferred.clip_range->lo, 1.0);
  EXPECT_EQ(inferred.clip_range->hi, 4.0);
}

TEST(ImcObjective, GradientMatchesFiniteDifferences) {
  for (int t = 0; t < 20; ++t) {
    const Instance in = make_instance(15, 12, 3, 60, 0.3, 100 + t);
    const ImcObjective obj(in.side, in.labeled, LossSpec::squared());
    std::mt19937_64 rng(t);
    const Matrix c = oracle::gaussian(3, 3, rng);
    Matrix g;
    obj.risk(c, &g);
    Matrix fd(3, 3);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Matrix cp = c, cm = c;
        cp(i, j) += h;
        cm(i, j) -= h;
        fd(i, j) = (obj.risk(cp) - obj.risk(cm)) / (2 * h);
      }
    EXPECT_LE((g - fd).norm(), 1e-4 * std::max(1.0, fd.norm()));

    const Matrix a = oracle::gaussian(3, 2, rng), b = oracle::gaussian(3, 2, rng);
    Matrix ga, gb;
    obj.factored(a, b, 0.3, &ga, &gb);
    Matrix fda(3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        Matrix ap = a, am = a;
        ap(i, j) += h;
        am(i, j) -= h;
        fda(i, j) = (obj.factored(ap, b, 0.3) - obj.factored(am, b, 0.3)) / (2 * h);
      }
    EXPECT_LE((ga - fda).norm(), 1e-4 * std::max(1.0, fda.norm()));
  }
}

TEST(ImcObjective, PredictionsMatchFullProduct) {
  const Instance in = make_instance(10, 9, 3, 30, 0.0, 7);
  const ImcObjective obj(in.side, in.labeled, LossSpec::squared());
  const Vector p = obj.predictions(in.core);
  for (std::size_t k = 0; k < in.labeled.size(); ++k) EXPECT_NEAR(p(k), in.labeled[k].value, 1e-10);
  EXPECT_NEAR(obj.risk(in.core), 0.0, 1e-18);
  const auto pr = predict(in.side, in.core, label_entries(in.labeled));
  for (std::size_t k = 0; k < pr.size(); ++k) EXPECT_NEAR(pr[k], in.labeled[k].value, 1e-10);
  const auto clipped = predict(in.side, in.core, label_entries(in.labeled), ClipRange{-0.1, 0.1});
  for (double v : clipped) EXPECT_LE(std::abs(v), 0.1);
}

TEST(ImcObjective, RejectsBadInput) {
  const Instance in = make_instance(5, 5, 2, 5, 0.0, 8);
  EXPECT_THROW(ImcObjective(in.side, {}, LossSpec::squared()), ArgumentError);
  std::vector<LabeledEntry> bad = {{{5, 0}, 1.0}};
  EXPECT_THROW(ImcObjective(in.side, bad, LossSpec::squared()), ArgumentError);
  std::vector<Entry> q = {{0, 9}};
  EXPECT_THROW(predict(in.side, in.core, q), ArgumentError);
}

TEST(FitProjected, RecoversCoreWithinBudgetAndDescends) {
  const Instance in = make_instance(30, 25, 3, 400, 0.0, 9);
  const double budget = oracle::nuclear_norm(in.core) * 1.01;
  const FitResult r = fit_projected(in.side, in.labeled, budget, LossSpec::squared());
  EXPECT_LT((r.core - in.core).norm(), 1e-3 * in.core.norm());
  EXPECT_LE(r.nuclear_norm, budget + 1e-9);
  for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
    EXPECT_LE(r.objective_trace[k], r.objective_trace[k - 1] + 1e-15);
  EXPECT_TRUE(r.converged);
}

TEST(FitProjected, TightBudgetBinds) {
  const Instance in = make_instance(20, 20, 3, 300, 0.0, 10);
  const double budget = 0.5 * oracle::nuclear_norm(in.core);
  const FitResult r = fit_projected(in.side, in.labeled, budget, LossSpec::squared());
  EXPECT_NEAR(r.nuclear_norm, budget, 1e-6 * budget);
  EXPECT_THROW(fit_projected(in.side, in.labeled, 0.0, LossSpec::squared()), ArgumentError);
}

TEST(FitProjected, FixedStepAndAbsoluteLossRun) {
  const Instance in = make_instance(20, 20, 2, 200, 0.1, 11);
  SolverConfig cfg;
  cfg.step_size = 0.05;
  cfg.max_iters = 300;
  const FitResult r = fit_projected(in.side, in.labeled, 10.0, LossSpec::absolute(), cfg);
  EXPECT_LT(r.train_risk, r.objective_trace.front());
}

TEST(FitFactored, NoiselessRecoveryAndDeterminism) {
  const Instance in = make_instance(30, 25, 3, 400, 0.0, 12);
  SolverConfig cfg;
  cfg.seed = 4;
  const FitResult a = fit_factored(in.side, in.labeled, 0.0, 3, LossSpec::squared(), cfg);
  EXPECT_LT((a.core - in.core).norm(), 1e-2 * in.core.norm());
  const FitResult b = fit_factored(in.side, in.labeled, 0.0, 3, LossSpec::squared(), cfg);
  EXPECT_EQ(a.core, b.core);
  for (std::size_t k = 1; k < a.objective_trace.size(); ++k) EXPECT_LE(a.objective_trace[k], a.objective_trace[k - 1]);
  EXPECT_THROW(fit_factored(in.side, in.labeled, 0.0, 4, LossSpec::squared(), cfg), ArgumentError);
  EXPECT_THROW(fit_factored(in.side, in.labeled, -1.0, 3, LossSpec::squared(), cfg), ArgumentError);
}

TEST(FitFactored, RankCapLimitsCoreRank) {
  const Instance in = make_instance(20, 20, 4, 300, 0.0, 13);
  const FitResult r = fit_factored(in.side, in.labeled, 0.0, 2, LossSpec::squared());
  const auto s = oracle::jacobi_svd(r.core).s;
  EXPECT_LT(s(2), 1e-12 * s(0));
}

TEST(FitFactored, PenaltyBalancesFactors) {
  const Instance in = make_instance(20, 18, 3, 200, 0.2, 14);
  SolverConfig cfg;
  cfg.tolerance = 1e-14;
  cfg.max_iters = 20000;
  const FitResult r = fit_factored(in.side, in.labeled, 0.05, 3, LossSpec::squared(), cfg);
  const double half = 0.5 * (r.a.squaredNorm() + r.b.squaredNorm());
  const double nuc = oracle::nuclear_norm(r.core);
  EXPECT_LE(std::abs(half - nuc), 1e-3 * nuc);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.step_size = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EmpiricalRisk, Basics) {
  std::vector<double> p = {1, 2}, y = {2, 2};
  EXPECT_DOUBLE_EQ(empirical_risk(p, y, LossSpec::squared()), 0.5);
  EXPECT_THROW(empirical_risk({}, {}, LossSpec::squared()), ArgumentError);
}
