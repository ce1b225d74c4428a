#include <gtest/gtest.h>

#include "damc/bounds.hpp"
#include "damc/synthgen.hpp"
#include "oracles.hpp"

using namespace damc;

namespace {

AssumptionConstants unit_constants() {
  AssumptionConstants c;
  c.kappa1 = c.kappa2 = c.kappa_star = c.gamma = c.script_p_star = 1.0;
  c.d = 4;
  c.r = 4;
  return c;
}

Matrix indicators(int m, int d) {
  Matrix x = Matrix::Zero(m, d);
  for (int i = 0; i < m; ++i) x(i, i % d) = 1.0;
  return x;
}

}  // namespace

TEST(AssumptionConstants, UniformPmf) {
  const int m = 12, d = 3;
  const Matrix p = Matrix::Constant(m, m, 1.0 / (m * m));
  // rank-1 pmf: use d = 1 so the eigengap is defined
  const AssumptionConstants c = assumption_constants(p, indicators(m, 1), indicators(m, 1), 1.0, 1);
  EXPECT_NEAR(c.kappa1, 1.0, 1e-12);
  EXPECT_NEAR(c.gamma, 1.0, 1e-12);
  EXPECT_NEAR(c.p_star, 1.0 / m, 1e-15);
  (void)d;
}

TEST(AssumptionConstants, BlockModelGamma) {
  // half identity over k blocks plus half uniform, lifted to groups of 5
  for (int k : {2, 3, 4, 6}) {
    const int m = 5 * k;
    const Matrix x = indicators(m, k);
    const Matrix small = 0.5 * Matrix::Identity(k, k) / k + 0.5 * Matrix::Constant(k, k, 1.0 / (k * k));
    const Matrix p = x * small * x.transpose() / 25.0;
    ASSERT_NEAR(p.sum(), 1.0, 1e-12);
    const AssumptionConstants c = assumption_constants(p, x, x, 1.0, k);
    EXPECT_NEAR(c.gamma, (k + 1) / 2.0, 1e-12);
  }
}

TEST(AssumptionConstants, EqualGroupBlockWorldIncoherence) {
  SynthConfig cfg;
  cfg.seed = 3;
  const SynthWorld w = make_world(cfg);
  const AssumptionConstants c = assumption_constants(w.pmf, w.x_star, w.y_star, 4.0, 4);
  EXPECT_DOUBLE_EQ(c.x_star, 1.0);
  EXPECT_DOUBLE_EQ(c.y_star, 1.0);
  EXPECT_DOUBLE_EQ(c.script_p_star, 1.0);
  EXPECT_NEAR(c.kappa2, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(c.r, 1.0);
  EXPECT_NEAR(c.kappa_star, oracle::spectral_norm(w.pmf) / c.eigengap, 1e-9 * c.kappa_star);
}

TEST(AssumptionConstants, AveragingInequalitiesOnRandomPmfs) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const int m = 6 + t % 5, n = 5 + t % 7, d = 2;
    const Matrix p = oracle::random_pmf(m, n, rng, 0.2);
    const Matrix x = oracle::gaussian(m, d, rng), y = oracle::gaussian(n, d, rng);
    AssumptionConstants c;
    try {
      c = assumption_constants(p, x, y, 2.0, d);
    } catch (const DegenerateEigengapError&) {
      continue;
    }
    EXPECT_GE(c.kappa1, 1.0 - 1e-12);
    EXPECT_GE(c.gamma, 1.0 - 1e-12);
    EXPECT_GT(c.p_star, 0.0);
    EXPECT_LE(c.p_star, 1.0);
    EXPECT_GE(c.r, 0.0);
    // kappa2 is the tight constant: both inequalities hold and one is an equality
    const double lx = oracle::spectral_norm(x), ly = oracle::spectral_norm(y);
    EXPECT_LE(lx, c.x_star * std::sqrt(c.kappa2 * m / d) * (1 + 1e-12));
    EXPECT_LE(ly, c.y_star * std::sqrt(c.kappa2 * n / d) * (1 + 1e-12));
    const double tight = std::max(lx / (c.x_star * std::sqrt(c.kappa2 * m / d)), ly / (c.y_star * std::sqrt(c.kappa2 * n / d)));
    EXPECT_NEAR(tight, 1.0, 1e-12);
  }
}

TEST(AssumptionConstants, ShapeErrors) {
  const Matrix p = Matrix::Constant(4, 4, 1.0 / 16);
  EXPECT_THROW(assumption_constants(p, Matrix::Zero(3, 1), Matrix::Zero(4, 1), 1, 1), ArgumentError);
  EXPECT_THROW(assumption_constants(p, indicators(4, 2), indicators(4, 2), 1, 2), DegenerateEigengapError);
}

TEST(TheoremBound, TermsFromDefinition) {
  const AssumptionConstants c = unit_constants();
  const BoundReport r = theorem_bound(c, 200, 200, 100000, 1000, 0.05, LossConstants{1.0, 1.0});
  EXPECT_NEAR(r.term_hoeffding, 2 * std::log(120.0) / std::sqrt(1000.0), 1e-12);
  EXPECT_NEAR(r.term_labeled, 16 * std::log(8 * M_E) * std::sqrt(16.0 / 1000), 1e-12);
  EXPECT_NEAR(r.term_unlabeled, 75 * std::log(96000.0) * std::sqrt(1600.0 / 1e5), 1e-10);
  EXPECT_NEAR(r.term_cross, 25 * std::log(96000.0) * std::sqrt(1600.0 / 1e8), 1e-12);
  EXPECT_DOUBLE_EQ(r.total, r.term_hoeffding + r.term_labeled + r.term_unlabeled + r.term_cross);
  EXPECT_NEAR(r.m_condition_threshold, 1.95e6, 0.01e6);
  EXPECT_FALSE(r.m_condition_met);
}

TEST(TheoremBound, ZeroLossConstantsGiveZero) {
  const BoundReport r = theorem_bound(unit_constants(), 50, 60, 100, 10, 0.1, LossConstants{0.0, 0.0});
  EXPECT_EQ(r.total, 0.0);
}

TEST(TheoremBound, Monotonicity) {
  const AssumptionConstants c = unit_constants();
  const LossConstants l{2.0, 3.0};
  const BoundReport a = theorem_bound(c, 100, 80, 5000, 300, 0.05, l);
  const BoundReport b = theorem_bound(c, 100, 80, 5000, 600, 0.05, l);
  EXPECT_LT(b.term_hoeffding, a.term_hoeffding);
  EXPECT_LT(b.term_labeled, a.term_labeled);
  EXPECT_LT(b.term_cross, a.term_cross);
  EXPECT_EQ(b.term_unlabeled, a.term_unlabeled);
  for (long big_m = 100; big_m < 1000000; big_m *= 3)
    for (long big_n = 10; big_n < 100000; big_n *= 3) {
      const double here = theorem_bound(c, 100, 80, big_m, big_n, 0.05, l).total;
      EXPECT_LE(theorem_bound(c, 100, 80, big_m * 2, big_n, 0.05, l).total, here);
      EXPECT_LE(theorem_bound(c, 100, 80, big_m, big_n * 2, 0.05, l).total, here);
    }
}

TEST(TheoremBound, AppendixForm) {
  const AssumptionConstants c = unit_constants();
  const BoundReport r = theorem_bound(c, 200, 200, 100000, 1000, 0.05, LossConstants{1.0, 1.0}, BoundForm::appendix);
  EXPECT_NEAR(r.term_hoeffding, 2.5 * std::log(120.0) / std::sqrt(1000.0), 1e-12);
  EXPECT_NEAR(r.term_labeled, 8 * std::log(8 * M_E) * std::sqrt(16.0 / 1000) * (1 + std::sqrt(1.0 / 1000)), 1e-12);
}

TEST(TheoremBound, RejectsUnboundedLossAndBadArguments) {
  const AssumptionConstants c = unit_constants();
  try {
    theorem_bound(c, 10, 10, 10, 10, 0.05, LossSpec::squared());
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("clipped_squared"), std::string::npos);
  }
  EXPECT_NO_THROW(theorem_bound(c, 10, 10, 10, 10, 0.05, LossSpec::clipped_squared(1, 5)));
  EXPECT_THROW(theorem_bound(c, 10, 10, 0, 10, 0.05, LossConstants{1, 1}), ArgumentError);
  EXPECT_THROW(theorem_bound(c, 10, 10, 10, 10, 1.5, LossConstants{1, 1}), ArgumentError);
}

TEST(ComplexityTerms, DefinitionExamples) {
  const ComplexityTerms zero = imc_complexity_terms(Matrix::Zero(3, 3), Matrix::Ones(3, 2), Matrix::Ones(3, 2));
  EXPECT_EQ(zero.sigma1_star, 0.0);
  EXPECT_EQ(zero.sigma2_star, 0.0);
  const ComplexityTerms id = imc_complexity_terms(Matrix::Constant(2, 2, 0.25), Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  EXPECT_NEAR(id.sigma1_star, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(id.sigma2_star, 1 / std::sqrt(2.0), 1e-15);
}

TEST(ComplexityTerms, DoubleLoopOracle) {
  std::mt19937_64 rng(2);
  const Matrix p = oracle::random_pmf(6, 5, rng);
  const Matrix x = oracle::gaussian(6, 3, rng), y = oracle::gaussian(5, 3, rng);
  Matrix left = Matrix::Zero(3, 3), right = Matrix::Zero(3, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) {
      const double yj = y.row(j).squaredNorm(), xi = x.row(i).squaredNorm();
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          left(a, b) += p(i, j) * yj * x(i, a) * x(i, b);
          right(a, b) += p(i, j) * xi * y(j, a) * y(j, b);
        }
    }
  const ComplexityTerms t = imc_complexity_terms(p, x, y);
  EXPECT_NEAR(t.sigma1_star, std::sqrt(oracle::spectral_norm(left)), 1e-12);
  EXPECT_NEAR(t.sigma2_star, std::sqrt(oracle::spectral_norm(right)), 1e-12);
  EXPECT_THROW(imc_complexity_terms(p, y, x), ArgumentError);
}

TEST(ComplexityTerms, UniformMarginalSpecialization) {
  // uniform marginals; side info built from orthonormal bases, so x*, y* are its max row norms
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const int m = 12, n = 12, d = 3;
    const Matrix p = Matrix::Constant(m, n, 1.0 / (m * n));
    const Matrix x = std::sqrt(double(m) / d) * Matrix(oracle::jacobi_svd(oracle::gaussian(m, d, rng)).u);
    const Matrix y = std::sqrt(double(n) / d) * Matrix(oracle::jacobi_svd(oracle::gaussian(n, d, rng)).u);
    const double xs = x.rowwise().norm().maxCoeff(), ys = y.rowwise().norm().maxCoeff();
    const double k2 = std::max(oracle::spectral_norm(x) * oracle::spectral_norm(x) * d / (xs * xs * m),
                               oracle::spectral_norm(y) * oracle::spectral_norm(y) * d / (ys * ys * n));
    const ComplexityTerms c = imc_complexity_terms(p, x, y);
    const double cap = xs * ys * std::sqrt(1.0 * k2 / d);
    EXPECT_LE(c.sigma1_star, cap + 1e-9);
    EXPECT_LE(c.sigma2_star, cap + 1e-9);
  }
}
