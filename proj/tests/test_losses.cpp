#include "bdlf/losses.hpp"
#include "bdlf/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace bdlf;
using V = ad::Var<double>;

V cst(const Matrix<double>& m) { return ad::constant<double>(m); }

Matrix<double> randn(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double s = 1.0) {
  Rng rng(seed);
  return random_normal<double>(r, c, s, rng);
}

// ---------------------------------------------------------------- pearson

TEST(Pearson, SelfAndNegation) {
  const auto x = randn(5, 9, 1);
  EXPECT_NEAR(pearson_corr(cst(x), cst(x)).item(), 1.0, 1e-12);
  EXPECT_NEAR(pearson_corr(cst(x), cst(-x)).item(), -1.0, 1e-12);
}

TEST(Pearson, MatchesTextbookFormula) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = randn(4, 8, 100 + seed);
    const auto b = randn(4, 8, 200 + seed);
    EXPECT_NEAR(pearson_corr(cst(a), cst(b)).item(), oracle::textbook_pearson(a, b), 1e-10);
  }
}

TEST(Pearson, SymmetricAndBounded) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = randn(6, 5, 300 + seed);
    const auto b = randn(6, 5, 400 + seed);
    const double ab = pearson_corr(cst(a), cst(b)).item();
    EXPECT_DOUBLE_EQ(ab, pearson_corr(cst(b), cst(a)).item());
    EXPECT_LE(std::abs(ab), 1.0);
  }
}

TEST(Pearson, RowAffineInvariance) {
  const auto a = randn(4, 7, 5);
  const auto b = randn(4, 7, 6);
  Matrix<double> scaled = b;
  const double alphas[] = {0.5, 3.0, 10.0, 0.1};
  for (Eigen::Index i = 0; i < 4; ++i) scaled.row(i) = alphas[i] * b.row(i).array() + (1.0 + i);
  const double r = pearson_corr(cst(a), cst(b)).item();
  EXPECT_NEAR(pearson_corr(cst(a), cst(scaled)).item(), r, 1e-12);
  EXPECT_NEAR(pearson_corr(cst(a), cst(-scaled)).item(), -r, 1e-12);
}

TEST(Pearson, ConstantRowContributesZero) {
  Matrix<double> a = randn(2, 4, 7);
  Matrix<double> b = a;
  b.row(1).setConstant(3.0);
  EXPECT_NEAR(pearson_corr(cst(a), cst(b)).item(), 0.5, 1e-12);
}

TEST(Pearson, Errors) {
  Matrix<double> a = randn(2, 4, 8);
  EXPECT_THROW(pearson_corr(cst(a), cst(randn(2, 5, 9))), std::invalid_argument);
  EXPECT_THROW(pearson_corr(cst(randn(2, 1, 9)), cst(randn(2, 1, 9))), std::invalid_argument);
  a(0, 0) = std::nan("");
  EXPECT_THROW(pearson_corr(cst(a), cst(a)), std::domain_error);
}

// ---------------------------------------------------------------- skd

TEST(Skd, HandValues) {
  const SKDConfig cfg;
  EXPECT_NEAR(skd_value(0.999, 0.001, cfg), 5.28e-4, 5e-7);
  EXPECT_NEAR(skd_value(0.5, 0.5, cfg), 0.7921, 1e-4);
}

TEST(Skd, NonNegativeAndMonotone) {
  const SKDConfig cfg;
  const double h = 1e-6;
  for (double cb = 0.01; cb < 0.99; cb += 0.07) {
    for (double cd = 0.01; cd < 0.99; cd += 0.07) {
      EXPECT_GE(skd_value(cb, cd, cfg), 0.0);
      const double d_cb = (skd_value(cb + h, cd, cfg) - skd_value(cb - h, cd, cfg)) / (2 * h);
      const double d_cd = (skd_value(cb, cd + h, cfg) - skd_value(cb, cd - h, cfg)) / (2 * h);
      EXPECT_LT(d_cb, 0.0) << cb << " " << cd;
      EXPECT_GT(d_cd, 0.0) << cb << " " << cd;
    }
  }
}

TEST(Skd, GraphMatchesScalarForm) {
  const SKDConfig cfg;
  const auto zb_v = randn(6, 10, 11);
  const Matrix<double> zb_i = zb_v + randn(6, 10, 12, 0.3);
  const auto zd_v = randn(6, 5, 13);
  const Matrix<double> zd_i = zd_v + randn(6, 5, 14, 2.0);
  const double cb = oracle::textbook_pearson(zb_v, zb_i);
  const double cd = oracle::textbook_pearson(zd_v, zd_i);
  EXPECT_NEAR(skd_loss(cst(zb_v), cst(zb_i), cst(zd_v), cst(zd_i), cfg).item(), skd_value(cb, cd, cfg), 1e-12);
}

TEST(Skd, ConfigBound) {
  SKDConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.gamma = cfg.gamma_bound() * 1.01;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------- id / align

TEST(IdLoss, UniformLogits) {
  const std::vector<int> labels{0, 3, 7, 5};
  EXPECT_NEAR(id_loss(cst(Matrix<double>::Zero(4, 8)), labels).item(), std::log(8.0), 1e-12);
}

TEST(IdLoss, ConfidentCorrectApproachesZero) {
  Matrix<double> logits = Matrix<double>::Zero(3, 5);
  const std::vector<int> labels{1, 4, 0};
  for (int i = 0; i < 3; ++i) logits(i, labels[static_cast<std::size_t>(i)]) = 50.0;
  EXPECT_LT(id_loss(cst(logits), labels).item(), 1e-20);
}

TEST(IdLoss, PermutationInvariant) {
  const auto logits = randn(4, 6, 15);
  const std::vector<int> labels{2, 0, 5, 1};
  Matrix<double> perm(4, 6);
  perm << logits.row(2), logits.row(0), logits.row(3), logits.row(1);
  EXPECT_NEAR(id_loss(cst(logits), labels).item(), id_loss(cst(perm), {5, 2, 1, 0}).item(), 1e-14);
}

TEST(IdLoss, LabelOutOfRange) {
  EXPECT_THROW(id_loss(cst(Matrix<double>::Zero(2, 3)), {0, 3}), std::out_of_range);
  EXPECT_THROW(id_loss(cst(Matrix<double>::Zero(2, 3)), {0}), std::invalid_argument);
}

TEST(AlignCe, UniformMatch) {
  const Matrix<double> u = Matrix<double>::Zero(3, 4);
  EXPECT_NEAR(align_ce(cst(u), cst(u)).item(), std::log(4.0), 1e-12);
}

TEST(AlignCe, SaturatedMatchApproachesZero) {
  Matrix<double> t = Matrix<double>::Constant(2, 3, -60.0);
  t(0, 1) = 60.0;
  t(1, 2) = 60.0;
  EXPECT_LT(align_ce(cst(t), cst(t)).item(), 1e-20);
}

TEST(AlignCe, GibbsInequality) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = randn(5, 6, 500 + seed, 2.0);
    const auto t = randn(5, 6, 600 + seed, 2.0);
    EXPECT_GT(align_ce(cst(s), cst(t)).item(), softmax_entropy<double>(t));
    EXPECT_NEAR(align_ce(cst(t), cst(t)).item(), softmax_entropy<double>(t), 1e-12);
  }
}

TEST(AlignCe, TeacherReceivesNoGradient) {
  auto s = ad::parameter<double>(randn(3, 4, 16));
  auto t = ad::parameter<double>(randn(3, 4, 17));
  ad::backward(align_ce(s, t));
  EXPECT_TRUE(s.has_grad());
  EXPECT_FALSE(t.has_grad());
}

// ---------------------------------------------------------------- triplet

TEST(Triplet, SeparatedClustersGiveZero) {
  Matrix<double> e = Matrix<double>::Zero(4, 2);
  e.bottomRows(2).col(0).setConstant(10.0);
  EXPECT_EQ(triplet_loss(cst(e), {0, 0, 1, 1}, 0.3).item(), 0.0);
}

TEST(Triplet, IdenticalEmbeddingsGiveMargin) {
  const Matrix<double> e = Matrix<double>::Ones(6, 3);
  EXPECT_DOUBLE_EQ(triplet_loss(cst(e), {0, 0, 1, 1, 2, 2}, 0.3).item(), 0.3);
}

TEST(Triplet, MatchesExhaustiveOracle) {
  const std::vector<int> labels{0, 0, 1, 1, 2, 2, 3, 3};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto e = randn(8, 4, 700 + seed);
    EXPECT_NEAR(triplet_loss(cst(e), labels, 0.3).item(), oracle::exhaustive_triplet(e, labels, 0.3), 1e-10);
  }
}

TEST(Triplet, RejectsSingletonLabels) {
  EXPECT_THROW(triplet_loss(cst(randn(3, 2, 1)), {0, 0, 1}, 0.3), std::invalid_argument);
  EXPECT_THROW(triplet_loss(cst(randn(2, 2, 1)), {0, 0}, 0.3), std::invalid_argument);
}

// ---------------------------------------------------------------- breakdown

TEST(Breakdown, ValuesRoundTripAndComposition) {
  LossBreakdown b;
  b.l_id = 1;
  b.l_tri = 0.5;
  b.l_okl = 0.25;
  b.l_id_D = 2;
  b.l_odkl = 0.5;
  b.l_DFE = 2.5;
  b.l_fkl = 0.1;
  b.l_dkl = 0.2;
  b.l_dcorr = 0.3;
  b.l_app = 0.6;
  b.l_id_B = 1;
  b.l_bkl = 0.1;
  b.l_id_F = 0.4;
  b.l_fbkl = 0.1;
  b.l_cmf = 0.5;
  b.l_orth = 0.01;
  b.l_BEG = 2.21;
  b.l_skd = 0.3;
  b.total = 1 + 0.5 + 0.25 + 2.5 + 2.21 + 0.3;
  EXPECT_LT(b.composition_error(), 1e-12);
  EXPECT_EQ(LossBreakdown::from_values(b.values()).values(), b.values());
  b.l_cmf = 0.6;
  EXPECT_GT(b.composition_error(), 1e-3);
}

}  // namespace
