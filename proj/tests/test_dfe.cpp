#include "bdlf/dfe.hpp"
#include "bdlf/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace bdlf;
using V = ad::Var<double>;

template <class T>
FeatureMap<T> map_of(const Matrix<T>& m, ad::SpatialShape s) {
  return {ad::constant<T>(m), s};
}

struct Stack {
  Stack(Eigen::Index c_mid, int depth, bool spatial, std::uint64_t seed = 1)
      : rng(seed), dfe(store, c_mid, depth, spatial, rng) {}
  ParamStore<double> store;
  Rng rng;
  DetailExtractor<double> dfe;
};

TEST(Coupling, ZeroInitIsIdentity) {
  Stack s(16, 3, true);
  Rng rng(2);
  const ad::SpatialShape shape{4, 3, 3};
  const Matrix<double> x = random_normal<double>(shape.rows(), 16, 1.0, rng);
  for (const auto& b : s.dfe.blocks()) {
    EXPECT_TRUE(b.coupling(map_of(x, shape)).value() == x);
    EXPECT_TRUE(b.inverse(x, shape) == x);
  }
}

TEST(Coupling, SingleBlockRoundTrip) {
  for (bool spatial : {false, true}) {
    Stack s(12, 1, spatial);
    Rng rng(3);
    oracle::randomize_parameters(s.store, 0.3, rng);
    const ad::SpatialShape shape = spatial ? ad::SpatialShape{3, 4, 4} : ad::SpatialShape{10, 1, 1};
    const Matrix<double> x = random_normal<double>(shape.rows(), 12, 1.0, rng);
    const auto& b = s.dfe.blocks().front();
    const Matrix<double> y = b.coupling(map_of(x, shape)).value();
    EXPECT_GT((y - x).cwiseAbs().maxCoeff(), 1e-2);  // the block is not trivially the identity
    EXPECT_LE((b.inverse(y, shape) - x).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Coupling, TwoBlockStackInvertsInReverse) {
  Stack s(8, 2, false);
  Rng rng(4);
  oracle::randomize_parameters(s.store, 0.3, rng);
  const ad::SpatialShape shape{6, 1, 1};
  const Matrix<double> x = random_normal<double>(6, 8, 1.0, rng);
  const auto& b = s.dfe.blocks();
  const Matrix<double> y1 = b[0].coupling(map_of(x, shape)).value();
  const Matrix<double> y2 = b[1].coupling(map_of(y1, shape)).value();
  const Matrix<double> back = b[0].inverse(b[1].inverse(y2, shape), shape);
  EXPECT_LE((back - x).cwiseAbs().maxCoeff(), 1e-10);
  // the wrong order does not invert
  EXPECT_GT((b[1].inverse(b[0].inverse(y2, shape), shape) - x).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Coupling, OddWidthRejected) {
  ParamStore<double> store;
  Rng rng(1);
  EXPECT_THROW(INNBlock<double>(store, "b", 7, false, rng), std::invalid_argument);
}

TEST(Coupling, StackRoundTripOracle) {
  for (bool spatial : {false, true}) {
    ParamStore<double> store;
    Rng rng(5);
    DetailExtractor<double> dfe(store, 16, 6, spatial, rng);
    oracle::randomize_parameters(store, 0.1, rng);
    for (auto& e : store.entries()) {
      if (e.name.find(".ln.gamma") != std::string::npos) e.var.mutable_value().array() += 1.0;
    }
    const ad::SpatialShape shape = spatial ? ad::SpatialShape{2, 2, 2} : ad::SpatialShape{8, 1, 1};
    const auto rep = oracle::check_inn_roundtrip(dfe.blocks(), 20, 1e-10, shape.rows(), shape, rng);
    EXPECT_TRUE(rep.pass) << rep.max_error << " block " << rep.failing_block;
  }
}

TEST(Coupling, RoundTripReportsFailingBlock) {
  ParamStore<double> store;
  Rng rng(6);
  DetailExtractor<double> dfe(store, 8, 3, false, rng);
  oracle::randomize_parameters(store, 0.3, rng);
  const auto rep = oracle::check_inn_roundtrip(dfe.blocks(), 2, 0.0, 4, ad::SpatialShape{4, 1, 1}, rng);
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.failing_block, 0);
}

TEST(DetailExtractor, OutputShapes) {
  Stack s(128, 6, false);
  Rng rng(7);
  const ad::SpatialShape shape{32, 1, 1};
  const auto out = s.dfe.forward(map_of<double>(random_normal<double>(32, 128, 1.0, rng), shape),
                                 map_of<double>(random_normal<double>(32, 128, 1.0, rng), shape));
  EXPECT_EQ(out.zd.rows(), 64);
  EXPECT_EQ(out.zd.cols(), 64);
  EXPECT_EQ(out.zd_v.rows(), 32);
  EXPECT_TRUE(out.zd.value().topRows(32) == out.zd_v.value());
}

TEST(DetailExtractor, SpatialPoolingShapes) {
  Stack s(16, 2, true);
  Rng rng(8);
  const ad::SpatialShape shape{5, 2, 3};
  const auto out = s.dfe.forward(map_of<double>(random_normal<double>(shape.rows(), 16, 1.0, rng), shape),
                                 map_of<double>(random_normal<double>(shape.rows(), 16, 1.0, rng), shape));
  EXPECT_EQ(out.zd.rows(), 10);
  EXPECT_EQ(out.zd.cols(), 8);
}

TEST(DetailExtractor, SymmetricInputsGiveEqualDetail) {
  Stack s(16, 3, false);
  Rng rng(9);
  oracle::randomize_parameters(s.store, 0.2, rng);
  const ad::SpatialShape shape{6, 1, 1};
  const auto x = random_normal<double>(6, 16, 1.0, rng);
  const auto out = s.dfe.forward(map_of(x, shape), map_of(x, shape));
  EXPECT_TRUE(out.zd_v.value() == out.zd_i.value());
}

TEST(DetailExtractor, AttentionRowsSumToOne) {
  Stack s(16, 1, false);
  Rng rng(10);
  const auto q = ad::constant<double>(random_normal<double>(7, 8, 1.0, rng));
  const auto k = ad::constant<double>(random_normal<double>(7, 8, 1.0, rng));
  const Matrix<double> a = s.dfe.attention().attention(q, k).value();
  EXPECT_EQ(a.rows(), 7);
  EXPECT_EQ(a.cols(), 7);
  EXPECT_LE((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6);
  EXPECT_GE(a.minCoeff(), 0.0);
}

TEST(DetailExtractor, PairPermutationEquivariance) {
  Stack s(16, 2, false);
  Rng rng(11);
  oracle::randomize_parameters(s.store, 0.2, rng);
  const ad::SpatialShape shape{5, 1, 1};
  const auto xv = random_normal<double>(5, 16, 1.0, rng);
  const auto xi = random_normal<double>(5, 16, 1.0, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const Matrix<double> pv = perm * xv;
  const Matrix<double> pi = perm * xi;
  const auto a = s.dfe.forward(map_of(xv, shape), map_of(xi, shape));
  const auto b = s.dfe.forward(map_of(pv, shape), map_of(pi, shape));
  EXPECT_LE((Matrix<double>(perm * a.zd_v.value()) - b.zd_v.value()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((Matrix<double>(perm * a.zd_i.value()) - b.zd_i.value()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DetailExtractor, BypassPoolsFirstHalf) {
  Rng rng(12);
  const ad::SpatialShape shape{2, 1, 2};
  const auto x = random_normal<double>(4, 6, 1.0, rng);
  const auto out = DetailExtractor<double>::bypass(map_of(x, shape), map_of(x, shape));
  EXPECT_EQ(out.zd_v.cols(), 3);
  EXPECT_NEAR(out.zd_v.value()(1, 2), 0.5 * (x(2, 2) + x(3, 2)), 1e-15);
}

// ---------------------------------------------------------------- losses

struct Heads {
  explicit Heads(int n_classes) : rng(13), head(store, 10, 6, n_classes, rng),
                                  cls_b(store, "cls_b", 10, n_classes, rng, 0.5, false) {}
  ParamStore<double> store;
  Rng rng;
  DetailHead<double> head;
  Linear<double> cls_b;
};

std::vector<int> pack_labels(std::vector<int> pairs) {
  std::vector<int> l(pairs);
  l.insert(l.end(), pairs.begin(), pairs.end());
  return l;
}

TEST(DfeLoss, UniformClassifierGivesLog8) {
  Heads h(8);
  for (auto& e : h.store.entries()) {
    if (e.name.rfind("head.cls_d", 0) == 0) e.var.mutable_value().setZero();
  }
  Rng rng(14);
  const auto zd = ad::constant<double>(random_normal<double>(8, 6, 1.0, rng));
  const auto z = ad::constant<double>(random_normal<double>(8, 10, 1.0, rng));
  const auto l = dfe_loss(zd, z, h.head, h.cls_b, pack_labels({0, 3, 5, 7}));
  EXPECT_NEAR(l.l_id_D.item(), std::log(8.0), 1e-12);
  EXPECT_DOUBLE_EQ(l.l_DFE.item(), l.l_id_D.item() + l.l_odkl.item());
}

TEST(DfeLoss, AlignmentBoundedByTeacherEntropy) {
  Heads h(5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const auto zd = ad::constant<double>(random_normal<double>(6, 6, 1.0, rng));
    const auto z = ad::constant<double>(random_normal<double>(6, 10, 1.0, rng));
    const auto l = dfe_loss(zd, z, h.head, h.cls_b, pack_labels({0, 1, 2}));
    EXPECT_GE(l.l_odkl.item(), softmax_entropy<double>(h.cls_b(z).value()));
  }
}

TEST(DfeLoss, AlignmentMinimumAtMatchingPredictions) {
  // with cls_d = the first 6 rows of cls_b and z = [zd | 0], both heads agree
  Heads h(4);
  auto cls_d = h.store.get("head.cls_d.weight");
  cls_d.mutable_value() = h.cls_b.weight().value().topRows(6);
  Rng rng(15);
  const Matrix<double> zd = random_normal<double>(6, 6, 1.0, rng);
  Matrix<double> z = Matrix<double>::Zero(6, 10);
  z.leftCols(6) = zd;
  const auto l = dfe_loss(ad::constant<double>(zd), ad::constant<double>(z), h.head, h.cls_b, pack_labels({0, 1, 2}));
  EXPECT_NEAR(l.l_odkl.item(), softmax_entropy<double>(h.cls_b(ad::constant<double>(z)).value()), 1e-12);
}

TEST(DfeLoss, LabelHalvesMustAgree) {
  Heads h(4);
  const auto zd = ad::constant<double>(Matrix<double>::Zero(4, 6));
  const auto z = ad::constant<double>(Matrix<double>::Zero(4, 10));
  EXPECT_THROW(dfe_loss(zd, z, h.head, h.cls_b, {0, 1, 1, 1}), std::invalid_argument);
}

TEST(DfeLoss, PairPermutationLeavesLossUnchanged) {
  Heads h(4);
  Rng rng(16);
  const Matrix<double> zd = random_normal<double>(6, 6, 1.0, rng);
  const Matrix<double> z = random_normal<double>(6, 10, 1.0, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 2, 0, 1, 5, 3, 4;  // same pair permutation in both halves
  const auto a = dfe_loss(ad::constant<double>(zd), ad::constant<double>(z), h.head, h.cls_b, pack_labels({0, 1, 2}));
  const auto b = dfe_loss(ad::constant<double>(Matrix<double>(perm * zd)), ad::constant<double>(Matrix<double>(perm * z)),
                          h.head, h.cls_b, pack_labels({1, 2, 0}));
  EXPECT_NEAR(a.l_DFE.item(), b.l_DFE.item(), 1e-13);
}

}  // namespace
