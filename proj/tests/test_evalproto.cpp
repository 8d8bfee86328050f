#include "bdlf/evalproto.hpp"
#include "bdlf/oracle.hpp"

#include <gtest/gtest.h>

namespace {

using namespace bdlf;

struct Instance {
  Matrix<double> q, g;
  std::vector<int> qid, qcam, gid, gcam;
};

Instance random_instance(std::uint64_t seed, Eigen::Index nq = 50, Eigen::Index ng = 200, int ids = 20) {
  Rng rng(seed);
  Instance in;
  in.q = random_normal<double>(nq, 6, 1.0, rng);
  in.g = random_normal<double>(ng, 6, 1.0, rng);
  std::uniform_int_distribution<int> id(0, ids - 1), cam(0, 2);
  for (Eigen::Index i = 0; i < nq; ++i) {
    in.qid.push_back(id(rng));
    in.qcam.push_back(cam(rng));
  }
  for (Eigen::Index j = 0; j < ng; ++j) {
    in.gid.push_back(id(rng));
    in.gcam.push_back(cam(rng));
  }
  // a few exact ties to exercise the ordering rule
  in.g.row(1) = in.g.row(0);
  in.g.row(3) = in.g.row(2);
  return in;
}

EvalReport score(const Instance& in, Metric m, int max_rank = 20) {
  return cmc_map(in.q, in.qid, in.qcam, in.g, in.gid, in.gcam, m, max_rank);
}

TEST(Ap, BruteForceValues) {
  EXPECT_DOUBLE_EQ(oracle::brute_force_ap({1, 0, 1}), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(oracle::brute_force_ap({0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(oracle::brute_force_ap({1, 0, 0}), 1.0);
}

TEST(CmcMap, RelevanceOneZeroOne) {
  Matrix<double> q(1, 1), g(3, 1);
  q << 0;
  g << 1, 2, 3;
  const auto r = cmc_map(q, {7}, {0}, g, {7, 8, 7}, {1, 1, 1}, Metric::euclidean, 3);
  EXPECT_DOUBLE_EQ(r.map, 5.0 / 6.0);
  EXPECT_EQ(r.cmc, (std::vector<double>{1, 1, 1}));
}

TEST(CmcMap, HandExampleSecondRank) {
  Matrix<double> q(1, 2), g(3, 2);
  q << 0, 0;
  g << 1, 0, 2, 0, 5, 5;
  const auto r = cmc_map(q, {1}, {0}, g, {2, 1, 3}, {1, 1, 1}, Metric::euclidean, 3);
  EXPECT_EQ(r.cmc, (std::vector<double>{0, 1, 1}));
  EXPECT_DOUBLE_EQ(r.map, 0.5);
  EXPECT_DOUBLE_EQ(r.rank1(), 0.0);
}

TEST(CmcMap, PerfectDuplicates) {
  Rng rng(3);
  const Matrix<double> f = random_normal<double>(10, 4, 1.0, rng);
  std::vector<int> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto r = cmc_map(f, ids, std::vector<int>(10, 0), f, ids, std::vector<int>(10, 1));
  EXPECT_DOUBLE_EQ(r.rank1(), 1.0);
  EXPECT_DOUBLE_EQ(r.map, 1.0);
  EXPECT_EQ(r.n_queries, 10);
}

TEST(CmcMap, SameCameraSameIdentityIsDropped) {
  Matrix<double> q(1, 1), g(2, 1);
  q << 0;
  g << 0, 1;
  // the exact duplicate shares identity and camera, so only the second entry counts
  const auto r = cmc_map(q, {4}, {2}, g, {4, 4}, {2, 0}, Metric::euclidean, 2);
  EXPECT_DOUBLE_EQ(r.map, 1.0);
  // with nothing left the query is excluded
  const auto none = cmc_map(q, {4}, {2}, g, {4, 5}, {2, 0}, Metric::euclidean, 2);
  EXPECT_EQ(none.n_excluded, 1);
  EXPECT_EQ(none.n_queries, 0);
  EXPECT_EQ(none.map, 0.0);
}

class OracleAgreement : public ::testing::TestWithParam<Metric> {};

TEST_P(OracleAgreement, TwentyRandomInstances) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(1000 + seed);
    const auto fast = score(in, GetParam());
    const auto ref = oracle::brute_force_cmc_map(in.q, in.qid, in.qcam, in.g, in.gid, in.gcam, GetParam(), 20);
    ASSERT_EQ(fast.n_queries, ref.n_queries);
    ASSERT_EQ(fast.n_excluded, ref.n_excluded);
    EXPECT_NEAR(fast.map, ref.map, 1e-9);
    for (std::size_t k = 0; k < 20; ++k) EXPECT_NEAR(fast.cmc[k], ref.cmc[k], 1e-9);
    for (std::size_t i = 0; i < fast.ap.size(); ++i) EXPECT_NEAR(fast.ap[i], ref.ap[i], 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(Metrics, OracleAgreement, ::testing::Values(Metric::euclidean, Metric::cosine),
                         [](const auto& info) { return to_string(info.param); });

TEST(CmcMap, InvariantUnderScaling) {
  const auto in = random_instance(7);
  auto scaled = in;
  scaled.q *= 3.5;
  scaled.g *= 3.5;
  const auto a = score(in, Metric::euclidean), b = score(scaled, Metric::euclidean);
  EXPECT_DOUBLE_EQ(a.map, b.map);
  EXPECT_EQ(a.cmc, b.cmc);
  // cosine ignores per-row norms; powers of two keep the scores bit-identical
  auto rows = in;
  for (Eigen::Index j = 0; j < rows.g.rows(); ++j) rows.g.row(j) *= std::ldexp(1.0, static_cast<int>(j % 5));
  EXPECT_DOUBLE_EQ(score(in, Metric::cosine).map, score(rows, Metric::cosine).map);
}

TEST(CmcMap, CurveMonotoneAndBounded) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = score(random_instance(50 + seed), Metric::euclidean, 200);
    for (std::size_t k = 1; k < r.cmc.size(); ++k) EXPECT_GE(r.cmc[k], r.cmc[k - 1]);
    EXPECT_GE(r.cmc.front(), 0.0);
    EXPECT_DOUBLE_EQ(r.cmc.back(), 1.0);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
  }
}

TEST(CmcMap, Errors) {
  const auto in = random_instance(2, 3, 5, 3);
  EXPECT_THROW(cmc_map(in.q, {0}, in.qcam, in.g, in.gid, in.gcam), std::invalid_argument);
  EXPECT_THROW(cmc_map(in.q, in.qid, in.qcam, Matrix<double>(in.g.leftCols(2)), in.gid, in.gcam),
               std::invalid_argument);
  EXPECT_THROW(cmc_map(in.q, in.qid, in.qcam, in.g, in.gid, in.gcam, Metric::euclidean, 0), std::invalid_argument);
  EXPECT_THROW(metric_from_string("manhattan"), std::invalid_argument);
}

// ---------------------------------------------------------------- split

ModalSet small_set() {
  ModalSet s;
  s.shape = ObservationShape::flat(2);
  s.vis = Matrix<float>::Zero(6, 2);
  s.ir = Matrix<float>::Zero(8, 2);
  for (Eigen::Index r = 0; r < 6; ++r) s.vis(r, 0) = static_cast<float>(r);
  for (Eigen::Index r = 0; r < 8; ++r) s.ir(r, 0) = static_cast<float>(100 + r);
  s.vis_labels = {0, 0, 1, 1, 2, 2};
  s.vis_cams = {0, 1, 0, 1, 0, 1};
  s.ir_labels = {0, 0, 1, 1, 2, 2, 2, 2};
  s.ir_cams = {0, 1, 0, 1, 0, 0, 1, 1};
  return s;
}

TEST(Split, FullGalleryAndModes) {
  Rng rng(1);
  const auto a = make_protocol_split(small_set(), ProtocolMode::vis_to_ir, rng);
  EXPECT_EQ(a.query.rows.rows(), 6);
  EXPECT_EQ(a.gallery.rows.rows(), 8);
  EXPECT_EQ(a.gallery.rows(0, 0), 100.0f);
  const auto b = make_protocol_split(small_set(), ProtocolMode::ir_to_vis, rng);
  EXPECT_EQ(b.query.rows.rows(), 8);
  EXPECT_EQ(b.gallery.ids, small_set().vis_labels);
}

TEST(Split, PerCameraSamplingIsSeeded) {
  Rng r1(4), r2(4);
  const auto a = make_protocol_split(small_set(), ProtocolMode::vis_to_ir, r1, 1);
  const auto b = make_protocol_split(small_set(), ProtocolMode::vis_to_ir, r2, 1);
  EXPECT_EQ(a.gallery.rows.rows(), 6);  // one per (identity, camera)
  EXPECT_TRUE(a.gallery.rows == b.gallery.rows);
  std::set<std::pair<int, int>> groups;
  for (std::size_t k = 0; k < a.gallery.ids.size(); ++k) groups.insert({a.gallery.ids[k], a.gallery.cams[k]});
  EXPECT_EQ(groups.size(), 6u);
}

TEST(Split, MissingIdentityInTarget) {
  auto s = small_set();
  s.vis_labels.back() = 9;
  Rng rng(1);
  EXPECT_THROW(make_protocol_split(s, ProtocolMode::vis_to_ir, rng), std::invalid_argument);
  EXPECT_THROW(make_protocol_split(small_set(), ProtocolMode::vis_to_ir, rng, -1), std::invalid_argument);
}

}  // namespace
