#include "bdlf/backbone.hpp"

#include <gtest/gtest.h>

namespace {

using namespace bdlf;

struct Net {
  explicit Net(BackboneConfig c, std::uint64_t seed = 1) : rng(seed), backbone(c, store, rng) {}
  ParamStore<double> store;
  Rng rng;
  Backbone<double> backbone;
};

ModalBatch random_batch(Eigen::Index n, Eigen::Index width, std::uint64_t seed) {
  Rng rng(seed);
  ModalBatch b;
  b.vis = random_normal<float>(n, width, 1.0, rng);
  b.ir = random_normal<float>(n, width, 1.0, rng);
  b.labels.assign(static_cast<std::size_t>(n), 0);
  return b;
}

TEST(Backbone, FlatShapes) {
  Net net(BackboneConfig{});
  const auto b = random_batch(32, 64, 2);
  const auto fore = net.backbone.encode_fore(b);
  EXPECT_EQ(fore.zm_v.data.rows(), 32);
  EXPECT_EQ(fore.zm_v.channels(), 128);
  const auto rear = net.backbone.encode_rear(fore.zm_v, fore.zm_i);
  EXPECT_EQ(rear.z_v.rows(), 32);
  EXPECT_EQ(rear.z.rows(), 64);
  EXPECT_EQ(rear.z.cols(), 256);
  EXPECT_TRUE(rear.z.value().allFinite());
}

TEST(Backbone, ImageShapes) {
  BackboneConfig c;
  c.flat_mode = false;
  c.input_shape = ObservationShape::image(3, 16, 16);
  Net net(c);
  const auto b = random_batch(32, 3 * 16 * 16, 3);
  const auto fore = net.backbone.encode_fore(b);
  // three stride-2 stages: 16 -> 8 -> 4 -> 2
  EXPECT_EQ(fore.zm_v.shape, (ad::SpatialShape{32, 2, 2}));
  EXPECT_EQ(fore.zm_v.channels(), 128);
  const auto rear = net.backbone.encode_rear(fore.zm_v, fore.zm_i);
  EXPECT_EQ(rear.z.rows(), 64);
  EXPECT_EQ(rear.z.cols(), 256);
}

TEST(Backbone, StackingOrderVisibleFirst) {
  Net net(BackboneConfig{});
  const auto b = random_batch(5, 64, 4);
  const auto fore = net.backbone.encode_fore(b);
  const auto rear = net.backbone.encode_rear(fore.zm_v, fore.zm_i);
  EXPECT_TRUE(rear.z.value().topRows(5) == rear.z_v.value());
  EXPECT_TRUE(rear.z.value().bottomRows(5) == rear.z_i.value());
}

TEST(Backbone, ZeroWeightsGiveZeroFeatures) {
  Net net(BackboneConfig{});
  for (auto& e : net.store.entries()) e.var.mutable_value().setZero();
  const auto b = random_batch(6, 64, 5);
  const auto fore = net.backbone.encode_fore(b);
  const auto rear = net.backbone.encode_rear(fore.zm_v, fore.zm_i);
  EXPECT_EQ(fore.zm_v.data.value().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rear.z.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backbone, SharedWeightsAcrossModalities) {
  Net net(BackboneConfig{});
  auto b = random_batch(7, 64, 6);
  b.ir = b.vis;
  const auto fore = net.backbone.encode_fore(b);
  const auto rear = net.backbone.encode_rear(fore.zm_v, fore.zm_i);
  EXPECT_TRUE(rear.z_v.value() == rear.z_i.value());

  // swapping the modality roles swaps the outputs
  auto swapped = random_batch(7, 64, 7);
  auto r1 = net.backbone.encode_rear(net.backbone.encode_fore(swapped).zm_v, net.backbone.encode_fore(swapped).zm_i);
  std::swap(swapped.vis, swapped.ir);
  auto r2 = net.backbone.encode_rear(net.backbone.encode_fore(swapped).zm_v, net.backbone.encode_fore(swapped).zm_i);
  EXPECT_TRUE(r1.z_v.value() == r2.z_i.value());
}

TEST(Backbone, EmbedMatchesRearOfFore) {
  Net net(BackboneConfig{});
  const auto b = random_batch(4, 64, 8);
  const auto rear = net.backbone.encode_rear(net.backbone.encode_fore(b).zm_v, net.backbone.encode_fore(b).zm_i);
  EXPECT_TRUE(net.backbone.embed(b.vis).value() == rear.z_v.value());
}

TEST(Backbone, Deterministic) {
  Net a(BackboneConfig{}, 3), b(BackboneConfig{}, 3);
  const auto batch = random_batch(4, 64, 9);
  EXPECT_TRUE(a.backbone.embed(batch.vis).value() == b.backbone.embed(batch.vis).value());
}

TEST(Backbone, SplitPointSetsMidWidth) {
  BackboneConfig c;
  c.split_after_stage = 2;
  Net net(c);
  EXPECT_EQ(net.backbone.c_mid(), 64);
  EXPECT_EQ(net.backbone.encode_fore(random_batch(3, 64, 1)).zm_v.channels(), 64);
}

TEST(Backbone, ConfigErrors) {
  BackboneConfig c;
  c.split_after_stage = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackboneConfig{};
  c.stages = {32, 63, 128};
  c.split_after_stage = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  Net net(BackboneConfig{});
  EXPECT_THROW(net.backbone.embed(Matrix<float>::Zero(2, 63)), std::invalid_argument);
}

}  // namespace
