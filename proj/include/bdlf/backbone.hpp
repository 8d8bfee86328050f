#pragma once

// Single-stream encoder split into a fore part (intermediate spatial features
// Z^M) and a rear part (pooled comprehensive features Z).

#include "bdlf/autodiff.hpp"
#include "bdlf/json_util.hpp"
#include "bdlf/nn.hpp"
#include "bdlf/synthdata.hpp"

#include <string>
#include <vector>

namespace bdlf {

struct BackboneConfig {
  std::vector<int> stages{32, 64, 128, 256};
  /// Stages [0, split_after_stage) form the fore part.
  int split_after_stage = 3;
  ObservationShape input_shape = ObservationShape::flat(64);
  /// Affine + ReLU stages on flattened rows instead of stride-2 3x3 convolutions.
  bool flat_mode = true;

  int c_mid() const { return stages.at(static_cast<std::size_t>(split_after_stage - 1)); }
  int c_out() const { return stages.back(); }

  void validate() const {
    using json_util::check;
    check(!stages.empty(), "backbone.stages", "needs at least two stages");
    for (int w : stages) check(w > 0, "backbone.stages", "widths must be positive");
    check(split_after_stage >= 1 && split_after_stage < static_cast<int>(stages.size()),
          "backbone.split_after_stage", "must lie in [1, number of stages)");
    check(c_mid() % 2 == 0, "backbone.stages",
          "width at the split must be even (detail extraction halves it)");
  }
};

inline void to_json(Json& j, const BackboneConfig& c) {
  j = Json{{"stages", c.stages},
           {"split_after_stage", c.split_after_stage},
           {"input_shape", c.input_shape},
           {"flat_mode", c.flat_mode}};
}

inline void from_json(const Json& j, BackboneConfig& c) {
  const std::string sec = "backbone";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec, {"stages", "split_after_stage", "input_shape", "flat_mode"});
  json_util::read(j, sec, "stages", c.stages);
  json_util::read(j, sec, "split_after_stage", c.split_after_stage);
  json_util::read(j, sec, "input_shape", c.input_shape);
  json_util::read(j, sec, "flat_mode", c.flat_mode);
}

template <class T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, ParamStore<T>& store, Rng& rng) : config_(config) {
    config_.validate();
    Eigen::Index in = config_.flat_mode ? config_.input_shape.size() : config_.input_shape.channels;
    for (std::size_t s = 0; s < config_.stages.size(); ++s) {
      const Eigen::Index out = config_.stages[s];
      const std::string name = "backbone.stage" + std::to_string(s + 1);
      if (config_.flat_mode) {
        stages_.push_back(Conv2d<T>(store, name, in, out, 1, 1, rng, he_std(in)));
      } else {
        stages_.push_back(Conv2d<T>(store, name, in, out, 3, 2, rng, he_std(9 * in)));
      }
      in = out;
    }
  }

  const BackboneConfig& config() const { return config_; }
  Eigen::Index c_mid() const { return config_.c_mid(); }
  Eigen::Index c_out() const { return config_.c_out(); }

  /// Observation rows -> site-major feature map (one row per spatial site).
  FeatureMap<T> input_map(const Matrix<float>& rows) const {
    const auto& s = config_.input_shape;
    if (rows.cols() != s.size()) {
      throw std::invalid_argument("backbone: observation width " + std::to_string(rows.cols()) +
                                  " does not match input shape size " + std::to_string(s.size()));
    }
    const Eigen::Index n = rows.rows();
    if (config_.flat_mode) return {ad::constant<T>(rows.cast<T>()), {n, 1, 1}};
    Matrix<T> sites(n * s.height * s.width, s.channels);
    for (Eigen::Index b = 0; b < n; ++b)
      for (int c = 0; c < s.channels; ++c)
        for (int y = 0; y < s.height; ++y)
          for (int x = 0; x < s.width; ++x) {
            sites((b * s.height + y) * s.width + x, c) =
                static_cast<T>(rows(b, (Eigen::Index(c) * s.height + y) * s.width + x));
          }
    return {ad::constant<T>(std::move(sites)), {n, s.height, s.width}};
  }

  FeatureMap<T> fore(const FeatureMap<T>& x) const {
    FeatureMap<T> h = x;
    for (int s = 0; s < config_.split_after_stage; ++s) h = stage(s, h);
    return h;
  }

  /// Remaining stages then global average pooling: [n x C].
  ad::Var<T> rear(const FeatureMap<T>& zm) const {
    if (zm.channels() != c_mid()) throw std::invalid_argument("backbone.rear: width != C_mid");
    FeatureMap<T> h = zm;
    for (int s = config_.split_after_stage; s < static_cast<int>(stages_.size()); ++s) {
      h = stage(s, h);
    }
    return ad::segment_mean(h.data, h.shape.sites());
  }

  ad::Var<T> embed(const Matrix<float>& rows) const { return rear(fore(input_map(rows))); }

  struct ForeOutput {
    FeatureMap<T> zm_v;
    FeatureMap<T> zm_i;
  };
  struct RearOutput {
    ad::Var<T> z_v;
    ad::Var<T> z_i;
    ad::Var<T> z;  // visible rows first, then infrared rows
  };

  ForeOutput encode_fore(const ModalBatch& batch) const {
    if (batch.vis.rows() != batch.ir.rows()) throw std::invalid_argument("encode_fore: unpaired batch");
    return {fore(input_map(batch.vis)), fore(input_map(batch.ir))};
  }

  RearOutput encode_rear(const FeatureMap<T>& zm_v, const FeatureMap<T>& zm_i) const {
    auto z_v = rear(zm_v);
    auto z_i = rear(zm_i);
    return {z_v, z_i, ad::concat_rows<T>({z_v, z_i})};
  }

 private:
  FeatureMap<T> stage(int s, const FeatureMap<T>& x) const {
    auto y = stages_[static_cast<std::size_t>(s)](x);
    return {ad::relu(y.data), y.shape};
  }

  BackboneConfig config_;
  std::vector<Conv2d<T>> stages_;
};

/// Every named embedding of one forward pass. Rows of the stacked slots are
/// ordered visible pairs first, then infrared pairs in the same pair order.
template <class T>
struct FeaturePack {
  FeatureMap<T> zm_v, zm_i;      // intermediate features [n x C_mid] per site
  ad::Var<T> z_v, z_i, z;        // comprehensive [n x C], stacked [2n x C]
  ad::Var<T> zd_v, zd_i, zd;     // detail [n x C_mid/2], stacked [2n x C_mid/2]
  ad::Var<T> zd_bar, zb;         // projected detail / base [2n x C]
  ad::Var<T> zbf_bar, zbf;       // fused base after channel / batch attention [n x C]

  Eigen::Index n_pairs() const { return z_v.rows(); }
  bool has_detail() const { return zd.defined(); }
  bool has_base() const { return zb.defined() && zd_bar.defined(); }
  bool has_fusion() const { return zbf.defined(); }

  ad::Var<T> zb_v() const { return ad::slice_rows(zb, 0, n_pairs()); }
  ad::Var<T> zb_i() const { return ad::slice_rows(zb, n_pairs(), n_pairs()); }
};

}  // namespace bdlf

