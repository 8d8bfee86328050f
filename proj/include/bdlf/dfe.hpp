#pragma once

// Detail feature extraction: a stack of affine-coupling blocks with layer
// normalization, pooling of the first channel half, and a symmetric
// cross-modal attention producing the detail feature Z^D.

#include "bdlf/autodiff.hpp"
#include "bdlf/losses.hpp"
#include "bdlf/nn.hpp"

#include <string>
#include <vector>

namespace bdlf {

/// One coupling sub-network: conv/affine -> ReLU -> 1x1 affine. The last layer
/// starts at zero so a fresh block is the identity before normalization.
template <class T>
class CouplingNet {
 public:
  CouplingNet() = default;
  CouplingNet(ParamStore<T>& store, const std::string& name, Eigen::Index width, bool spatial,
              Rng& rng) {
    const Eigen::Index k = spatial ? 3 : 1;
    first_ = Conv2d<T>(store, name + ".0", width, width, k, 1, rng, he_std(k * k * width));
    last_ = Conv2d<T>(store, name + ".1", width, width, 1, 1, rng, 0.0);
  }

  FeatureMap<T> operator()(const FeatureMap<T>& x) const {
    auto h = first_(x);
    return last_({ad::relu(h.data), h.shape});
  }

 private:
  Conv2d<T> first_;
  Conv2d<T> last_;
};

template <class T>
class INNBlock {
 public:
  INNBlock() = default;
  INNBlock(ParamStore<T>& store, const std::string& name, Eigen::Index channels, bool spatial,
           Rng& rng)
      : half_(channels / 2) {
    if (channels % 2 != 0) throw std::invalid_argument("INNBlock: channel count must be even");
    f1_ = CouplingNet<T>(store, name + ".f1", half_, spatial, rng);
    f2_ = CouplingNet<T>(store, name + ".f2", half_, spatial, rng);
    f3_ = CouplingNet<T>(store, name + ".f3", half_, spatial, rng);
    norm_ = LayerNorm<T>(store, name + ".ln", channels);
  }

  Eigen::Index half() const { return half_; }
  const LayerNorm<T>& norm() const { return norm_; }

  /// Coupling map before normalization:
  ///   y2 = x2 + F1(x1);  y1 = F2(y2) + x1 * exp(F3(y2));  returns [y1 | y2].
  ad::Var<T> coupling(const FeatureMap<T>& x) const {
    check_width(x.channels());
    FeatureMap<T> x1{ad::slice_cols(x.data, 0, half_), x.shape};
    auto x2 = ad::slice_cols(x.data, half_, half_);
    FeatureMap<T> y2{ad::add(x2, f1_(x1).data), x.shape};
    auto y1 = ad::add(f2_(y2).data, ad::mul(x1.data, ad::exp(f3_(y2).data)));
    return ad::concat_cols(y1, y2.data);
  }

  /// Normalization per spatial site across channels.
  FeatureMap<T> forward(const FeatureMap<T>& x) const { return {norm_(coupling(x)), x.shape}; }

  /// Closed-form inverse of coupling():
  ///   x1 = (y1 - F2(y2)) * exp(-F3(y2));  x2 = y2 - F1(x1).
  Matrix<T> inverse(const Matrix<T>& y_pre, ad::SpatialShape shape) const {
    check_width(y_pre.cols());
    ad::NoGradGuard no_grad;
    FeatureMap<T> y2{ad::constant<T>(y_pre.rightCols(half_)), shape};
    Matrix<T> shift = f2_(y2).data.value();
    Matrix<T> log_scale = f3_(y2).data.value();
    Matrix<T> x1 = ((y_pre.leftCols(half_) - shift).array() * (-log_scale.array()).exp()).matrix();
    Matrix<T> f1 = f1_({ad::constant<T>(x1), shape}).data.value();
    Matrix<T> x(y_pre.rows(), y_pre.cols());
    x.leftCols(half_) = x1;
    x.rightCols(half_) = y_pre.rightCols(half_) - f1;
    return x;
  }

 private:
  void check_width(Eigen::Index c) const {
    if (c != 2 * half_) {
      throw std::invalid_argument("INNBlock: expected " + std::to_string(2 * half_) +
                                  " channels, got " + std::to_string(c));
    }
  }

  Eigen::Index half_ = 0;
  CouplingNet<T> f1_, f2_, f3_;
  LayerNorm<T> norm_;
};

/// Single-head cross attention without score scaling:
///   out = LN(softmax((q Wq)(kv Wk)^T) (kv Wv) + q).
template <class T>
class DetailCrossAttention {
 public:
  DetailCrossAttention() = default;
  DetailCrossAttention(ParamStore<T>& store, const std::string& name, Eigen::Index width, Rng& rng)
      : w_q_(store, name + ".w_q", width, width, rng, lecun_std(width), false),
        w_k_(store, name + ".w_k", width, width, rng, lecun_std(width), false),
        w_v_(store, name + ".w_v", width, width, rng, lecun_std(width), false),
        norm_(store, name + ".ln", width) {}

  ad::Var<T> attention(const ad::Var<T>& queries, const ad::Var<T>& keys) const {
    return ad::row_softmax(ad::matmul(w_q_(queries), ad::transpose(w_k_(keys))));
  }

  ad::Var<T> attend(const ad::Var<T>& queries, const ad::Var<T>& keys) const {
    auto mixed = ad::matmul(attention(queries, keys), w_v_(keys));
    return norm_(ad::add(mixed, queries));
  }

 private:
  Linear<T> w_q_, w_k_, w_v_;
  LayerNorm<T> norm_;
};

template <class T>
struct DetailOutput {
  ad::Var<T> p_v, p_i;    // pooled first-half channels [n x C_mid/2]
  ad::Var<T> zd_v, zd_i;  // [n x C_mid/2]
  ad::Var<T> zd;          // visible rows then infrared rows [2n x C_mid/2]
};

template <class T>
class DetailExtractor {
 public:
  DetailExtractor() = default;
  DetailExtractor(ParamStore<T>& store, Eigen::Index c_mid, int depth, bool spatial, Rng& rng)
      : c_mid_(c_mid) {
    if (depth < 1) throw std::invalid_argument("DetailExtractor: depth must be >= 1");
    for (int k = 0; k < depth; ++k) {
      blocks_.emplace_back(store, "dfe.block" + std::to_string(k), c_mid, spatial, rng);
    }
    attn_ = DetailCrossAttention<T>(store, "dfe.attn", c_mid / 2, rng);
  }

  const std::vector<INNBlock<T>>& blocks() const { return blocks_; }
  const DetailCrossAttention<T>& attention() const { return attn_; }

  FeatureMap<T> run_blocks(const FeatureMap<T>& zm) const {
    FeatureMap<T> h = zm;
    for (const auto& b : blocks_) h = b.forward(h);
    return h;
  }

  DetailOutput<T> forward(const FeatureMap<T>& zm_v, const FeatureMap<T>& zm_i) const {
    check(zm_v, zm_i);
    auto p_v = pool_first_half(run_blocks(zm_v));
    auto p_i = pool_first_half(run_blocks(zm_i));
    auto zd_v = attn_.attend(p_v, p_i);
    auto zd_i = attn_.attend(p_i, p_v);
    return {p_v, p_i, zd_v, zd_i, ad::concat_rows<T>({zd_v, zd_i})};
  }

  /// Detail stand-in when the extractor is switched off: pooled first-half
  /// channels of the intermediate features, no coupling and no attention.
  static DetailOutput<T> bypass(const FeatureMap<T>& zm_v, const FeatureMap<T>& zm_i) {
    auto p_v = pool_first_half(zm_v);
    auto p_i = pool_first_half(zm_i);
    return {p_v, p_i, p_v, p_i, ad::concat_rows<T>({p_v, p_i})};
  }

  static ad::Var<T> pool_first_half(const FeatureMap<T>& x) {
    return ad::segment_mean(ad::slice_cols(x.data, 0, x.channels() / 2), x.shape.sites());
  }

 private:
  void check(const FeatureMap<T>& a, const FeatureMap<T>& b) const {
    if (a.channels() != c_mid_ || b.channels() != c_mid_) {
      throw std::invalid_argument("DetailExtractor: input width differs from C_mid");
    }
    if (!(a.shape == b.shape)) throw std::invalid_argument("DetailExtractor: modality shapes differ");
  }

  Eigen::Index c_mid_ = 0;
  std::vector<INNBlock<T>> blocks_;
  DetailCrossAttention<T> attn_;
};

/// Private detail classifier plus the adapter that maps C-wide features into
/// the detail width for classification and correlation.
template <class T>
class DetailHead {
 public:
  DetailHead() = default;
  DetailHead(ParamStore<T>& store, Eigen::Index c, Eigen::Index detail_width, int n_classes, Rng& rng)
      : cls_d_(store, "head.cls_d", detail_width, n_classes, rng, lecun_std(detail_width), false),
        adapter_(store, "head.adapter", c, detail_width, rng, lecun_std(c), true) {}

  ad::Var<T> classify(const ad::Var<T>& zd) const { return cls_d_(zd); }
  ad::Var<T> adapt(const ad::Var<T>& zd_bar) const { return adapter_(zd_bar); }

 private:
  Linear<T> cls_d_;
  Linear<T> adapter_;
};

template <class T>
struct DetailLosses {
  ad::Var<T> l_id_D, l_odkl, l_DFE;
};

inline void check_pack_labels(const std::vector<int>& labels) {
  if (labels.size() % 2 != 0) throw std::invalid_argument("labels: odd count for a two-modality pack");
  const std::size_t n = labels.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != labels[n + i]) {
      throw std::invalid_argument("labels: visible/infrared halves disagree at pair " + std::to_string(i));
    }
  }
}

/// Identity loss on Z^D and alignment of its prediction with the comprehensive
/// feature's prediction (teacher side constant).
template <class T>
DetailLosses<T> dfe_loss(const ad::Var<T>& zd, const ad::Var<T>& z, const DetailHead<T>& head,
                         const Linear<T>& cls_b, const std::vector<int>& labels) {
  check_pack_labels(labels);
  auto logits_d = head.classify(zd);
  auto l_id_d = id_loss(logits_d, labels);
  auto l_odkl = align_ce(logits_d, ad::detach(cls_b(z)));
  return {l_id_d, l_odkl, ad::add(l_id_d, l_odkl)};
}

}  // namespace bdlf
