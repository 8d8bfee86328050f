#pragma once

// Base embedding generation: a learnable projection splitting Z into a detail
// part Z P and a base part Z (I - P), the approach losses that pull the
// projected detail toward Z^D, and channel/batch attention fusion of the
// per-modality base features.

#include "bdlf/autodiff.hpp"
#include "bdlf/backbone.hpp"
#include "bdlf/dfe.hpp"
#include "bdlf/losses.hpp"
#include "bdlf/nn.hpp"

#include <string>

namespace bdlf {

template <class T>
class ProjectionHead {
 public:
  ProjectionHead() = default;
  /// P starts at 0.5 I plus small noise, between the two trivial projections.
  ProjectionHead(ParamStore<T>& store, Eigen::Index c, Rng& rng, double noise = 1e-2) {
    Matrix<T> init = random_normal<T>(c, c, noise, rng);
    init.diagonal().array() += T(0.5);
    p_ = store.add("beg.P", std::move(init));
  }

  const ad::Var<T>& matrix() const { return p_; }
  Eigen::Index width() const { return p_.rows(); }

  struct Split {
    ad::Var<T> zd_bar;  // Z P
    ad::Var<T> zb;      // Z (I - P)
  };

  /// Z (I - P) is formed as Z - Z P, the same linear map, so the two parts
  /// add back to Z up to one rounding of the subtraction.
  Split project(const ad::Var<T>& z) const {
    if (z.cols() != width()) throw std::invalid_argument("project: feature width != projection size");
    auto zd_bar = ad::matmul(z, p_);
    return {zd_bar, ad::sub(z, zd_bar)};
  }

  /// mean((P^2 - P)^2) + mean((P - P^T)^2); zero exactly at a symmetric idempotent P.
  ad::Var<T> orth_penalty() const {
    auto idem = ad::sub(ad::matmul(p_, p_), p_);
    auto asym = ad::sub(p_, ad::transpose(p_));
    return ad::add(ad::mean_all(ad::square(idem)), ad::mean_all(ad::square(asym)));
  }

 private:
  ad::Var<T> p_;
};

template <class T>
class BaseFusion {
 public:
  BaseFusion() = default;
  BaseFusion(ParamStore<T>& store, Eigen::Index c, Rng& rng) {
    const double s = lecun_std(c);
    for (const char* n : {"p_q", "p_k", "p_v", "q_q", "q_k", "q_v"}) {
      params_.push_back(store.add(std::string("beg.fusion.") + n, random_normal<T>(c, c, s, rng)));
    }
  }

  struct Output {
    ad::Var<T> zbf_bar;  // after channel attention
    ad::Var<T> zbf;      // after batch attention
  };

  /// Channel attention: A = (1/C) (Zv Pq)^T (Zi Pk) [C x C], applied on the
  /// right of (Zi Pv), residual Zv. Batch attention: S = (2/B) (Zi Qq)(Zf Qk)^T
  /// [n x n] with B = 2n, applied on the left of (Zf Qv), residual Zi.
  Output fuse(const ad::Var<T>& zb_v, const ad::Var<T>& zb_i) const {
    if (zb_v.rows() != zb_i.rows() || zb_v.cols() != zb_i.cols()) {
      throw std::invalid_argument("fuse_base: modality halves differ in shape");
    }
    const T c = static_cast<T>(zb_v.cols());
    const T b = static_cast<T>(2 * zb_v.rows());
    auto channel = ad::scale(ad::matmul(ad::transpose(ad::matmul(zb_v, p_q())), ad::matmul(zb_i, p_k())),
                             T(1) / c);
    auto zbf_bar = ad::add(ad::matmul(ad::matmul(zb_i, p_v()), channel), zb_v);
    auto batch = ad::scale(ad::matmul(ad::matmul(zb_i, q_q()), ad::transpose(ad::matmul(zbf_bar, q_k()))),
                           T(2) / b);
    auto zbf = ad::add(ad::matmul(batch, ad::matmul(zbf_bar, q_v())), zb_i);
    return {zbf_bar, zbf};
  }

  const ad::Var<T>& p_q() const { return params_[0]; }
  const ad::Var<T>& p_k() const { return params_[1]; }
  const ad::Var<T>& p_v() const { return params_[2]; }
  const ad::Var<T>& q_q() const { return params_[3]; }
  const ad::Var<T>& q_k() const { return params_[4]; }
  const ad::Var<T>& q_v() const { return params_[5]; }

 private:
  std::vector<ad::Var<T>> params_;
};

/// M = (row-softmax(Zbar Zbar^T - Z^D Z^D^T))^2, a [2n x 2n] map in [0, 1].
template <class T>
ad::Var<T> difference_map(const ad::Var<T>& zd_bar, const ad::Var<T>& zd) {
  if (zd_bar.rows() != zd.rows()) throw std::invalid_argument("difference_map: row counts differ");
  auto gram_bar = ad::matmul(zd_bar, ad::transpose(zd_bar));
  auto gram = ad::matmul(zd, ad::transpose(zd));
  return ad::square(ad::row_softmax(ad::sub(gram_bar, gram)));
}

template <class T>
struct ApproachLosses {
  ad::Var<T> l_fkl, l_dkl, l_dcorr, l_app;
};

template <class T>
ApproachLosses<T> approach_losses(const ad::Var<T>& zd_bar, const ad::Var<T>& zd,
                                  const DetailHead<T>& head, const SKDConfig& cfg) {
  if (zd_bar.rows() != zd.rows() || zd.rows() % 2 != 0) {
    throw std::invalid_argument("approach_losses: expected matching [2n x .] inputs");
  }
  const Eigen::Index n = zd.rows() / 2;
  auto l_fkl = ad::mean_all(difference_map(zd_bar, zd));

  auto adapted = head.adapt(zd_bar);
  auto l_dkl = align_ce(head.classify(adapted), ad::detach(head.classify(zd)));

  auto a_v = ad::slice_rows(adapted, 0, n);
  auto a_i = ad::slice_rows(adapted, n, n);
  auto d_v = ad::slice_rows(zd, 0, n);
  auto d_i = ad::slice_rows(zd, n, n);
  auto cross_gap = ad::sub(pearson_corr(a_v, a_i), pearson_corr(d_v, d_i));
  auto within = ad::add(ad::square(pearson_corr(a_v, d_v)), ad::square(pearson_corr(a_i, d_i)));
  auto l_dcorr = ad::div(ad::square(cross_gap), ad::add_scalar(within, static_cast<T>(cfg.gamma)));

  auto l_app = ad::add(ad::add(l_fkl, l_dkl), l_dcorr);
  return {l_fkl, l_dkl, l_dcorr, l_app};
}

template <class T>
struct BaseLosses {
  ApproachLosses<T> approach;
  ad::Var<T> l_id_B, l_bkl, l_id_F, l_fbkl, l_cmf, l_orth, l_BEG;
};

struct BaseTerms {
  bool approach = true;
  bool orth = true;
};

/// Symmetrized alignment: each side in turn is the student against the other
/// (constant) side, averaged.
template <class T>
ad::Var<T> mutual_align(const ad::Var<T>& logits_a, const ad::Var<T>& logits_b) {
  return ad::scale(ad::add(align_ce(logits_a, ad::detach(logits_b)),
                           align_ce(logits_b, ad::detach(logits_a))),
                   T(0.5));
}

template <class T>
BaseLosses<T> beg_loss(const FeaturePack<T>& pack, const DetailHead<T>& head,
                       const ProjectionHead<T>& proj, const Linear<T>& cls_b,
                       const std::vector<int>& labels, const SKDConfig& cfg, BaseTerms terms = {}) {
  if (!pack.has_base() || !pack.has_fusion()) throw std::invalid_argument("beg_loss: missing base or fusion slots");
  if (terms.approach && !pack.has_detail()) throw std::invalid_argument("beg_loss: missing detail slot");
  check_pack_labels(labels);
  const Eigen::Index n = pack.n_pairs();
  const std::vector<int> pair_labels(labels.begin(), labels.begin() + n);
  auto zero = ad::scalar<T>(T(0));

  BaseLosses<T> out;
  if (terms.approach) {
    out.approach = approach_losses(pack.zd_bar, pack.zd, head, cfg);
  } else {
    out.approach = {zero, zero, zero, zero};
  }

  auto logits_b = cls_b(pack.zb);
  auto logits_bv = ad::slice_rows(logits_b, 0, n);
  auto logits_bi = ad::slice_rows(logits_b, n, n);
  auto logits_f = cls_b(pack.zbf);

  out.l_id_B = id_loss(logits_b, labels);
  out.l_bkl = mutual_align(logits_bv, logits_bi);
  out.l_id_F = id_loss(logits_f, pair_labels);
  out.l_fbkl = ad::scale(ad::add(align_ce(logits_bv, ad::detach(logits_f)),
                                 align_ce(logits_bi, ad::detach(logits_f))),
                         T(0.5));
  out.l_cmf = ad::add(out.l_id_F, out.l_fbkl);
  out.l_orth = terms.orth ? proj.orth_penalty() : zero;
  out.l_BEG = ad::add(ad::add(ad::add(ad::add(out.l_id_B, out.approach.l_app), out.l_bkl), out.l_cmf),
                      out.l_orth);
  return out;
}

}  // namespace bdlf
