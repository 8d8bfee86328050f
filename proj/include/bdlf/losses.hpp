#pragma once

// Loss primitives: paired-row Pearson correlation, the specific-shared
// correlation loss, identity cross-entropy, distribution alignment and
// batch-hard triplet loss. All return scalar (1x1) graph nodes.

#include "bdlf/autodiff.hpp"
#include "bdlf/json_util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlf {

struct SKDConfig {
  double gamma = 1e-2;
  double corr_clamp_eps = 1e-3;

  /// Largest gamma that keeps the clamped denominator strictly negative.
  double gamma_bound() const { return std::abs(std::cbrt(std::log(1.0 - corr_clamp_eps))); }

  void validate() const {
    using json_util::check;
    check(corr_clamp_eps > 0.0 && corr_clamp_eps < 0.5, "skd.corr_clamp_eps", "must lie in (0, 0.5)");
    check(gamma > 0.0, "skd.gamma", "must be positive");
    check(gamma < gamma_bound(), "skd.gamma",
          "must be below |cbrt(log(1 - corr_clamp_eps))| = " + std::to_string(gamma_bound()));
  }
};

inline void to_json(Json& j, const SKDConfig& c) {
  j = Json{{"gamma", c.gamma}, {"corr_clamp_eps", c.corr_clamp_eps}};
}

inline void from_json(const Json& j, SKDConfig& c) {
  const std::string sec = "skd";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec, {"gamma", "corr_clamp_eps"});
  json_util::read(j, sec, "gamma", c.gamma);
  json_util::read(j, sec, "corr_clamp_eps", c.corr_clamp_eps);
}

namespace detail {
template <class T>
void require_finite(const Matrix<T>& m, const char* op) {
  if (!m.allFinite()) throw std::domain_error(std::string(op) + ": non-finite input");
}
}  // namespace detail

/// Mean over paired rows of the Pearson correlation between row i of `a` and
/// row i of `b` (centered cosine across the feature dimension). Rows whose
/// centered norm vanishes contribute 0.
template <class T>
ad::Var<T> pearson_corr(const ad::Var<T>& a, const ad::Var<T>& b) {
  ad::detail::require_same_shape(a, b, "pearson_corr");
  if (a.rows() < 1 || a.cols() < 2) throw std::invalid_argument("pearson_corr: need n >= 1, d >= 2");
  detail::require_finite(a.value(), "pearson_corr");
  detail::require_finite(b.value(), "pearson_corr");

  const Eigen::Index n = a.rows();
  const Eigen::Index d = a.cols();
  Matrix<T> ac = a.value().colwise() - a.value().rowwise().mean();
  Matrix<T> bc = b.value().colwise() - b.value().rowwise().mean();
  Eigen::Matrix<T, Eigen::Dynamic, 1> na = ac.rowwise().norm();
  Eigen::Matrix<T, Eigen::Dynamic, 1> nb = bc.rowwise().norm();
  Eigen::Matrix<T, Eigen::Dynamic, 1> r = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(n);
  std::vector<bool> active(static_cast<std::size_t>(n), false);
  const T slack = T(8) * std::numeric_limits<T>::epsilon() * std::sqrt(static_cast<T>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const T tol_a = slack * a.value().row(i).cwiseAbs().maxCoeff();
    const T tol_b = slack * b.value().row(i).cwiseAbs().maxCoeff();
    if (na(i) > tol_a && na(i) > T(0) && nb(i) > tol_b && nb(i) > T(0)) {
      active[static_cast<std::size_t>(i)] = true;
      r(i) = ac.row(i).dot(bc.row(i)) / (na(i) * nb(i));
    }
  }
  Matrix<T> out(1, 1);
  out(0, 0) = r.mean();

  auto nda = a.node(), ndb = b.node();
  return ad::make_op<T>(std::move(out), {a, b},
                        [nda, ndb, ac, bc, na, nb, r, active, n](const Matrix<T>& g) {
                          const T scale = g(0, 0) / static_cast<T>(n);
                          Matrix<T> ga = Matrix<T>::Zero(ac.rows(), ac.cols());
                          Matrix<T> gb = Matrix<T>::Zero(bc.rows(), bc.cols());
                          for (Eigen::Index i = 0; i < n; ++i) {
                            if (!active[static_cast<std::size_t>(i)]) continue;
                            const T nn = na(i) * nb(i);
                            ga.row(i) = scale * (bc.row(i) / nn - r(i) * ac.row(i) / (na(i) * na(i)));
                            gb.row(i) = scale * (ac.row(i) / nn - r(i) * bc.row(i) / (nb(i) * nb(i)));
                          }
                          if (nda->requires_grad) nda->accumulate(ga);
                          if (ndb->requires_grad) ndb->accumulate(gb);
                        });
}

/// Scalar form of the correlation-ratio loss, on already-computed correlations.
inline double skd_value(double c_base, double c_detail, const SKDConfig& cfg) {
  const double lo = cfg.corr_clamp_eps;
  const double hi = 1.0 - cfg.corr_clamp_eps;
  const double cb = std::clamp(c_base, lo, hi);
  const double cd = std::clamp(c_detail, lo, hi);
  return std::log(cb) / (std::cbrt(std::log(cd)) + cfg.gamma);
}

/// log(c_B) / (cbrt(log(c_D)) + gamma) with both correlations clamped to
/// [eps, 1 - eps]. Driving it down raises c_B and lowers c_D.
template <class T>
ad::Var<T> skd_loss(const ad::Var<T>& zb_v, const ad::Var<T>& zb_i, const ad::Var<T>& zd_v,
                    const ad::Var<T>& zd_i, const SKDConfig& cfg) {
  const T lo = static_cast<T>(cfg.corr_clamp_eps);
  const T hi = static_cast<T>(1.0 - cfg.corr_clamp_eps);
  auto c_b = pearson_corr(zb_v, zb_i);
  auto c_d = pearson_corr(zd_v, zd_i);
  if (!std::isfinite(c_b.item()) || !std::isfinite(c_d.item())) {
    throw std::domain_error("skd_loss: non-finite correlation");
  }
  auto num = ad::log(ad::clamp(c_b, lo, hi));
  auto den = ad::add_scalar(ad::signed_cbrt(ad::log(ad::clamp(c_d, lo, hi))), static_cast<T>(cfg.gamma));
  return ad::div(num, den);
}

template <class T>
Matrix<T> log_softmax_rows(const Matrix<T>& x) {
  Eigen::Matrix<T, Eigen::Dynamic, 1> m = x.rowwise().maxCoeff();
  Matrix<T> shifted = x.colwise() - m;
  Eigen::Matrix<T, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - lse;
}

/// Mean softmax cross-entropy against integer labels.
template <class T>
ad::Var<T> id_loss(const ad::Var<T>& logits, const std::vector<int>& labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size() || n == 0) {
    throw std::invalid_argument("id_loss: label count does not match logits rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= k) throw std::out_of_range("id_loss: label " + std::to_string(y) + " out of range");
  }
  Matrix<T> logp = log_softmax_rows<T>(logits.value());
  T total = 0;
  for (Eigen::Index i = 0; i < n; ++i) total -= logp(i, labels[static_cast<std::size_t>(i)]);
  Matrix<T> out(1, 1);
  out(0, 0) = total / static_cast<T>(n);
  auto nl = logits.node();
  return ad::make_op<T>(std::move(out), {logits}, [nl, logp, labels, n](const Matrix<T>& g) {
    Matrix<T> grad = logp.array().exp().matrix();
    for (Eigen::Index i = 0; i < n; ++i) grad(i, labels[static_cast<std::size_t>(i)]) -= T(1);
    nl->accumulate(grad * (g(0, 0) / static_cast<T>(n)));
  });
}

/// Mean over rows of ce(p, q) = -sum q log p with p = softmax(student) and
/// q = softmax(teacher). The teacher is read as a constant target.
template <class T>
ad::Var<T> align_ce(const ad::Var<T>& student, const ad::Var<T>& teacher) {
  ad::detail::require_same_shape(student, teacher, "align_ce");
  const Eigen::Index n = student.rows();
  if (n == 0) throw std::invalid_argument("align_ce: empty input");
  Matrix<T> q = ad::softmax_rows_value<T>(teacher.value());
  Matrix<T> logp = log_softmax_rows<T>(student.value());
  Matrix<T> out(1, 1);
  out(0, 0) = -(q.cwiseProduct(logp)).sum() / static_cast<T>(n);
  auto ns = student.node();
  return ad::make_op<T>(std::move(out), {student}, [ns, q, logp, n](const Matrix<T>& g) {
    Matrix<T> grad = logp.array().exp().matrix() - q;
    ns->accumulate(grad * (g(0, 0) / static_cast<T>(n)));
  });
}

/// Mean row entropy of softmax(logits): the minimum align_ce can reach for this teacher.
template <class T>
T softmax_entropy(const Matrix<T>& logits) {
  Matrix<T> logp = log_softmax_rows<T>(logits);
  return -(logp.array().exp() * logp.array()).sum() / static_cast<T>(logits.rows());
}

/// Batch-hard triplet loss on Euclidean distances: for every anchor, the
/// farthest positive and the nearest negative, hinged at `margin`.
template <class T>
ad::Var<T> triplet_loss(const ad::Var<T>& emb, const std::vector<int>& labels, T margin) {
  const Eigen::Index n = emb.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("triplet_loss: label count does not match rows");
  }
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  if (counts.size() < 2) throw std::invalid_argument("triplet_loss: batch needs at least two labels");
  for (const auto& [y, c] : counts) {
    if (c < 2) {
      throw std::invalid_argument("triplet_loss: label " + std::to_string(y) + " has a single sample");
    }
  }

  const Matrix<T>& e = emb.value();
  Matrix<T> dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (e.row(i) - e.row(j)).norm();

  std::vector<std::array<Eigen::Index, 2>> chosen(static_cast<std::size_t>(n));
  std::vector<bool> active(static_cast<std::size_t>(n), false);
  T total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index pos = -1, neg = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        if (pos < 0 || dist(i, j) > dist(i, pos)) pos = j;
      } else if (neg < 0 || dist(i, j) < dist(i, neg)) {
        neg = j;
      }
    }
    const T l = dist(i, pos) - dist(i, neg) + margin;
    chosen[static_cast<std::size_t>(i)] = {pos, neg};
    if (l > T(0)) {
      active[static_cast<std::size_t>(i)] = true;
      total += l;
    }
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total / static_cast<T>(n);

  auto ne = emb.node();
  return ad::make_op<T>(std::move(out), {emb}, [ne, dist, chosen, active, n](const Matrix<T>& g) {
    const Matrix<T>& x = ne->value;
    Matrix<T> grad = Matrix<T>::Zero(x.rows(), x.cols());
    const T s = g(0, 0) / static_cast<T>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      const auto [p, q] = chosen[static_cast<std::size_t>(i)];
      if (dist(i, p) > T(0)) {
        const auto u = ((x.row(i) - x.row(p)) / dist(i, p)).eval();
        grad.row(i) += s * u;
        grad.row(p) -= s * u;
      }
      if (dist(i, q) > T(0)) {
        const auto u = ((x.row(i) - x.row(q)) / dist(i, q)).eval();
        grad.row(i) -= s * u;
        grad.row(q) += s * u;
      }
    }
    ne->accumulate(grad);
  });
}

/// Named value of every loss term of one forward pass.
struct LossBreakdown {
  double l_id = 0, l_tri = 0, l_okl = 0;
  double l_id_D = 0, l_odkl = 0, l_DFE = 0;
  double l_fkl = 0, l_dkl = 0, l_dcorr = 0, l_app = 0;
  double l_id_B = 0, l_bkl = 0, l_id_F = 0, l_fbkl = 0, l_cmf = 0, l_orth = 0, l_BEG = 0;
  double l_skd = 0;
  double total = 0;

  static const std::vector<std::string>& field_names() {
    static const std::vector<std::string> names{
        "l_id",   "l_tri",  "l_okl", "l_id_D", "l_odkl", "l_DFE", "l_fkl",
        "l_dkl",  "l_dcorr", "l_app", "l_id_B", "l_bkl", "l_id_F", "l_fbkl",
        "l_cmf",  "l_orth", "l_BEG", "l_skd",  "total"};
    return names;
  }

  std::vector<double> values() const {
    return {l_id,  l_tri, l_okl,  l_id_D, l_odkl, l_DFE, l_fkl, l_dkl, l_dcorr, l_app,
            l_id_B, l_bkl, l_id_F, l_fbkl, l_cmf, l_orth, l_BEG, l_skd, total};
  }

  static LossBreakdown from_values(const std::vector<double>& v) {
    if (v.size() != field_names().size()) throw std::invalid_argument("LossBreakdown: wrong arity");
    LossBreakdown b;
    double* fields[] = {&b.l_id,  &b.l_tri, &b.l_okl,  &b.l_id_D, &b.l_odkl, &b.l_DFE, &b.l_fkl,
                        &b.l_dkl, &b.l_dcorr, &b.l_app, &b.l_id_B, &b.l_bkl, &b.l_id_F, &b.l_fbkl,
                        &b.l_cmf, &b.l_orth, &b.l_BEG, &b.l_skd, &b.total};
    for (std::size_t i = 0; i < v.size(); ++i) *fields[i] = v[i];
    return b;
  }

  /// Largest relative violation among the composite-term identities
  /// (detail, approach, fusion, base-branch and total sums).
  double composition_error() const {
    auto rel = [](double composite, double parts) {
      const double scale = std::max({std::abs(composite), std::abs(parts), 1e-12});
      return std::abs(composite - parts) / scale;
    };
    return std::max({rel(l_DFE, l_id_D + l_odkl), rel(l_app, l_fkl + l_dkl + l_dcorr),
                     rel(l_cmf, l_id_F + l_fbkl),
                     rel(l_BEG, l_id_B + l_app + l_bkl + l_cmf + l_orth),
                     rel(total, l_id + l_tri + l_okl + l_DFE + l_BEG + l_skd)});
  }
};

}  // namespace bdlf
