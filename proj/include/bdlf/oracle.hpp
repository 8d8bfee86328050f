#pragma once

// Independent reference implementations used by the tests: central finite
// differences, textbook Pearson, exhaustive triplet and AP/CMC ranking, and
// inversion of the coupling stack.

#include "bdlf/autodiff.hpp"
#include "bdlf/dfe.hpp"
#include "bdlf/evalproto.hpp"
#include "bdlf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bdlf::oracle {

// ---------------------------------------------------------------------------
// Finite differences

/// Coordinates (flat, row-major) of a rows x cols block to probe: all of them
/// when `max_coords` is 0 or covers the block, otherwise a seeded sample.
inline std::vector<Eigen::Index> probe_coords(Eigen::Index size, std::size_t max_coords, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  if (max_coords == 0 || idx.size() <= max_coords) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// (f(x + h e_k) - f(x - h e_k)) / 2h for each probed coordinate k of `x`.
/// `x` is perturbed in place and restored.
inline std::vector<double> finite_diff_grad(const std::function<double()>& f, Matrix<double>& x, double h,
                                            const std::vector<Eigen::Index>& coords) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
  std::vector<double> out;
  out.reserve(coords.size());
  for (Eigen::Index k : coords) {
    double& slot = x.data()[k];
    const double saved = slot;
    slot = saved + h;
    const double up = f();
    slot = saved - h;
    const double down = f();
    slot = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_diff_grad: non-finite function value");
    }
    out.push_back((up - down) / (2 * h));
  }
  return out;
}

struct GradCheckReport {
  struct Block {
    std::string name;
    double max_rel_error = 0;  // ||a - n||_inf / max(||a||_inf, ||n||_inf, floor)
    double max_abs_grad = 0;
    std::size_t n_coords = 0;
  };
  std::string case_name;
  std::vector<Block> blocks;
  double tolerance = 1e-4;
  bool pass = true;

  double worst() const {
    double w = 0;
    for (const auto& b : blocks) w = std::max(w, b.max_rel_error);
    return w;
  }
};

inline std::ostream& operator<<(std::ostream& os, const GradCheckReport& r) {
  os << (r.pass ? "PASS " : "FAIL ") << r.case_name << "  worst=" << r.worst() << "  tol=" << r.tolerance
     << '\n';
  for (const auto& b : r.blocks) {
    os << "    " << b.name << "  rel=" << b.max_rel_error << "  |g|max=" << b.max_abs_grad
       << "  coords=" << b.n_coords << '\n';
  }
  return os;
}

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_coords = 64;  // per block; 0 probes every coordinate
  std::uint64_t seed = 17;
  /// Blocks whose largest gradient magnitude is below this are compared in
  /// absolute terms against it (avoids dividing noise by noise).
  double floor = 1e-7;
};

/// Compares reverse-mode gradients of `loss` against central differences for
/// every named leaf. `loss` must rebuild its graph from the leaves' current
/// values on each call. Stop-gradient targets are held at their values from
/// the analytic pass while differencing, which is the function reverse mode
/// actually differentiates.
inline GradCheckReport check_gradients(const std::string& case_name,
                                       const std::function<ad::Var<double>()>& loss,
                                       std::vector<std::pair<std::string, ad::Var<double>>> leaves,
                                       const GradCheckOptions& opt = {}) {
  for (auto& [name, v] : leaves) v.zero_grad();
  {
    ad::FrozenTargets<double> record(ad::FrozenTargets<double>::Mode::record);
    auto root = loss();
    ad::backward(root);
  }

  GradCheckReport report;
  report.case_name = case_name;
  report.tolerance = opt.tolerance;
  Rng rng(opt.seed);
  auto value = [&loss] {
    ad::NoGradGuard no_grad;
    ad::FrozenTargets<double> replay(ad::FrozenTargets<double>::Mode::replay);
    return loss().item();
  };
  for (auto& [name, v] : leaves) {
    const Matrix<double> analytic = v.has_grad() ? v.grad() : Matrix<double>::Zero(v.rows(), v.cols());
    const auto coords = probe_coords(v.value().size(), opt.max_coords, rng);
    const auto numeric = finite_diff_grad(value, v.mutable_value(), opt.h, coords);
    double diff = 0, scale = opt.floor;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double a = analytic.data()[coords[i]];
      diff = std::max(diff, std::abs(a - numeric[i]));
      scale = std::max({scale, std::abs(a), std::abs(numeric[i])});
    }
    GradCheckReport::Block b{name, diff / scale, scale, coords.size()};
    if (!(b.max_rel_error <= opt.tolerance)) report.pass = false;
    report.blocks.push_back(std::move(b));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Scalar references

/// Row-wise Pearson r by the textbook sums formula, averaged over rows;
/// zero-variance rows count as 0.
inline double textbook_pearson(const Matrix<double>& a, const Matrix<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("textbook_pearson: shape");
  const Eigen::Index n = a.rows(), d = a.cols();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double sa = 0, sb = 0;
    for (Eigen::Index k = 0; k < d; ++k) {
      sa += a(i, k);
      sb += b(i, k);
    }
    const double ma = sa / d, mb = sb / d;
    double sab = 0, saa = 0, sbb = 0;
    for (Eigen::Index k = 0; k < d; ++k) {
      sab += (a(i, k) - ma) * (b(i, k) - mb);
      saa += (a(i, k) - ma) * (a(i, k) - ma);
      sbb += (b(i, k) - mb) * (b(i, k) - mb);
    }
    if (saa > 0 && sbb > 0) total += sab / std::sqrt(saa * sbb);
  }
  return total / static_cast<double>(n);
}

/// Batch-hard triplet loss by enumerating every (anchor, other) pair.
inline double exhaustive_triplet(const Matrix<double>& emb, const std::vector<int>& labels, double margin) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  double total = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    double hardest_pos = -std::numeric_limits<double>::infinity();
    double hardest_neg = std::numeric_limits<double>::infinity();
    for (Eigen::Index o = 0; o < n; ++o) {
      if (o == a) continue;
      double sq = 0;
      for (Eigen::Index k = 0; k < emb.cols(); ++k) sq += (emb(a, k) - emb(o, k)) * (emb(a, k) - emb(o, k));
      const double dist = std::sqrt(sq);
      if (labels[static_cast<std::size_t>(o)] == labels[static_cast<std::size_t>(a)]) {
        hardest_pos = std::max(hardest_pos, dist);
      } else {
        hardest_neg = std::min(hardest_neg, dist);
      }
    }
    total += std::max(0.0, hardest_pos - hardest_neg + margin);
  }
  return total / static_cast<double>(n);
}

/// Mean over relevant positions of precision at that position.
inline double brute_force_ap(const std::vector<int>& relevance) {
  double sum = 0;
  int hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (relevance[i] == 0) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  if (hits == 0) throw std::invalid_argument("brute_force_ap: no relevant item");
  return sum / hits;
}

/// Reference retrieval scoring: full pairwise distances, filter, sort by
/// (distance, gallery index), read relevance off the ranked list.
inline EvalReport brute_force_cmc_map(const Matrix<double>& qf, const std::vector<int>& qid,
                                      const std::vector<int>& qcam, const Matrix<double>& gf,
                                      const std::vector<int>& gid, const std::vector<int>& gcam,
                                      Metric metric, int max_rank) {
  EvalReport r;
  r.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  double ap_sum = 0;
  for (Eigen::Index i = 0; i < qf.rows(); ++i) {
    std::vector<std::pair<double, Eigen::Index>> ranked;
    for (Eigen::Index j = 0; j < gf.rows(); ++j) {
      const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
      if (gid[jj] == qid[ii] && gcam[jj] == qcam[ii]) continue;
      double key = 0;
      if (metric == Metric::euclidean) {
        for (Eigen::Index k = 0; k < qf.cols(); ++k) key += (qf(i, k) - gf(j, k)) * (qf(i, k) - gf(j, k));
      } else {
        double dot = 0, nq = 0, ng = 0;
        for (Eigen::Index k = 0; k < qf.cols(); ++k) {
          dot += qf(i, k) * gf(j, k);
          nq += qf(i, k) * qf(i, k);
          ng += gf(j, k) * gf(j, k);
        }
        key = (nq > 0 && ng > 0) ? -dot / std::sqrt(nq * ng) : 0.0;
      }
      ranked.emplace_back(key, j);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<int> rel;
    for (const auto& [key, j] : ranked) rel.push_back(gid[static_cast<std::size_t>(j)] == qid[static_cast<std::size_t>(i)]);
    const auto first = std::find(rel.begin(), rel.end(), 1);
    if (first == rel.end()) {
      ++r.n_excluded;
      continue;
    }
    const auto pos = static_cast<int>(first - rel.begin());  // 0-based
    for (int k = pos; k < max_rank; ++k) r.cmc[static_cast<std::size_t>(k)] += 1;
    const double ap = brute_force_ap(rel);
    r.ap.push_back(ap);
    ap_sum += ap;
    ++r.n_queries;
  }
  if (r.n_queries > 0) {
    for (auto& c : r.cmc) c /= r.n_queries;
    r.map = ap_sum / r.n_queries;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Coupling-stack inversion

/// Overwrites every parameter in `store` with N(0, std^2) draws.
template <class T>
void randomize_parameters(ParamStore<T>& store, double stddev, Rng& rng) {
  for (auto& e : store.entries()) {
    e.var.mutable_value() = random_normal<T>(e.var.rows(), e.var.cols(), stddev, rng);
  }
}

struct RoundTripReport {
  double max_error = 0;
  int failing_block = -1;  // first block whose own round trip breaches the tolerance
  bool pass = true;
};

/// Forward through every block (coupling, then normalization with recorded
/// per-site statistics), then back: undo each normalization and apply the
/// closed-form coupling inverse, last block first. Also checks each block's
/// coupling round trip on its own input.
template <class T>
RoundTripReport check_inn_roundtrip(const std::vector<INNBlock<T>>& blocks, int n_trials, double tol,
                                    Eigen::Index rows, ad::SpatialShape shape, Rng& rng) {
  if (blocks.empty()) throw std::invalid_argument("check_inn_roundtrip: no blocks");
  ad::NoGradGuard no_grad;
  const Eigen::Index channels = 2 * blocks.front().half();
  RoundTripReport report;
  for (int trial = 0; trial < n_trials; ++trial) {
    const Matrix<T> x0 = random_normal<T>(rows, channels, 1.0, rng);
    struct Stats {
      Eigen::Matrix<T, Eigen::Dynamic, 1> mean, stdev;
    };
    std::vector<Stats> stats;
    Matrix<T> x = x0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const Matrix<T> pre = blocks[k].coupling({ad::constant<T>(x), shape}).value();
      const Matrix<T> back = blocks[k].inverse(pre, shape);
      const double own = static_cast<double>((back - x).cwiseAbs().maxCoeff());
      if (own > tol && report.failing_block < 0) report.failing_block = static_cast<int>(k);

      Stats s;
      s.mean = pre.rowwise().mean();
      const Matrix<T> centered = pre.colwise() - s.mean;
      s.stdev = ((centered.cwiseAbs2().rowwise().sum() / static_cast<T>(channels)).array() +
                 LayerNorm<T>::eps())
                    .sqrt()
                    .matrix();
      stats.push_back(s);
      x = blocks[k].norm()(ad::constant<T>(pre)).value();
    }
    for (std::size_t k = blocks.size(); k-- > 0;) {
      const auto& ln = blocks[k].norm();
      Matrix<T> unshifted = x.rowwise() - ln.beta().value().row(0);
      unshifted = unshifted.array().rowwise() / ln.gamma().value().row(0).array();
      Matrix<T> pre = (unshifted.array().colwise() * stats[k].stdev.array()).matrix();
      pre = pre.colwise() + stats[k].mean;
      x = blocks[k].inverse(pre, shape);
    }
    report.max_error = std::max(report.max_error, static_cast<double>((x - x0).cwiseAbs().maxCoeff()));
  }
  report.pass = report.max_error <= tol && report.failing_block < 0;
  return report;
}

}  // namespace bdlf::oracle
