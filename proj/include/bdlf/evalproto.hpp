#pragma once

// Camera-aware cross-modality retrieval metrics (CMC, mAP) and query/gallery
// split construction.

#include "bdlf/autodiff.hpp"
#include "bdlf/json_util.hpp"
#include "bdlf/nn.hpp"
#include "bdlf/synthdata.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlf {

enum class Metric { euclidean, cosine };

inline std::string to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "cosine"; }

inline Metric metric_from_string(const std::string& s) {
  if (s == "euclidean") return Metric::euclidean;
  if (s == "cosine") return Metric::cosine;
  throw std::invalid_argument("unknown metric '" + s + "' (expected euclidean or cosine)");
}

enum class ProtocolMode { vis_to_ir, ir_to_vis };

inline std::string to_string(ProtocolMode m) { return m == ProtocolMode::vis_to_ir ? "vis_to_ir" : "ir_to_vis"; }

inline ProtocolMode mode_from_string(const std::string& s) {
  if (s == "vis_to_ir") return ProtocolMode::vis_to_ir;
  if (s == "ir_to_vis") return ProtocolMode::ir_to_vis;
  throw std::invalid_argument("unknown mode '" + s + "' (expected vis_to_ir or ir_to_vis)");
}

struct EvalReport {
  std::vector<double> cmc;  // cmc[k-1] = rank-k accuracy
  double map = 0;
  int n_queries = 0;   // queries that entered the averages
  int n_excluded = 0;  // queries with no valid match after filtering
  std::vector<double> ap;  // per evaluated query, in query order

  double rank1() const { return cmc.empty() ? 0.0 : cmc.front(); }
};

inline void to_json(Json& j, const EvalReport& r) {
  j = Json{{"cmc", r.cmc}, {"map", r.map}, {"rank1", r.rank1()}, {"n_queries", r.n_queries},
           {"n_excluded", r.n_excluded}};
}

namespace detail {

/// Gallery indices ordered best-first for one query; equal scores keep
/// gallery index order.
template <class T>
std::vector<Eigen::Index> rank_gallery(const Eigen::Matrix<T, 1, Eigen::Dynamic>& query_row, const Matrix<T>& gallery, Metric metric) {
  const Eigen::Index g = gallery.rows();
  std::vector<double> score(static_cast<std::size_t>(g));
  if (metric == Metric::euclidean) {
    for (Eigen::Index j = 0; j < g; ++j) {
      score[static_cast<std::size_t>(j)] = static_cast<double>((gallery.row(j) - query_row).squaredNorm());
    }
  } else {
    const double qn = static_cast<double>(query_row.norm());
    for (Eigen::Index j = 0; j < g; ++j) {
      const double denom = qn * static_cast<double>(gallery.row(j).norm());
      const double cos = denom > 0 ? static_cast<double>(gallery.row(j).dot(query_row)) / denom : 0.0;
      score[static_cast<std::size_t>(j)] = -cos;  // smaller is better for both metrics
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(g));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return score[static_cast<std::size_t>(a)] < score[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace detail

/// CMC and mAP. Gallery entries sharing both identity and camera with the
/// query are dropped before scoring; queries left without any correct match
/// are excluded and counted.
template <class T>
EvalReport cmc_map(const Matrix<T>& query_feats, const std::vector<int>& query_ids,
                   const std::vector<int>& query_cams, const Matrix<T>& gal_feats,
                   const std::vector<int>& gal_ids, const std::vector<int>& gal_cams,
                   Metric metric = Metric::euclidean, int max_rank = 20) {
  const auto q = static_cast<std::size_t>(query_feats.rows());
  const auto g = static_cast<std::size_t>(gal_feats.rows());
  if (query_ids.size() != q || query_cams.size() != q) throw std::invalid_argument("cmc_map: query metadata size");
  if (gal_ids.size() != g || gal_cams.size() != g) throw std::invalid_argument("cmc_map: gallery metadata size");
  if (q > 0 && g > 0 && query_feats.cols() != gal_feats.cols()) {
    throw std::invalid_argument("cmc_map: query/gallery feature widths differ");
  }
  if (max_rank < 1) throw std::invalid_argument("cmc_map: max_rank must be >= 1");

  EvalReport report;
  std::vector<long> hits(static_cast<std::size_t>(max_rank), 0);
  double ap_sum = 0;
  for (std::size_t i = 0; i < q; ++i) {
    const Eigen::Matrix<T, 1, Eigen::Dynamic> row = query_feats.row(static_cast<Eigen::Index>(i));
    const auto order = detail::rank_gallery(row, gal_feats, metric);
    long position = 0;  // position within the filtered ranking
    long first_hit = -1;
    long n_rel = 0;
    double precision_sum = 0;
    for (Eigen::Index j : order) {
      const auto ju = static_cast<std::size_t>(j);
      const bool same_id = gal_ids[ju] == query_ids[i];
      if (same_id && gal_cams[ju] == query_cams[i]) continue;
      ++position;
      if (same_id) {
        ++n_rel;
        precision_sum += static_cast<double>(n_rel) / static_cast<double>(position);
        if (first_hit < 0) first_hit = position;
      }
    }
    if (n_rel == 0) {
      ++report.n_excluded;
      continue;
    }
    const double ap = precision_sum / static_cast<double>(n_rel);
    report.ap.push_back(ap);
    ap_sum += ap;
    for (long k = first_hit; k <= max_rank; ++k) ++hits[static_cast<std::size_t>(k - 1)];
    ++report.n_queries;
  }
  report.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  if (report.n_queries > 0) {
    for (int k = 0; k < max_rank; ++k) {
      report.cmc[static_cast<std::size_t>(k)] =
          static_cast<double>(hits[static_cast<std::size_t>(k)]) / report.n_queries;
    }
    report.map = ap_sum / report.n_queries;
  }
  return report;
}

/// Rows of one modality with their metadata.
struct RetrievalSet {
  Matrix<float> rows;
  std::vector<int> ids;
  std::vector<int> cams;
};

struct ProtocolSplit {
  ProtocolMode mode = ProtocolMode::vis_to_ir;
  RetrievalSet query;
  RetrievalSet gallery;
};

/// Queries come from the source modality, the gallery from the target one.
/// With gallery_per_camera = 0 every target row enters the gallery; with
/// k > 0, k rows per (identity, camera) are drawn with `rng`. Query order is
/// source row order.
inline ProtocolSplit make_protocol_split(const ModalSet& set, ProtocolMode mode, Rng& rng,
                                         int gallery_per_camera = 0) {
  set.check_consistent();
  if (gallery_per_camera < 0) throw std::invalid_argument("make_protocol_split: gallery_per_camera < 0");
  const Modality src = mode == ProtocolMode::vis_to_ir ? Modality::Visible : Modality::Infrared;
  const Modality dst = mode == ProtocolMode::vis_to_ir ? Modality::Infrared : Modality::Visible;

  ProtocolSplit split;
  split.mode = mode;
  split.query = {set.rows(src), set.labels(src), set.cams(src)};

  const auto& dst_ids = set.labels(dst);
  const auto& dst_cams = set.cams(dst);
  for (int id : set.labels(src)) {
    if (std::find(dst_ids.begin(), dst_ids.end(), id) == dst_ids.end()) {
      throw std::invalid_argument("make_protocol_split: identity " + std::to_string(id) +
                                  " missing in the target modality");
    }
  }

  std::vector<std::size_t> keep;
  if (gallery_per_camera == 0) {
    keep.resize(dst_ids.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
  } else {
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < dst_ids.size(); ++r) groups[{dst_ids[r], dst_cams[r]}].push_back(r);
    for (auto& [key, rows] : groups) {
      const std::size_t take = std::min<std::size_t>(rows.size(), static_cast<std::size_t>(gallery_per_camera));
      for (std::size_t t = 0; t < take; ++t) {
        std::uniform_int_distribution<std::size_t> pick(t, rows.size() - 1);
        std::swap(rows[t], rows[pick(rng)]);
      }
      keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(keep.begin(), keep.end());
  }

  const Matrix<float>& dst_rows = set.rows(dst);
  split.gallery.rows.resize(static_cast<Eigen::Index>(keep.size()), dst_rows.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    split.gallery.rows.row(static_cast<Eigen::Index>(k)) = dst_rows.row(static_cast<Eigen::Index>(keep[k]));
    split.gallery.ids.push_back(dst_ids[keep[k]]);
    split.gallery.cams.push_back(dst_cams[keep[k]]);
  }
  return split;
}

}  // namespace bdlf
