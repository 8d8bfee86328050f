#pragma once

// Synthetic two-modality identity data with a known shared/specific latent
// split, PK mini-batch sampling, and the on-disk array-directory format.

#include "bdlf/autodiff.hpp"
#include "bdlf/io.hpp"
#include "bdlf/json_util.hpp"
#include "bdlf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlf {

/// Either a flat vector (height = width = 1) or a channels x height x width
/// image. Image rows are stored channel-major: index = (c * height + y) * width + x.
struct ObservationShape {
  int channels = 64;
  int height = 1;
  int width = 1;

  static ObservationShape flat(int dim) { return {dim, 1, 1}; }
  static ObservationShape image(int c, int h, int w) { return {c, h, w}; }
  bool is_flat() const { return height == 1 && width == 1; }
  Eigen::Index size() const { return Eigen::Index(channels) * height * width; }
  bool operator==(const ObservationShape&) const = default;
};

inline void to_json(Json& j, const ObservationShape& s) {
  j = Json{{"channels", s.channels}, {"height", s.height}, {"width", s.width}};
}

inline void from_json(const Json& j, ObservationShape& s) {
  const std::string sec = "observation_shape";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec, {"channels", "height", "width"});
  json_util::read(j, sec, "channels", s.channels);
  json_util::read(j, sec, "height", s.height);
  json_util::read(j, sec, "width", s.width);
  json_util::check(s.channels >= 1 && s.height >= 1 && s.width >= 1, sec, "extents must be >= 1");
}

struct SynthSpec {
  int n_identities = 32;
  int samples_per_modality_per_id = 8;
  int shared_dim = 8;
  int specific_dim = 8;
  ObservationShape observation_shape = ObservationShape::flat(64);
  double noise_scale = 0.1;
  /// Multiplier on the specific-latent columns of both mixtures; 0 makes each
  /// observation a deterministic function of its identity's shared latent.
  double specific_scale = 1.0;
  std::uint64_t seed = 7;

  void validate() const {
    using json_util::check;
    check(n_identities >= 2, "synth.n_identities", "must be >= 2");
    check(samples_per_modality_per_id >= 1, "synth.samples_per_modality_per_id", "must be >= 1");
    check(shared_dim >= 1, "synth.shared_dim", "must be >= 1");
    check(specific_dim >= 1, "synth.specific_dim", "must be >= 1");
    check(noise_scale >= 0.0 && std::isfinite(noise_scale), "synth.noise_scale", "must be >= 0");
    check(specific_scale >= 0.0 && std::isfinite(specific_scale), "synth.specific_scale",
          "must be >= 0");
    if (observation_shape.is_flat()) {
      check(shared_dim + specific_dim <= observation_shape.size(), "synth.observation_shape",
            "shared_dim + specific_dim exceeds the observation dimensionality");
    }
  }
};

inline void to_json(Json& j, const SynthSpec& s) {
  j = Json{{"n_identities", s.n_identities},
           {"samples_per_modality_per_id", s.samples_per_modality_per_id},
           {"shared_dim", s.shared_dim},
           {"specific_dim", s.specific_dim},
           {"observation_shape", s.observation_shape},
           {"noise_scale", s.noise_scale},
           {"specific_scale", s.specific_scale},
           {"seed", s.seed}};
}

inline void from_json(const Json& j, SynthSpec& s) {
  const std::string sec = "synth";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec,
                            {"n_identities", "samples_per_modality_per_id", "shared_dim",
                             "specific_dim", "observation_shape", "noise_scale", "specific_scale",
                             "seed"});
  json_util::read(j, sec, "n_identities", s.n_identities);
  json_util::read(j, sec, "samples_per_modality_per_id", s.samples_per_modality_per_id);
  json_util::read(j, sec, "shared_dim", s.shared_dim);
  json_util::read(j, sec, "specific_dim", s.specific_dim);
  json_util::read(j, sec, "observation_shape", s.observation_shape);
  json_util::read(j, sec, "noise_scale", s.noise_scale);
  json_util::read(j, sec, "specific_scale", s.specific_scale);
  json_util::read(j, sec, "seed", s.seed);
}

enum class Modality { Visible, Infrared };

/// Rows of two modalities with labels and camera ids. Used both for raw
/// observations and for extracted features.
struct ModalSet {
  ObservationShape shape;
  Matrix<float> vis;
  Matrix<float> ir;
  std::vector<int> vis_labels;
  std::vector<int> ir_labels;
  std::vector<int> vis_cams;
  std::vector<int> ir_cams;

  const Matrix<float>& rows(Modality m) const { return m == Modality::Visible ? vis : ir; }
  const std::vector<int>& labels(Modality m) const {
    return m == Modality::Visible ? vis_labels : ir_labels;
  }
  const std::vector<int>& cams(Modality m) const {
    return m == Modality::Visible ? vis_cams : ir_cams;
  }

  std::vector<int> identity_labels() const {
    std::set<int> ids(vis_labels.begin(), vis_labels.end());
    ids.insert(ir_labels.begin(), ir_labels.end());
    return {ids.begin(), ids.end()};
  }

  std::map<int, std::vector<Eigen::Index>> rows_by_label(Modality m) const {
    std::map<int, std::vector<Eigen::Index>> out;
    const auto& l = labels(m);
    for (std::size_t i = 0; i < l.size(); ++i) out[l[i]].push_back(static_cast<Eigen::Index>(i));
    return out;
  }

  void check_consistent() const {
    auto bad = [](const std::string& m) { throw io::FormatError("modal set: " + m); };
    if (vis.cols() != shape.size() || ir.cols() != shape.size()) bad("row width != shape size");
    if (static_cast<std::size_t>(vis.rows()) != vis_labels.size() ||
        vis_labels.size() != vis_cams.size())
      bad("visible label/camera count mismatch");
    if (static_cast<std::size_t>(ir.rows()) != ir_labels.size() ||
        ir_labels.size() != ir_cams.size())
      bad("infrared label/camera count mismatch");
  }
};

/// Fixed per-dataset mixing matrices [observation_dim x (shared + specific)].
struct SynthMixing {
  Matrix<double> vis;
  Matrix<double> ir;
};

struct SynthDataset {
  SynthSpec spec;
  SynthMixing mixing;
  ModalSet data;
};

namespace detail {

inline ModalSet generate_identities(const SynthSpec& spec, const SynthMixing& mixing, int n_ids,
                                    int samples, Rng& rng, int label_offset) {
  const Eigen::Index dim = spec.observation_shape.size();
  const Eigen::Index latent = spec.shared_dim + spec.specific_dim;
  const Eigen::Index n = Eigen::Index(n_ids) * samples;
  std::normal_distribution<double> normal(0.0, 1.0);

  ModalSet set;
  set.shape = spec.observation_shape;
  set.vis.resize(n, dim);
  set.ir.resize(n, dim);

  Eigen::VectorXd z(latent);
  Eigen::VectorXd noise(dim);
  auto emit = [&](const Matrix<double>& g, Matrix<float>& out, Eigen::Index row) {
    for (Eigen::Index k = spec.shared_dim; k < latent; ++k) z(k) = spec.specific_scale * normal(rng);
    for (Eigen::Index k = 0; k < dim; ++k) noise(k) = spec.noise_scale * normal(rng);
    Eigen::VectorXd x = g * z + noise;
    out.row(row) = x.transpose().cast<float>();
  };

  for (int b = 0; b < n_ids; ++b) {
    for (Eigen::Index k = 0; k < spec.shared_dim; ++k) z(k) = normal(rng);
    for (int p = 0; p < samples; ++p) {
      const Eigen::Index row = Eigen::Index(b) * samples + p;
      emit(mixing.vis, set.vis, row);
      emit(mixing.ir, set.ir, row);
      set.vis_labels.push_back(label_offset + b);
      set.ir_labels.push_back(label_offset + b);
      // Two cameras per modality, assigned round-robin.
      set.vis_cams.push_back(p % 2);
      set.ir_cams.push_back(p % 2);
    }
  }
  return set;
}

}  // namespace detail

inline SynthDataset make_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Eigen::Index dim = spec.observation_shape.size();
  const Eigen::Index latent = spec.shared_dim + spec.specific_dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(latent));
  SynthDataset ds;
  ds.spec = spec;
  ds.mixing.vis = random_normal<double>(dim, latent, s, rng);
  ds.mixing.ir = random_normal<double>(dim, latent, s, rng);
  ds.data = detail::generate_identities(spec, ds.mixing, spec.n_identities,
                                        spec.samples_per_modality_per_id, rng, 0);
  return ds;
}

/// Fresh identities drawn through the same mixtures as `base`, labelled from
/// `label_offset` upward. Used for held-out retrieval evaluation.
inline ModalSet make_heldout(const SynthDataset& base, int n_ids, int samples, std::uint64_t seed,
                             int label_offset) {
  if (n_ids < 1 || samples < 1) throw std::invalid_argument("make_heldout: empty request");
  Rng rng(seed);
  return detail::generate_identities(base.spec, base.mixing, n_ids, samples, rng, label_offset);
}

/// PK mini-batch; row i of vis and row i of ir always share identity_labels[i].
struct ModalBatch {
  Matrix<float> vis;
  Matrix<float> ir;
  std::vector<int> labels;
  std::vector<int> vis_cams;
  std::vector<int> ir_cams;
  Eigen::Index n_pairs() const { return vis.rows(); }
};

inline ModalBatch sample_pk_batch(const ModalSet& data, int p_ids, int k_per, Rng& rng) {
  if (p_ids < 1 || k_per < 1) throw std::invalid_argument("sample_pk_batch: p_ids, k_per >= 1");
  const auto vis_rows = data.rows_by_label(Modality::Visible);
  const auto ir_rows = data.rows_by_label(Modality::Infrared);
  const auto ids = data.identity_labels();
  for (int id : ids) {
    auto v = vis_rows.find(id);
    auto r = ir_rows.find(id);
    const std::size_t nv = v == vis_rows.end() ? 0 : v->second.size();
    const std::size_t ni = r == ir_rows.end() ? 0 : r->second.size();
    if (nv < static_cast<std::size_t>(k_per) || ni < static_cast<std::size_t>(k_per)) {
      throw std::invalid_argument("sample_pk_batch: identity " + std::to_string(id) + " has " +
                                  std::to_string(nv) + " visible / " + std::to_string(ni) +
                                  " infrared samples, need " + std::to_string(k_per));
    }
  }
  if (ids.size() < static_cast<std::size_t>(p_ids)) {
    throw std::invalid_argument("sample_pk_batch: only " + std::to_string(ids.size()) +
                                " identities, need " + std::to_string(p_ids));
  }

  // Partial Fisher-Yates: first `count` entries become a uniform sample without replacement.
  auto pick = [&rng](std::vector<Eigen::Index> pool, int count) {
    for (int i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[d(rng)]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
  };

  std::vector<Eigen::Index> id_pool(ids.begin(), ids.end());
  const auto chosen = pick(id_pool, p_ids);

  const Eigen::Index n = Eigen::Index(p_ids) * k_per;
  ModalBatch batch;
  batch.vis.resize(n, data.vis.cols());
  batch.ir.resize(n, data.ir.cols());
  Eigen::Index row = 0;
  for (Eigen::Index id : chosen) {
    const auto v = pick(vis_rows.at(static_cast<int>(id)), k_per);
    const auto r = pick(ir_rows.at(static_cast<int>(id)), k_per);
    for (int k = 0; k < k_per; ++k, ++row) {
      batch.vis.row(row) = data.vis.row(v[static_cast<std::size_t>(k)]);
      batch.ir.row(row) = data.ir.row(r[static_cast<std::size_t>(k)]);
      batch.labels.push_back(static_cast<int>(id));
      batch.vis_cams.push_back(data.vis_cams[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])]);
      batch.ir_cams.push_back(data.ir_cams[static_cast<std::size_t>(r[static_cast<std::size_t>(k)])]);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Array-directory format: manifest.json plus one little-endian file per array
// (float32 for rows, int32 for labels and camera ids).

inline void save_modal_set(const io::fs::path& dir, const ModalSet& set, const Json& extra = {}) {
  set.check_consistent();
  io::fs::create_directories(dir);
  auto f32 = [&](const char* file, const Matrix<float>& m) {
    io::write_array_file<float>(dir / file, std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
  };
  auto i32 = [&](const char* file, const std::vector<int>& v) {
    std::vector<std::int32_t> w(v.begin(), v.end());
    io::write_array_file<std::int32_t>(dir / file, w);
  };
  f32("vis.f32", set.vis);
  f32("ir.f32", set.ir);
  i32("vis_labels.i32", set.vis_labels);
  i32("ir_labels.i32", set.ir_labels);
  i32("vis_cams.i32", set.vis_cams);
  i32("ir_cams.i32", set.ir_cams);

  Json manifest{{"format", "bdlf-modal-set"},
                {"version", 1},
                {"byte_order", "little"},
                {"observation_shape", set.shape},
                {"n_vis", set.vis.rows()},
                {"n_ir", set.ir.rows()},
                {"arrays",
                 {{"vis", {{"file", "vis.f32"}, {"dtype", "float32"}, {"shape", {set.vis.rows(), set.shape.size()}}}},
                  {"ir", {{"file", "ir.f32"}, {"dtype", "float32"}, {"shape", {set.ir.rows(), set.shape.size()}}}},
                  {"vis_labels", {{"file", "vis_labels.i32"}, {"dtype", "int32"}, {"shape", {set.vis.rows()}}}},
                  {"ir_labels", {{"file", "ir_labels.i32"}, {"dtype", "int32"}, {"shape", {set.ir.rows()}}}},
                  {"vis_cams", {{"file", "vis_cams.i32"}, {"dtype", "int32"}, {"shape", {set.vis.rows()}}}},
                  {"ir_cams", {{"file", "ir_cams.i32"}, {"dtype", "int32"}, {"shape", {set.ir.rows()}}}}}}};
  // Label table: identity -> sample counts per modality.
  Json table = Json::array();
  const auto vis_rows = set.rows_by_label(Modality::Visible);
  const auto ir_rows = set.rows_by_label(Modality::Infrared);
  for (int id : set.identity_labels()) {
    auto v = vis_rows.find(id);
    auto r = ir_rows.find(id);
    table.push_back({{"label", id},
                     {"n_vis", v == vis_rows.end() ? 0 : v->second.size()},
                     {"n_ir", r == ir_rows.end() ? 0 : r->second.size()}});
  }
  manifest["label_table"] = table;
  if (!extra.is_null()) manifest["extra"] = extra;
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline ModalSet load_modal_set(const io::fs::path& dir, Json* extra = nullptr) {
  Json manifest;
  try {
    manifest = Json::parse(io::read_text(dir / "manifest.json"));
  } catch (const Json::exception& e) {
    throw io::FormatError(dir.string() + "/manifest.json: " + e.what());
  }
  if (manifest.value("format", "") != "bdlf-modal-set" || manifest.value("version", 0) != 1) {
    throw io::FormatError(dir.string() + ": not a version-1 bdlf-modal-set directory");
  }
  if (manifest.value("byte_order", "") != "little") throw io::FormatError("unsupported byte order");
  ModalSet set;
  set.shape = manifest.at("observation_shape").get<ObservationShape>();
  const auto n_vis = manifest.at("n_vis").get<Eigen::Index>();
  const auto n_ir = manifest.at("n_ir").get<Eigen::Index>();
  const Eigen::Index d = set.shape.size();
  auto f32 = [&](const char* file, Eigen::Index rows) {
    auto v = io::read_array_file<float>(dir / file, static_cast<std::size_t>(rows * d));
    return Matrix<float>(Eigen::Map<Matrix<float>>(v.data(), rows, d));
  };
  auto i32 = [&](const char* file, Eigen::Index rows) {
    auto v = io::read_array_file<std::int32_t>(dir / file, static_cast<std::size_t>(rows));
    return std::vector<int>(v.begin(), v.end());
  };
  set.vis = f32("vis.f32", n_vis);
  set.ir = f32("ir.f32", n_ir);
  set.vis_labels = i32("vis_labels.i32", n_vis);
  set.ir_labels = i32("ir_labels.i32", n_ir);
  set.vis_cams = i32("vis_cams.i32", n_vis);
  set.ir_cams = i32("ir_cams.i32", n_ir);
  set.check_consistent();
  if (extra != nullptr) *extra = manifest.value("extra", Json{});
  return set;
}

/// Dataset export: the modal-set arrays plus the generating spec (dims, seed) in
/// the manifest, so the mixtures can be regenerated exactly on import.
inline void save_dataset(const io::fs::path& dir, const SynthDataset& ds) {
  save_modal_set(dir, ds.data, Json{{"synth_spec", ds.spec}});
}

inline SynthDataset load_dataset(const io::fs::path& dir) {
  Json extra;
  SynthDataset ds;
  ds.data = load_modal_set(dir, &extra);
  if (!extra.is_object() || !extra.contains("synth_spec")) {
    throw io::FormatError(dir.string() + ": manifest carries no synth_spec");
  }
  ds.spec = extra.at("synth_spec").get<SynthSpec>();
  ds.mixing = make_dataset(ds.spec).mixing;
  return ds;
}

}  // namespace bdlf
