#pragma once

// Experiment configuration: one nested JSON document that fully describes a
// run, copied into every run directory.

#include "bdlf/evalproto.hpp"
#include "bdlf/io.hpp"
#include "bdlf/json_util.hpp"
#include "bdlf/objective.hpp"
#include "bdlf/synthdata.hpp"

#include <cstdint>
#include <string>

namespace bdlf {

struct EvalConfig {
  /// Fresh identities drawn through the training mixtures; 0 evaluates on the
  /// training identities instead.
  int heldout_ids = 32;
  int heldout_samples = 8;
  std::uint64_t heldout_seed = 1234;
  Metric metric = Metric::euclidean;
  int max_rank = 20;
  bool use_ema = true;
  int gallery_per_camera = 0;
  ProtocolMode mode = ProtocolMode::vis_to_ir;
  std::uint64_t split_seed = 5;

  void validate() const {
    using json_util::check;
    check(heldout_ids >= 0, "eval.heldout_ids", "must be >= 0");
    check(heldout_samples >= 1, "eval.heldout_samples", "must be >= 1");
    check(max_rank >= 1, "eval.max_rank", "must be >= 1");
    check(gallery_per_camera >= 0, "eval.gallery_per_camera", "must be >= 0");
  }
};

inline void to_json(Json& j, const EvalConfig& c) {
  j = Json{{"heldout_ids", c.heldout_ids},
           {"heldout_samples", c.heldout_samples},
           {"heldout_seed", c.heldout_seed},
           {"metric", to_string(c.metric)},
           {"max_rank", c.max_rank},
           {"use_ema", c.use_ema},
           {"gallery_per_camera", c.gallery_per_camera},
           {"mode", to_string(c.mode)},
           {"split_seed", c.split_seed}};
}

inline void from_json(const Json& j, EvalConfig& c) {
  const std::string sec = "eval";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec,
                            {"heldout_ids", "heldout_samples", "heldout_seed", "metric", "max_rank",
                             "use_ema", "gallery_per_camera", "mode", "split_seed"});
  json_util::read(j, sec, "heldout_ids", c.heldout_ids);
  json_util::read(j, sec, "heldout_samples", c.heldout_samples);
  json_util::read(j, sec, "heldout_seed", c.heldout_seed);
  json_util::read(j, sec, "max_rank", c.max_rank);
  json_util::read(j, sec, "use_ema", c.use_ema);
  json_util::read(j, sec, "gallery_per_camera", c.gallery_per_camera);
  json_util::read(j, sec, "split_seed", c.split_seed);
  try {
    if (j.contains("metric")) c.metric = metric_from_string(j.at("metric").get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(sec + ".metric: " + e.what());
  }
  try {
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(sec + ".mode: " + e.what());
  }
}

struct ExperimentConfig {
  SynthSpec synth;
  BackboneConfig backbone;
  int dfe_depth = 6;
  SKDConfig skd;
  double triplet_margin = 0.3;
  TrainConfig train;
  EvalConfig eval;
  Toggles toggles;
  std::string output_dir = "runs";
  /// Master seed: drives parameter init and batch sampling. The dataset keeps
  /// its own synth.seed so variants share data.
  std::uint64_t seed = 1;

  ModelConfig model_config() const {
    ModelConfig m;
    m.backbone = backbone;
    m.dfe_depth = dfe_depth;
    m.n_classes = synth.n_identities;
    m.skd = skd;
    m.triplet_margin = triplet_margin;
    m.toggles = toggles;
    m.init_seed = seed;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  void validate() const {
    using json_util::check;
    synth.validate();
    backbone.validate();
    skd.validate();
    train.validate();
    eval.validate();
    check(dfe_depth >= 1, "dfe_depth", "must be >= 1");
    check(triplet_margin >= 0, "triplet_margin", "must be >= 0");
    check(backbone.input_shape == synth.observation_shape, "backbone.input_shape",
          "must equal synth.observation_shape");
    check(train.p_ids <= synth.n_identities, "train.p_ids", "exceeds synth.n_identities");
    check(train.k_per <= synth.samples_per_modality_per_id, "train.k_per",
          "exceeds synth.samples_per_modality_per_id");
    check(!output_dir.empty(), "output_dir", "must not be empty");
  }

  /// Smallest setup that exercises the whole pipeline in a few seconds.
  static ExperimentConfig tiny() {
    ExperimentConfig c;
    c.synth.n_identities = 8;
    c.synth.samples_per_modality_per_id = 4;
    c.synth.shared_dim = 4;
    c.synth.specific_dim = 4;
    c.synth.observation_shape = ObservationShape::flat(16);
    c.backbone.stages = {8, 12, 16};
    c.backbone.split_after_stage = 2;
    c.backbone.input_shape = c.synth.observation_shape;
    c.dfe_depth = 2;
    c.train.total_epochs = 3;
    c.train.warmup_epochs = 1;
    c.train.decay_epochs = {2};
    c.train.lr_values = {1e-2};
    c.train.steps_per_epoch = 4;
    c.train.p_ids = 4;
    c.train.k_per = 2;
    c.eval.heldout_ids = 6;
    c.eval.heldout_samples = 4;
    return c;
  }
};

inline void to_json(Json& j, const ExperimentConfig& c) {
  j = Json{{"synth", c.synth},         {"backbone", c.backbone}, {"dfe_depth", c.dfe_depth},
           {"skd", c.skd},             {"triplet_margin", c.triplet_margin},
           {"train", c.train},         {"eval", c.eval},         {"toggles", c.toggles},
           {"output_dir", c.output_dir}, {"seed", c.seed}};
}

inline void from_json(const Json& j, ExperimentConfig& c) {
  const std::string sec = "config";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec,
                            {"synth", "backbone", "dfe_depth", "skd", "triplet_margin", "train", "eval",
                             "toggles", "output_dir", "seed"});
  json_util::read(j, sec, "synth", c.synth);
  json_util::read(j, sec, "backbone", c.backbone);
  json_util::read(j, sec, "dfe_depth", c.dfe_depth);
  json_util::read(j, sec, "skd", c.skd);
  json_util::read(j, sec, "triplet_margin", c.triplet_margin);
  json_util::read(j, sec, "train", c.train);
  json_util::read(j, sec, "eval", c.eval);
  json_util::read(j, sec, "toggles", c.toggles);
  json_util::read(j, sec, "output_dir", c.output_dir);
  json_util::read(j, sec, "seed", c.seed);
}

inline ExperimentConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  auto c = j.get<ExperimentConfig>();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const io::fs::path& path) { return parse_config(io::read_text(path)); }

inline std::string dump_config(const ExperimentConfig& c) { return Json(c).dump(2) + "\n"; }

}  // namespace bdlf
