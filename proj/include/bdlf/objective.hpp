#pragma once

// Full model assembly, the summed training objective, and the optimization
// loop (warmup + step schedule, SGD with momentum, parameter EMA).

#include "bdlf/autodiff.hpp"
#include "bdlf/backbone.hpp"
#include "bdlf/beg.hpp"
#include "bdlf/dfe.hpp"
#include "bdlf/losses.hpp"
#include "bdlf/nn.hpp"
#include "bdlf/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace bdlf {

/// Component switches mirroring the ablation columns.
struct Toggles {
  bool dfe = true;
  bool beg = true;
  bool l_app = true;
  bool l_orth = true;
  bool l_skd = true;

  std::string label() const {
    std::string s;
    auto put = [&s](bool on, const char* name) {
      if (!on) return;
      if (!s.empty()) s += "+";
      s += name;
    };
    put(dfe, "DFE");
    put(beg, "BEG");
    put(l_app, "l_app");
    put(l_orth, "l_orth");
    put(l_skd, "l_skd");
    return s.empty() ? "backbone" : s;
  }
  bool operator==(const Toggles&) const = default;
};

inline void to_json(Json& j, const Toggles& t) {
  j = Json{{"dfe", t.dfe}, {"beg", t.beg}, {"l_app", t.l_app}, {"l_orth", t.l_orth}, {"l_skd", t.l_skd}};
}

inline void from_json(const Json& j, Toggles& t) {
  const std::string sec = "toggles";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec, {"dfe", "beg", "l_app", "l_orth", "l_skd"});
  json_util::read(j, sec, "dfe", t.dfe);
  json_util::read(j, sec, "beg", t.beg);
  json_util::read(j, sec, "l_app", t.l_app);
  json_util::read(j, sec, "l_orth", t.l_orth);
  json_util::read(j, sec, "l_skd", t.l_skd);
}

struct ModelConfig {
  BackboneConfig backbone;
  int dfe_depth = 6;
  int n_classes = 32;
  SKDConfig skd;
  double triplet_margin = 0.3;
  Toggles toggles;
  std::uint64_t init_seed = 1;

  void validate() const {
    backbone.validate();
    skd.validate();
    json_util::check(dfe_depth >= 1, "dfe_depth", "must be >= 1");
    json_util::check(n_classes >= 2, "n_classes", "must be >= 2");
    json_util::check(triplet_margin >= 0.0, "triplet_margin", "must be >= 0");
  }
};

template <class T>
struct LossOutput {
  ad::Var<T> total;
  LossBreakdown breakdown;
  double c_base = 0;    // cross-modality correlation of base features
  double c_detail = 0;  // cross-modality correlation of detail features
};

template <class T>
class BdlfModel {
 public:
  explicit BdlfModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    Rng rng(config_.init_seed);
    const bool spatial = !config_.backbone.flat_mode;
    const Eigen::Index c_mid = config_.backbone.c_mid();
    const Eigen::Index c = config_.backbone.c_out();
    // Every component is built whatever the toggles say, so variants that
    // differ only in toggles start from identical parameters.
    backbone_ = Backbone<T>(config_.backbone, store_, rng);
    dfe_ = DetailExtractor<T>(store_, c_mid, config_.dfe_depth, spatial, rng);
    head_ = DetailHead<T>(store_, c, c_mid / 2, config_.n_classes, rng);
    proj_ = ProjectionHead<T>(store_, c, rng);
    fusion_ = BaseFusion<T>(store_, c, rng);
    cls_b_ = Linear<T>(store_, "head.cls_b", c, config_.n_classes, rng, lecun_std(c), false);
  }

  BdlfModel(const BdlfModel&) = delete;
  BdlfModel& operator=(const BdlfModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const Backbone<T>& backbone() const { return backbone_; }
  const DetailExtractor<T>& dfe() const { return dfe_; }
  const DetailHead<T>& detail_head() const { return head_; }
  const ProjectionHead<T>& projection() const { return proj_; }
  const BaseFusion<T>& fusion() const { return fusion_; }
  const Linear<T>& cls_b() const { return cls_b_; }

  FeaturePack<T> forward(const ModalBatch& batch) const {
    const auto& tg = config_.toggles;
    FeaturePack<T> pack;
    auto fore = backbone_.encode_fore(batch);
    pack.zm_v = fore.zm_v;
    pack.zm_i = fore.zm_i;
    auto rear = backbone_.encode_rear(fore.zm_v, fore.zm_i);
    pack.z_v = rear.z_v;
    pack.z_i = rear.z_i;
    pack.z = rear.z;

    auto detail = tg.dfe ? dfe_.forward(fore.zm_v, fore.zm_i)
                         : DetailExtractor<T>::bypass(fore.zm_v, fore.zm_i);
    pack.zd_v = detail.zd_v;
    pack.zd_i = detail.zd_i;
    pack.zd = detail.zd;

    if (tg.beg) {
      auto split = proj_.project(pack.z);
      pack.zd_bar = split.zd_bar;
      pack.zb = split.zb;
      auto fused = fusion_.fuse(pack.zb_v(), pack.zb_i());
      pack.zbf_bar = fused.zbf_bar;
      pack.zbf = fused.zbf;
    }
    return pack;
  }

  /// Unweighted sum of the identity, triplet, consistency, detail, base and
  /// correlation-ratio terms. Switched-off terms contribute exact zeros.
  LossOutput<T> total_loss(const FeaturePack<T>& pack, const std::vector<int>& pair_labels) const {
    const auto& tg = config_.toggles;
    const Eigen::Index n = pack.n_pairs();
    if (static_cast<Eigen::Index>(pair_labels.size()) != n) {
      throw std::invalid_argument("total_loss: one label per pair expected");
    }
    if (!pack.z.defined() || !pack.has_detail() || (tg.beg && (!pack.has_base() || !pack.has_fusion()))) {
      throw std::invalid_argument("total_loss: incomplete feature pack");
    }
    std::vector<int> labels(pair_labels);
    labels.insert(labels.end(), pair_labels.begin(), pair_labels.end());
    auto zero = ad::scalar<T>(T(0));

    auto logits = cls_b_(pack.z);
    auto l_id = id_loss(logits, labels);
    auto l_tri = triplet_loss(pack.z, labels, static_cast<T>(config_.triplet_margin));
    auto l_okl = mutual_align(ad::slice_rows(logits, 0, n), ad::slice_rows(logits, n, n));

    DetailLosses<T> dl{zero, zero, zero};
    if (tg.dfe) dl = dfe_loss(pack.zd, pack.z, head_, cls_b_, labels);

    BaseLosses<T> bl{{zero, zero, zero, zero}, zero, zero, zero, zero, zero, zero, zero};
    if (tg.beg) bl = beg_loss(pack, head_, proj_, cls_b_, labels, config_.skd, {tg.l_app, tg.l_orth});

    ad::Var<T> base_v = tg.beg ? pack.zb_v() : pack.z_v;
    ad::Var<T> base_i = tg.beg ? pack.zb_i() : pack.z_i;
    auto l_skd = tg.l_skd ? skd_loss(base_v, base_i, pack.zd_v, pack.zd_i, config_.skd) : zero;

    LossOutput<T> out;
    out.total = ad::add(ad::add(ad::add(ad::add(ad::add(l_id, l_tri), l_okl), dl.l_DFE), bl.l_BEG), l_skd);

    auto v = [](const ad::Var<T>& x) { return static_cast<double>(x.item()); };
    auto& b = out.breakdown;
    b.l_id = v(l_id);
    b.l_tri = v(l_tri);
    b.l_okl = v(l_okl);
    b.l_id_D = v(dl.l_id_D);
    b.l_odkl = v(dl.l_odkl);
    b.l_DFE = v(dl.l_DFE);
    b.l_fkl = v(bl.approach.l_fkl);
    b.l_dkl = v(bl.approach.l_dkl);
    b.l_dcorr = v(bl.approach.l_dcorr);
    b.l_app = v(bl.approach.l_app);
    b.l_id_B = v(bl.l_id_B);
    b.l_bkl = v(bl.l_bkl);
    b.l_id_F = v(bl.l_id_F);
    b.l_fbkl = v(bl.l_fbkl);
    b.l_cmf = v(bl.l_cmf);
    b.l_orth = v(bl.l_orth);
    b.l_BEG = v(bl.l_BEG);
    b.l_skd = v(l_skd);
    b.total = v(out.total);

    ad::NoGradGuard no_grad;
    out.c_base = v(pearson_corr(ad::detach(base_v), ad::detach(base_i)));
    out.c_detail = v(pearson_corr(ad::detach(pack.zd_v), ad::detach(pack.zd_i)));
    return out;
  }

  /// Comprehensive features only (the retrieval embedding), no graph recorded.
  Matrix<T> embed(const Matrix<float>& rows) const {
    ad::NoGradGuard no_grad;
    return backbone_.embed(rows).value();
  }

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  Backbone<T> backbone_;
  DetailExtractor<T> dfe_;
  DetailHead<T> head_;
  ProjectionHead<T> proj_;
  BaseFusion<T> fusion_;
  Linear<T> cls_b_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr_init = 1e-2;
  double lr_peak = 1e-1;
  int warmup_epochs = 2;
  std::vector<int> decay_epochs{10, 15};
  std::vector<double> lr_values{1e-2, 1e-3};
  int total_epochs = 20;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double ema_decay = 0.99;
  int p_ids = 8;
  int k_per = 4;
  /// PK batches per epoch; 0 means one pass over the visible rows on average.
  int steps_per_epoch = 32;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 2.0;
  std::uint64_t seed = 1;

  /// Learning rate for a 0-based epoch: linear warmup from lr_init to lr_peak
  /// over warmup_epochs, then lr_peak until the first decay epoch, then the
  /// matching lr_values entry.
  double lr_at(int epoch) const {
    if (epoch < warmup_epochs) {
      return lr_init + (lr_peak - lr_init) * static_cast<double>(epoch) / warmup_epochs;
    }
    double lr = lr_peak;
    for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
      if (epoch >= decay_epochs[i]) lr = lr_values[i];
    }
    return lr;
  }

  void validate() const {
    using json_util::check;
    check(lr_init > 0 && lr_peak > 0, "train.lr_init", "learning rates must be positive");
    check(decay_epochs.size() == lr_values.size(), "train.lr_values",
          "must have one entry per decay epoch");
    for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
      check(decay_epochs[i] > decay_epochs[i - 1], "train.decay_epochs", "must be increasing");
    }
    for (double v : lr_values) check(v > 0, "train.lr_values", "must be positive");
    check(warmup_epochs >= 0, "train.warmup_epochs", "must be >= 0");
    check(total_epochs >= 1, "train.total_epochs", "must be >= 1");
    check(momentum >= 0 && momentum < 1, "train.momentum", "must lie in [0, 1)");
    check(weight_decay >= 0, "train.weight_decay", "must be >= 0");
    check(ema_decay > 0 && ema_decay < 1, "train.ema_decay", "must lie in (0, 1)");
    check(p_ids >= 2, "train.p_ids", "must be >= 2 (triplet mining needs negatives)");
    check(k_per >= 1, "train.k_per", "must be >= 1");
    check(steps_per_epoch >= 0, "train.steps_per_epoch", "must be >= 0");
    check(grad_clip >= 0, "train.grad_clip", "must be >= 0");
  }

  static TrainConfig desk_profile() { return {}; }

  /// Full-scale schedule (SYSU-MM01 decay points, 220 epochs).
  static TrainConfig paper_profile() {
    TrainConfig c;
    c.lr_init = 1e-2;
    c.lr_peak = 1e-1;
    c.warmup_epochs = 10;
    c.decay_epochs = {20, 95, 180};
    c.lr_values = {1e-2, 1e-3, 1e-4};
    c.total_epochs = 220;
    c.ema_decay = 0.999;
    c.steps_per_epoch = 0;
    c.grad_clip = 0.0;
    return c;
  }
};

inline void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"lr_init", c.lr_init},          {"lr_peak", c.lr_peak},
           {"warmup_epochs", c.warmup_epochs}, {"decay_epochs", c.decay_epochs},
           {"lr_values", c.lr_values},      {"total_epochs", c.total_epochs},
           {"momentum", c.momentum},        {"weight_decay", c.weight_decay},
           {"ema_decay", c.ema_decay},      {"p_ids", c.p_ids},
           {"k_per", c.k_per},              {"steps_per_epoch", c.steps_per_epoch},
           {"grad_clip", c.grad_clip},      {"seed", c.seed}};
}

inline void from_json(const Json& j, TrainConfig& c) {
  const std::string sec = "train";
  json_util::require_object(j, sec);
  json_util::reject_unknown(j, sec,
                            {"lr_init", "lr_peak", "warmup_epochs", "decay_epochs", "lr_values",
                             "total_epochs", "momentum", "weight_decay", "ema_decay", "p_ids",
                             "k_per", "steps_per_epoch", "grad_clip", "seed"});
  json_util::read(j, sec, "lr_init", c.lr_init);
  json_util::read(j, sec, "lr_peak", c.lr_peak);
  json_util::read(j, sec, "warmup_epochs", c.warmup_epochs);
  json_util::read(j, sec, "decay_epochs", c.decay_epochs);
  json_util::read(j, sec, "lr_values", c.lr_values);
  json_util::read(j, sec, "total_epochs", c.total_epochs);
  json_util::read(j, sec, "momentum", c.momentum);
  json_util::read(j, sec, "weight_decay", c.weight_decay);
  json_util::read(j, sec, "ema_decay", c.ema_decay);
  json_util::read(j, sec, "p_ids", c.p_ids);
  json_util::read(j, sec, "k_per", c.k_per);
  json_util::read(j, sec, "steps_per_epoch", c.steps_per_epoch);
  json_util::read(j, sec, "grad_clip", c.grad_clip);
  json_util::read(j, sec, "seed", c.seed);
}

/// Shadow copy of every parameter: shadow <- decay * shadow + (1 - decay) * live.
template <class T>
class EmaState {
 public:
  EmaState() = default;
  EmaState(const ParamStore<T>& store, double decay) : decay_(decay), shadow_(store.snapshot()) {
    if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("EmaState: decay must lie in (0, 1]");
  }

  void update(const ParamStore<T>& store) {
    const T d = static_cast<T>(decay_);
    for (const auto& e : store.entries()) {
      auto& s = shadow_.at(e.name);
      s = d * s + (T(1) - d) * e.var.value();
    }
  }

  double decay() const { return decay_; }
  const std::map<std::string, Matrix<T>>& shadow() const { return shadow_; }
  std::map<std::string, Matrix<T>>& shadow() { return shadow_; }

 private:
  double decay_ = 0.999;
  std::map<std::string, Matrix<T>> shadow_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, int epoch, int step)
      : std::runtime_error("non-finite loss term " + term + " at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step)),
        term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct MetricsRow {
  int epoch = 0;
  int step = 0;
  LossBreakdown losses;
  double c_base = 0;
  double c_detail = 0;
  double lr = 0;
};

inline std::string metrics_csv_header() {
  std::string h = "epoch,step";
  for (const auto& n : LossBreakdown::field_names()) h += "," + n;
  return h + ",c_B,c_D,lr";
}

inline std::string metrics_csv_line(const MetricsRow& r) {
  std::string line = std::to_string(r.epoch) + "," + std::to_string(r.step);
  char buf[40];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof(buf), ",%.17g", x);
    line += buf;
  };
  for (double x : r.losses.values()) put(x);
  put(r.c_base);
  put(r.c_detail);
  put(r.lr);
  return line;
}

/// SGD with momentum and weight decay (velocity <- mu v + g + wd p; p <- p - lr v),
/// EMA shadow update after every step, one metrics row per step.
template <class T>
class Trainer {
 public:
  using StepCallback = std::function<void(const MetricsRow&)>;

  Trainer(BdlfModel<T>& model, const TrainConfig& cfg)
      : model_(model), cfg_(cfg), rng_(cfg.seed), ema_(model.params(), cfg.ema_decay) {
    cfg_.validate();
  }

  int steps_per_epoch(const ModalSet& data) const {
    if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
    const auto per_batch = static_cast<Eigen::Index>(cfg_.p_ids) * cfg_.k_per;
    return static_cast<int>(std::max<Eigen::Index>(1, data.vis.rows() / per_batch));
  }

  /// One update on a given batch; returns the pre-update loss output.
  LossOutput<T> step(const ModalBatch& batch, double lr) {
    auto& store = model_.params();
    store.zero_grad();
    auto pack = model_.forward(batch);
    auto out = model_.total_loss(pack, batch.labels);
    check_finite(out.breakdown);
    ad::backward(out.total);
    apply_update(lr);
    ema_.update(store);
    ++global_step_;
    return out;
  }

  std::vector<MetricsRow> run(const ModalSet& data, const StepCallback& on_step = {}) {
    std::vector<MetricsRow> log;
    const int steps = steps_per_epoch(data);
    for (int epoch = 0; epoch < cfg_.total_epochs; ++epoch) {
      const double lr = cfg_.lr_at(epoch);
      for (int s = 0; s < steps; ++s) {
        current_epoch_ = epoch;
        auto batch = sample_pk_batch(data, cfg_.p_ids, cfg_.k_per, rng_);
        auto out = step(batch, lr);
        MetricsRow row{epoch, global_step_ - 1, out.breakdown, out.c_base, out.c_detail, lr};
        log.push_back(row);
        if (on_step) on_step(row);
      }
    }
    return log;
  }

  const EmaState<T>& ema() const { return ema_; }
  EmaState<T>& ema() { return ema_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  int global_step() const { return global_step_; }
  void set_global_step(int s) { global_step_ = s; }
  /// Momentum buffers; parameters that never received a gradient have none.
  const std::map<std::string, Matrix<T>>& velocity() const { return velocity_; }
  std::map<std::string, Matrix<T>>& velocity() { return velocity_; }

 private:
  void check_finite(const LossBreakdown& b) const {
    const auto values = b.values();
    const auto& names = LossBreakdown::field_names();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) throw NonFiniteLoss(names[i], current_epoch_, global_step_);
    }
  }

  void apply_update(double lr) {
    auto& entries = model_.params().entries();
    T clip_scale = T(1);
    if (cfg_.grad_clip > 0) {
      T sq = 0;
      for (const auto& e : entries) {
        if (e.var.has_grad()) sq += e.var.grad().squaredNorm();
      }
      const T norm = std::sqrt(sq);
      if (norm > static_cast<T>(cfg_.grad_clip)) clip_scale = static_cast<T>(cfg_.grad_clip) / norm;
    }
    const T mu = static_cast<T>(cfg_.momentum);
    const T wd = static_cast<T>(cfg_.weight_decay);
    const T eta = static_cast<T>(lr);
    for (auto& e : entries) {
      if (!e.var.has_grad()) continue;  // parameters of switched-off components stay put
      Matrix<T> g = clip_scale * e.var.grad() + wd * e.var.value();
      auto [it, fresh] = velocity_.try_emplace(e.name, g);
      if (!fresh) it->second = mu * it->second + g;
      e.var.mutable_value() -= eta * it->second;
    }
  }

  BdlfModel<T>& model_;
  TrainConfig cfg_;
  Rng rng_;
  EmaState<T> ema_;
  std::map<std::string, Matrix<T>> velocity_;
  int global_step_ = 0;
  int current_epoch_ = 0;
};

/// Comprehensive features for arbitrary rows, from live or EMA parameters.
template <class T>
Matrix<T> extract_features(BdlfModel<T>& model, const Matrix<float>& rows, bool use_ema,
                           const EmaState<T>* ema = nullptr) {
  if (!use_ema) return model.embed(rows);
  if (ema == nullptr) throw std::invalid_argument("extract_features: EMA requested but none given");
  auto live = model.params().snapshot();
  model.params().load(ema->shadow());
  Matrix<T> out = model.embed(rows);
  model.params().load(live);
  return out;
}

}  // namespace bdlf
