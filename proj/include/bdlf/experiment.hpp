#pragma once

// Run orchestration behind the command-line tool: train, eval, ablate, plot,
// gradcheck. Everything runs in double precision.

#include "bdlf/checkpoint.hpp"
#include "bdlf/config.hpp"
#include "bdlf/evalproto.hpp"
#include "bdlf/gradcheck_suite.hpp"
#include "bdlf/io.hpp"
#include "bdlf/objective.hpp"
#include "bdlf/plot.hpp"
#include "bdlf/synthdata.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace bdlf {

namespace files {
inline constexpr const char* config = "config.json";
inline constexpr const char* metrics = "metrics.csv";
inline constexpr const char* epochs = "epochs.csv";
inline constexpr const char* checkpoint = "checkpoint.bin";
inline constexpr const char* summary = "summary.json";
}  // namespace files

/// BDLF_OUTPUT_ROOT overrides the configured output directory.
inline io::fs::path output_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("BDLF_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

struct EpochSummary {
  int epoch = 0;
  LossBreakdown losses;  // per-step means
  double c_base = 0;
  double c_detail = 0;
  double lr = 0;
};

inline std::vector<EpochSummary> summarize_epochs(const std::vector<MetricsRow>& log) {
  std::vector<EpochSummary> out;
  std::vector<double> acc;
  int count = 0;
  auto flush = [&] {
    if (count == 0) return;
    auto& e = out.back();
    for (auto& v : acc) v /= count;
    e.losses = LossBreakdown::from_values(std::vector<double>(acc.begin(), acc.end() - 2));
    e.c_base = acc[acc.size() - 2];
    e.c_detail = acc.back();
  };
  for (const auto& r : log) {
    if (out.empty() || out.back().epoch != r.epoch) {
      flush();
      out.push_back({r.epoch, {}, 0, 0, r.lr});
      acc.assign(LossBreakdown::field_names().size() + 2, 0.0);
      count = 0;
    }
    auto v = r.losses.values();
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    acc[v.size()] += r.c_base;
    acc[v.size() + 1] += r.c_detail;
    ++count;
  }
  flush();
  return out;
}

inline std::string epochs_csv(const std::vector<EpochSummary>& epochs) {
  std::string s = "epoch";
  for (const auto& n : LossBreakdown::field_names()) s += "," + n;
  s += ",c_B,c_D,lr\n";
  char buf[40];
  for (const auto& e : epochs) {
    s += std::to_string(e.epoch);
    auto put = [&](double x) {
      std::snprintf(buf, sizeof(buf), ",%.17g", x);
      s += buf;
    };
    for (double x : e.losses.values()) put(x);
    put(e.c_base);
    put(e.c_detail);
    put(e.lr);
    s += "\n";
  }
  return s;
}

/// Parses a metrics CSV written by run_train; the header must match exactly.
inline std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != metrics_csv_header()) {
    throw io::FormatError("metrics CSV: missing or unexpected header");
  }
  std::vector<MetricsRow> rows;
  const std::size_t n_loss = LossBreakdown::field_names().size();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != n_loss + 5) {
      throw io::FormatError("metrics CSV: row " + std::to_string(rows.size() + 1) + " has " +
                            std::to_string(cells.size()) + " cells");
    }
    MetricsRow r;
    r.epoch = std::stoi(cells[0]);
    r.step = std::stoi(cells[1]);
    std::vector<double> v;
    for (std::size_t i = 0; i < n_loss; ++i) v.push_back(std::stod(cells[2 + i]));
    r.losses = LossBreakdown::from_values(v);
    r.c_base = std::stod(cells[2 + n_loss]);
    r.c_detail = std::stod(cells[3 + n_loss]);
    r.lr = std::stod(cells[4 + n_loss]);
    rows.push_back(r);
  }
  return rows;
}

/// Evaluation identities: held-out ones through the training mixtures, or the
/// training set itself when eval.heldout_ids is 0.
inline ModalSet evaluation_set(const ExperimentConfig& cfg, const SynthDataset& ds) {
  if (cfg.eval.heldout_ids == 0) return ds.data;
  return make_heldout(ds, cfg.eval.heldout_ids, cfg.eval.heldout_samples, cfg.eval.heldout_seed,
                      cfg.synth.n_identities);
}

struct FeatureSplit {
  ProtocolMode mode = ProtocolMode::vis_to_ir;
  Matrix<double> query, gallery;
  std::vector<int> query_ids, query_cams, gallery_ids, gallery_cams;
};

inline FeatureSplit extract_split(const ExperimentConfig& cfg, BdlfModel<double>& model,
                                  const EmaState<double>* ema, ProtocolMode mode, bool use_ema) {
  const auto ds = make_dataset(cfg.synth);
  const auto set = evaluation_set(cfg, ds);
  Rng rng(cfg.eval.split_seed);
  const auto split = make_protocol_split(set, mode, rng, cfg.eval.gallery_per_camera);
  FeatureSplit f;
  f.mode = mode;
  f.query = extract_features(model, split.query.rows, use_ema, ema);
  f.gallery = extract_features(model, split.gallery.rows, use_ema, ema);
  f.query_ids = split.query.ids;
  f.query_cams = split.query.cams;
  f.gallery_ids = split.gallery.ids;
  f.gallery_cams = split.gallery.cams;
  return f;
}

inline EvalReport evaluate_split(const FeatureSplit& f, const EvalConfig& ec) {
  return cmc_map(f.query, f.query_ids, f.query_cams, f.gallery, f.gallery_ids, f.gallery_cams, ec.metric,
                 ec.max_rank);
}

/// Feature export: f32 arrays plus a JSON manifest.
inline void save_features(const io::fs::path& dir, const FeatureSplit& f) {
  io::fs::create_directories(dir);
  auto f32 = [&](const char* name, const Matrix<double>& m) {
    const Matrix<float> mf = m.cast<float>();
    io::write_array_file<float>(dir / name, std::span<const float>(mf.data(), static_cast<std::size_t>(mf.size())));
  };
  auto i32 = [&](const char* name, const std::vector<int>& v) {
    std::vector<std::int32_t> w(v.begin(), v.end());
    io::write_array_file<std::int32_t>(dir / name, std::span<const std::int32_t>(w));
  };
  f32("query.f32", f.query);
  f32("gallery.f32", f.gallery);
  i32("query_ids.i32", f.query_ids);
  i32("query_cams.i32", f.query_cams);
  i32("gallery_ids.i32", f.gallery_ids);
  i32("gallery_cams.i32", f.gallery_cams);
  const Json manifest{{"format", "bdlf-features"},
                      {"version", 1},
                      {"mode", to_string(f.mode)},
                      {"dim", f.query.cols()},
                      {"n_query", f.query.rows()},
                      {"n_gallery", f.gallery.rows()}};
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline FeatureSplit load_features(const io::fs::path& dir) {
  const Json m = Json::parse(io::read_text(dir / "manifest.json"));
  if (m.value("format", "") != "bdlf-features" || m.value("version", 0) != 1) {
    throw io::FormatError(dir.string() + ": not a feature export");
  }
  const auto d = m.at("dim").get<Eigen::Index>();
  const auto nq = m.at("n_query").get<Eigen::Index>();
  const auto ng = m.at("n_gallery").get<Eigen::Index>();
  auto f32 = [&](const char* name, Eigen::Index rows) {
    auto v = io::read_array_file<float>(dir / name, static_cast<std::size_t>(rows * d));
    return Matrix<double>(Eigen::Map<Matrix<float>>(v.data(), rows, d).cast<double>());
  };
  auto i32 = [&](const char* name, Eigen::Index rows) {
    auto v = io::read_array_file<std::int32_t>(dir / name, static_cast<std::size_t>(rows));
    return std::vector<int>(v.begin(), v.end());
  };
  FeatureSplit f;
  f.mode = mode_from_string(m.at("mode").get<std::string>());
  f.query = f32("query.f32", nq);
  f.gallery = f32("gallery.f32", ng);
  f.query_ids = i32("query_ids.i32", nq);
  f.query_cams = i32("query_cams.i32", nq);
  f.gallery_ids = i32("gallery_ids.i32", ng);
  f.gallery_cams = i32("gallery_cams.i32", ng);
  return f;
}

struct TrainResult {
  io::fs::path run_dir;
  std::vector<MetricsRow> log;
  std::vector<EpochSummary> epochs;
  double seconds = 0;
};

inline std::string format_breakdown(const LossBreakdown& b) {
  std::ostringstream os;
  os << std::setprecision(6);
  const auto& names = LossBreakdown::field_names();
  const auto v = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << names[i] << "=" << v[i];
  return os.str();
}

struct TrainOptions {
  bool write_artifacts = true;
  std::ostream* log = nullptr;
};

/// Trains one configuration. With artifacts on, writes config.json,
/// metrics.csv (one row per step), epochs.csv, summary.json and a checkpoint
/// after every epoch into `run_dir`.
inline TrainResult run_train(const ExperimentConfig& cfg, const io::fs::path& run_dir, TrainOptions opt = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = make_dataset(cfg.synth);
  BdlfModel<double> model(cfg.model_config());
  Trainer<double> trainer(model, cfg.train_config());

  std::ofstream csv;
  if (opt.write_artifacts) {
    io::fs::create_directories(run_dir);
    io::write_text(run_dir / files::config, dump_config(cfg));
    csv.open(run_dir / files::metrics, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + (run_dir / files::metrics).string());
    csv << metrics_csv_header() << '\n';
  }
  const int steps = trainer.steps_per_epoch(ds.data);

  TrainResult result;
  result.run_dir = run_dir;
  result.log = trainer.run(ds.data, [&](const MetricsRow& r) {
    if (!opt.write_artifacts) return;
    csv << metrics_csv_line(r) << '\n';
    if ((r.step + 1) % steps == 0) {
      csv.flush();
      save_checkpoint(run_dir / files::checkpoint, make_checkpoint(cfg, model, trainer, r.epoch + 1));
      if (opt.log) {
        *opt.log << "epoch " << r.epoch << "  total=" << r.losses.total << "  c_B=" << r.c_base
                 << "  c_D=" << r.c_detail << '\n';
      }
    }
  });
  result.epochs = summarize_epochs(result.log);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (opt.write_artifacts) {
    csv.close();
    io::write_text(run_dir / files::epochs, epochs_csv(result.epochs));
    const auto& last = result.log.back();
    Json s{{"final_losses", Json::object()},
           {"final_c_B", last.c_base},
           {"final_c_D", last.c_detail},
           {"steps", result.log.size()},
           {"seconds", result.seconds}};
    const auto v = last.losses.values();
    for (std::size_t i = 0; i < v.size(); ++i) s["final_losses"][LossBreakdown::field_names()[i]] = v[i];
    io::write_text(run_dir / files::summary, s.dump(2) + "\n");
  }
  if (opt.log && !result.log.empty()) {
    const auto& last = result.log.back();
    *opt.log << "final " << format_breakdown(last.losses) << '\n'
             << "final c_B=" << last.c_base << " c_D=" << last.c_detail << '\n';
  }
  return result;
}

/// Model with parameters and EMA shadow restored from a run directory.
struct LoadedRun {
  ExperimentConfig config;
  std::unique_ptr<BdlfModel<double>> model;
  EmaState<double> ema;
};

inline LoadedRun load_run(const io::fs::path& run_dir) {
  const auto path = run_dir / files::checkpoint;
  if (!io::fs::exists(path)) throw io::FormatError("missing checkpoint: " + path.string());
  const auto ck = load_checkpoint(path);
  LoadedRun r;
  r.config = ck.config;
  r.model = std::make_unique<BdlfModel<double>>(ck.config.model_config());
  restore_checkpoint(ck, *r.model);
  r.ema = EmaState<double>(r.model->params(), ck.config.train.ema_decay);
  r.ema.shadow() = ck.ema;
  return r;
}

inline void write_eval_report(const io::fs::path& run_dir, ProtocolMode mode, const EvalReport& rep, bool use_ema) {
  Json j = rep;
  j["mode"] = to_string(mode);
  j["use_ema"] = use_ema;
  io::write_text(run_dir / ("eval_" + to_string(mode) + ".json"), j.dump(2) + "\n");
  std::string csv = "rank,cmc\n";
  char buf[64];
  for (std::size_t k = 0; k < rep.cmc.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", k + 1, rep.cmc[k]);
    csv += buf;
  }
  io::write_text(run_dir / ("cmc_" + to_string(mode) + ".csv"), csv);
}

struct EvalOptions {
  std::optional<ProtocolMode> mode;
  std::optional<bool> use_ema;
  std::optional<io::fs::path> export_features;
};

inline EvalReport run_eval(const io::fs::path& run_dir, const EvalOptions& opt = {}) {
  auto run = load_run(run_dir);
  const auto mode = opt.mode.value_or(run.config.eval.mode);
  const bool use_ema = opt.use_ema.value_or(run.config.eval.use_ema);
  const auto f = extract_split(run.config, *run.model, &run.ema, mode, use_ema);
  if (opt.export_features) save_features(*opt.export_features, f);
  const auto rep = evaluate_split(f, run.config.eval);
  write_eval_report(run_dir, mode, rep, use_ema);
  return rep;
}

struct AblationRow {
  std::string label;
  Toggles toggles;
  int dfe_depth = 6;
  double map = 0, rank1 = 0;
  double c_base = 0, c_detail = 0;  // last-epoch means
  double seconds = 0;
};

/// Component combinations evaluated in the ablation table, baseline first.
inline std::vector<Toggles> ablation_rows() {
  return {
      {false, true, false, false, false},  // BEG only
      {true, false, false, false, false},  // DFE only
      {true, true, false, false, false},
      {true, true, true, false, false},
      {true, true, false, false, true},
      {false, true, true, true, true},
      {true, true, true, false, true},
      {true, true, true, true, true},  // full model
  };
}

inline AblationRow train_and_score(ExperimentConfig cfg, const std::string& label) {
  const auto ds = make_dataset(cfg.synth);
  const auto t0 = std::chrono::steady_clock::now();
  BdlfModel<double> model(cfg.model_config());
  Trainer<double> trainer(model, cfg.train_config());
  const auto log = trainer.run(ds.data);
  const auto epochs = summarize_epochs(log);
  const auto f = extract_split(cfg, model, &trainer.ema(), cfg.eval.mode, cfg.eval.use_ema);
  const auto rep = evaluate_split(f, cfg.eval);
  AblationRow row;
  row.label = label;
  row.toggles = cfg.toggles;
  row.dfe_depth = cfg.dfe_depth;
  row.map = rep.map;
  row.rank1 = rep.rank1();
  row.c_base = epochs.back().c_base;
  row.c_detail = epochs.back().c_detail;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string s = "label,dfe,beg,l_app,l_orth,l_skd,dfe_depth,map,rank1,c_B,c_D,seconds\n";
  char buf[256];
  for (const auto& r : rows) {
    const auto& t = r.toggles;
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.1f\n", r.label.c_str(), t.dfe, t.beg,
                  t.l_app, t.l_orth, t.l_skd, r.dfe_depth, r.map, r.rank1, r.c_base, r.c_detail, r.seconds);
    s += buf;
  }
  return s;
}

struct AblateOptions {
  bool sweep_depth = false;
  std::vector<int> depths{2, 4, 6, 8};
  std::ostream* log = nullptr;
};

/// Every row shares the config's seed, so rows differ only in their toggles
/// (or depth, for the sweep).
inline std::vector<AblationRow> run_ablate(const ExperimentConfig& base, const io::fs::path& out_dir,
                                           const AblateOptions& opt = {}) {
  base.validate();
  io::fs::create_directories(out_dir);
  io::write_text(out_dir / files::config, dump_config(base));
  std::vector<AblationRow> rows;
  for (const auto& t : ablation_rows()) {
    auto cfg = base;
    cfg.toggles = t;
    rows.push_back(train_and_score(cfg, t.label()));
    if (opt.log) *opt.log << ablation_csv({rows.back()});
  }
  io::write_text(out_dir / "ablation.csv", ablation_csv(rows));
  if (opt.sweep_depth) {
    std::vector<AblationRow> sweep;
    for (int k : opt.depths) {
      auto cfg = base;
      cfg.toggles = Toggles{};
      cfg.dfe_depth = k;
      sweep.push_back(train_and_score(cfg, "depth" + std::to_string(k)));
      if (opt.log) *opt.log << ablation_csv({sweep.back()});
    }
    io::write_text(out_dir / "depth_sweep.csv", ablation_csv(sweep));
    rows.insert(rows.end(), sweep.begin(), sweep.end());
  }
  return rows;
}

/// Loss curves and the correlation trajectory from metrics.csv; the
/// embedding scatter needs the checkpoint as well.
inline std::vector<io::fs::path> run_plot(const io::fs::path& run_dir) {
  const auto rows = parse_metrics_csv(io::read_text(run_dir / files::metrics));
  if (rows.empty()) throw io::FormatError((run_dir / files::metrics).string() + ": empty log");
  std::vector<double> x;
  for (const auto& r : rows) x.push_back(r.step);
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(get(r));
    return v;
  };
  std::vector<plot::Series> losses{
      {"total", x, column([](const MetricsRow& r) { return r.losses.total; })},
      {"l_id", x, column([](const MetricsRow& r) { return r.losses.l_id; })},
      {"l_tri", x, column([](const MetricsRow& r) { return r.losses.l_tri; })},
      {"l_DFE", x, column([](const MetricsRow& r) { return r.losses.l_DFE; })},
      {"l_BEG", x, column([](const MetricsRow& r) { return r.losses.l_BEG; })},
      {"l_skd", x, column([](const MetricsRow& r) { return r.losses.l_skd; })},
  };
  std::vector<plot::Series> corr{
      {"c_B", x, column([](const MetricsRow& r) { return r.c_base; })},
      {"c_D", x, column([](const MetricsRow& r) { return r.c_detail; })},
  };
  std::vector<io::fs::path> written{run_dir / "loss_curve.svg", run_dir / "correlation.svg"};
  io::write_text(written[0], plot::line_chart(losses, "training losses", "step", "loss"));
  io::write_text(written[1], plot::line_chart(corr, "cross-modality correlation", "step", "pearson"));

  if (io::fs::exists(run_dir / files::checkpoint)) {
    auto run = load_run(run_dir);
    const auto f = extract_split(run.config, *run.model, &run.ema, ProtocolMode::vis_to_ir, run.config.eval.use_ema);
    Matrix<double> all(f.query.rows() + f.gallery.rows(), f.query.cols());
    all << f.query, f.gallery;
    std::vector<int> ids = f.query_ids;
    ids.insert(ids.end(), f.gallery_ids.begin(), f.gallery_ids.end());
    std::vector<int> modality(static_cast<std::size_t>(f.query.rows()), 0);
    modality.resize(static_cast<std::size_t>(all.rows()), 1);
    const auto proj = plot::pca_2d(all);
    auto sc = plot::scatter(proj.coords, ids, modality, {"visible", "infrared"}, "embedding (PCA)");
    sc.legend["explained_variance"] = proj.explained;
    written.push_back(run_dir / "embedding_scatter.svg");
    written.push_back(run_dir / "scatter_legend.json");
    io::write_text(written[2], sc.svg);
    io::write_text(written[3], sc.legend.dump(2) + "\n");
  }
  return written;
}

struct GradcheckSummary {
  bool pass = true;
  double seconds = 0;
  std::vector<oracle::GradCheckReport> reports;
};

inline GradcheckSummary run_gradcheck(const oracle::GradCheckOptions& opt, std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckSummary s;
  for (const auto& c : gradcheck::all_cases()) {
    s.reports.push_back(c.run(opt));
    if (!s.reports.back().pass) s.pass = false;
    if (log) *log << s.reports.back();
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

}  // namespace bdlf
