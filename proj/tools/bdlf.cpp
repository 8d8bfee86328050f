#include "bdlf/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

using namespace bdlf;

ExperimentConfig load_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

std::optional<bool> parse_bool_flag(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "1" || s == "true" || s == "on") return true;
  if (s == "0" || s == "false" || s == "off") return false;
  throw CLI::ValidationError("--use-ema", "expected true/false, got '" + s + "'");
}

std::vector<ProtocolMode> modes_from(const std::string& s) {
  if (s.empty()) return {};
  if (s == "both") return {ProtocolMode::vis_to_ir, ProtocolMode::ir_to_vis};
  return {mode_from_string(s)};
}

void print_report(const std::string& title, const EvalReport& r) {
  std::cout << title << ": rank1=" << r.rank1() << " rank5=" << (r.cmc.size() >= 5 ? r.cmc[4] : r.rank1())
            << " rank10=" << (r.cmc.size() >= 10 ? r.cmc[9] : r.cmc.back()) << " mAP=" << r.map
            << " queries=" << r.n_queries << " excluded=" << r.n_excluded << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BDLF cross-modality re-identification on synthetic data"};
  app.require_subcommand(1);

  std::string config_path, run_dir, mode, use_ema, features_out, features_in;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--config", config_path, "JSON config (defaults when omitted)");
  train->add_option("--run-dir", run_dir, "output directory (default: <output root>/<toggles>_s<seed>)");
  train->add_option("--seed", seed, "override the master seed");

  auto* eval = app.add_subcommand("eval", "evaluate a trained run");
  eval->add_option("--run-dir", run_dir, "directory written by train");
  eval->add_option("--mode", mode, "vis_to_ir, ir_to_vis or both (default: config)");
  eval->add_option("--use-ema", use_ema, "true/false (default: config)");
  eval->add_option("--features", features_out, "also export query/gallery features here");
  eval->add_option("--from-features", features_in, "score an exported feature directory instead");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every registered gradient");
  bool full = false;
  double tol = 1e-4, h = 1e-5;
  grad->add_flag("--full", full, "probe every coordinate instead of at most 64 per block");
  grad->add_option("--tolerance", tol, "relative error bound");
  grad->add_option("--step", h, "central difference step");

  auto* ablate = app.add_subcommand("ablate", "train the component ablation rows with a shared seed");
  bool sweep_k = false;
  ablate->add_option("--config", config_path, "JSON config (defaults when omitted)");
  ablate->add_option("--run-dir", run_dir, "output directory (default: <output root>/ablation_s<seed>)");
  ablate->add_option("--seed", seed, "override the master seed");
  ablate->add_flag("--sweep-k", sweep_k, "also sweep the coupling depth over 2, 4, 6, 8");

  auto* plot = app.add_subcommand("plot", "loss, correlation and embedding plots for a run");
  plot->add_option("--run-dir", run_dir, "directory written by train")->required();

  auto* dump = app.add_subcommand("config", "print a config profile as JSON");
  std::string profile = "desk";
  dump->add_option("--profile", profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));

  CLI11_PARSE(app, argc, argv);
  seed_given = train->count("--seed") + ablate->count("--seed") > 0;

  try {
    if (*train) {
      auto cfg = load_or_default(config_path);
      if (seed_given) cfg.seed = seed;
      cfg.validate();
      const io::fs::path dir =
          run_dir.empty() ? output_root(cfg) / (cfg.toggles.label() + "_s" + std::to_string(cfg.seed)) : io::fs::path(run_dir);
      auto res = run_train(cfg, dir, {true, &std::cout});
      std::cout << "run dir: " << dir.string() << "  (" << res.log.size() << " steps, " << res.seconds << " s)\n";
      return 0;
    }
    if (*eval) {
      if (!features_in.empty()) {
        const auto f = load_features(features_in);
        ExperimentConfig defaults;
        print_report(to_string(f.mode), evaluate_split(f, defaults.eval));
        return 0;
      }
      if (run_dir.empty()) throw CLI::RequiredError("--run-dir");
      EvalOptions opt;
      opt.use_ema = parse_bool_flag(use_ema);
      auto modes = modes_from(mode);
      if (modes.empty()) modes.push_back(load_run(run_dir).config.eval.mode);
      for (auto m : modes) {
        opt.mode = m;
        if (!features_out.empty()) opt.export_features = io::fs::path(features_out) / to_string(m);
        print_report(to_string(m), run_eval(run_dir, opt));
      }
      return 0;
    }
    if (*grad) {
      oracle::GradCheckOptions opt;
      opt.tolerance = tol;
      opt.h = h;
      if (full) opt.max_coords = 0;
      const auto s = run_gradcheck(opt, &std::cout);
      std::cout << (s.pass ? "all gradient checks passed" : "GRADIENT CHECK FAILED") << " (" << s.reports.size()
                << " cases, " << s.seconds << " s)\n";
      return s.pass ? 0 : 1;
    }
    if (*ablate) {
      auto cfg = load_or_default(config_path);
      if (seed_given) cfg.seed = seed;
      cfg.validate();
      const io::fs::path dir = run_dir.empty() ? output_root(cfg) / ("ablation_s" + std::to_string(cfg.seed)) : io::fs::path(run_dir);
      AblateOptions opt;
      opt.sweep_depth = sweep_k;
      opt.log = &std::cout;
      std::cout << "label,dfe,beg,l_app,l_orth,l_skd,dfe_depth,map,rank1,c_B,c_D,seconds\n";
      run_ablate(cfg, dir, opt);
      std::cout << "written to " << dir.string() << '\n';
      return 0;
    }
    if (*plot) {
      for (const auto& p : run_plot(run_dir)) std::cout << p.string() << '\n';
      return 0;
    }
    if (*dump) {
      ExperimentConfig c;
      if (profile == "paper") c.train = TrainConfig::paper_profile();
      std::cout << dump_config(c);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
