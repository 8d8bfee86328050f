#include "bdlf/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

namespace {

using namespace bdlf;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bdlf_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string field_of(const ConfigError& e) { return e.what(); }

// ---------------------------------------------------------------- config

TEST(Config, RoundTrip) {
  auto c = ExperimentConfig::tiny();
  c.seed = 42;
  c.eval.metric = Metric::cosine;
  c.toggles.l_skd = false;
  const auto back = parse_config(dump_config(c));
  EXPECT_EQ(dump_config(back), dump_config(c));
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.eval.metric, Metric::cosine);
  EXPECT_FALSE(back.toggles.l_skd);
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto c = parse_config(R"({"seed": 3, "train": {"total_epochs": 5}})");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.train.total_epochs, 5);
  EXPECT_EQ(c.train.p_ids, TrainConfig{}.p_ids);
}

TEST(Config, UnknownKeyNamesField) {
  try {
    parse_config(R"({"train": {"epochs": 5}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(field_of(e).find("train.epochs"), std::string::npos) << e.what();
  }
}

TEST(Config, WrongTypeNamesField) {
  try {
    parse_config(R"({"skd": {"gamma": "big"}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(field_of(e).find("skd.gamma"), std::string::npos) << e.what();
  }
}

TEST(Config, CrossFieldChecks) {
  auto c = ExperimentConfig::tiny();
  c.train.p_ids = 9;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ExperimentConfig::tiny();
  c.backbone.input_shape = ObservationShape::flat(32);
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eval": {"mode": "sideways"}})"), ConfigError);
}

TEST(Config, ShippedProfilesParse) {
  for (const char* name : {"desk.json", "paper_sysu.json", "tiny.json"}) {
    EXPECT_NO_THROW(load_config(fs::path(BDLF_SOURCE_DIR) / "configs" / name)) << name;
  }
}

TEST(Config, MasterSeedDrivesModelAndSampler) {
  auto c = ExperimentConfig::tiny();
  c.seed = 11;
  c.train.seed = 99;
  EXPECT_EQ(c.model_config().init_seed, 11u);
  EXPECT_EQ(c.train_config().seed, 11u);
  EXPECT_EQ(c.model_config().n_classes, c.synth.n_identities);
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripRestoresEverything) {
  const auto dir = scratch("ckpt");
  fs::create_directories(dir);
  const auto cfg = ExperimentConfig::tiny();
  const auto ds = make_dataset(cfg.synth);
  BdlfModel<double> model(cfg.model_config());
  Trainer<double> trainer(model, cfg.train_config());
  Rng rng(2);
  trainer.step(sample_pk_batch(ds.data, 4, 2, rng), 0.05);
  save_checkpoint(dir / "c.bin", make_checkpoint(cfg, model, trainer, 1));

  const auto ck = load_checkpoint(dir / "c.bin");
  BdlfModel<double> other(ck.config.model_config());
  Trainer<double> other_trainer(other, ck.config.train_config());
  restore_checkpoint(ck, other, &other_trainer);
  EXPECT_EQ(other.params().snapshot(), model.params().snapshot());
  EXPECT_EQ(other_trainer.ema().shadow(), trainer.ema().shadow());
  EXPECT_EQ(other_trainer.velocity(), trainer.velocity());
  EXPECT_EQ(other_trainer.global_step(), 1);
  EXPECT_EQ(ck.epochs_done, 1);
  // the sampler continues where it left off
  EXPECT_EQ(sample_pk_batch(ds.data, 4, 2, other_trainer.rng()).labels,
            sample_pk_batch(ds.data, 4, 2, trainer.rng()).labels);
  fs::remove_all(dir);
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto dir = scratch("ckpt_bad");
  fs::create_directories(dir);
  io::write_text(dir / "magic.bin", "NOTACKPT and some more bytes");
  EXPECT_THROW(load_checkpoint(dir / "magic.bin"), io::FormatError);
  EXPECT_THROW(load_checkpoint(dir / "absent.bin"), io::FormatError);

  const auto cfg = ExperimentConfig::tiny();
  BdlfModel<double> model(cfg.model_config());
  Trainer<double> trainer(model, cfg.train_config());
  save_checkpoint(dir / "ok.bin", make_checkpoint(cfg, model, trainer, 0));
  auto bytes = io::read_text(dir / "ok.bin");
  io::write_text(dir / "trailing.bin", bytes + "x");
  EXPECT_THROW(load_checkpoint(dir / "trailing.bin"), io::FormatError);
  io::write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), io::FormatError);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------- pipeline

class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("tiny_run"));
    run_train(ExperimentConfig::tiny(), *dir_);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }
  static fs::path* dir_;
};
fs::path* TinyRun::dir_ = nullptr;

TEST_F(TinyRun, ArtifactsWritten) {
  for (const char* f : {files::config, files::metrics, files::epochs, files::checkpoint, files::summary}) {
    EXPECT_TRUE(fs::exists(*dir_ / f)) << f;
  }
  const auto rows = parse_metrics_csv(io::read_text(*dir_ / files::metrics));
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& r : rows) EXPECT_LE(r.losses.composition_error(), 1e-6);
  EXPECT_EQ(load_checkpoint(*dir_ / files::checkpoint).epochs_done, 3);
}

TEST_F(TinyRun, SecondRunSameCsv) {
  const auto again = scratch("tiny_again");
  run_train(ExperimentConfig::tiny(), again);
  EXPECT_EQ(io::read_text(again / files::metrics), io::read_text(*dir_ / files::metrics));
  EXPECT_EQ(io::read_text(again / files::epochs), io::read_text(*dir_ / files::epochs));
  fs::remove_all(again);
}

TEST_F(TinyRun, EvalBothModes) {
  for (auto mode : {ProtocolMode::vis_to_ir, ProtocolMode::ir_to_vis}) {
    EvalOptions opt;
    opt.mode = mode;
    const auto r = run_eval(*dir_, opt);
    EXPECT_EQ(r.n_queries, 6 * 4);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
    EXPECT_GE(r.rank1(), 0.0);
    EXPECT_LE(r.rank1(), 1.0);
    EXPECT_TRUE(fs::exists(*dir_ / ("eval_" + to_string(mode) + ".json")));
  }
}

TEST_F(TinyRun, EmaAndLiveDiffer) {
  EvalOptions live, ema;
  live.use_ema = false;
  ema.use_ema = true;
  const auto a = run_eval(*dir_, live), b = run_eval(*dir_, ema);
  EXPECT_NE(a.ap, b.ap);
}

TEST_F(TinyRun, FeatureExportReloads) {
  const auto out = scratch("features");
  EvalOptions opt;
  opt.export_features = out;
  const auto direct = run_eval(*dir_, opt);
  const auto f = load_features(out);
  const auto again = evaluate_split(f, ExperimentConfig::tiny().eval);
  EXPECT_EQ(f.query.rows(), 24);
  EXPECT_EQ(again.n_queries, direct.n_queries);
  EXPECT_NEAR(again.map, direct.map, 1e-4);  // features are stored as f32
  io::write_text(out / "manifest.json", R"({"format": "other", "version": 1})");
  EXPECT_THROW(load_features(out), io::FormatError);
  fs::remove_all(out);
}

TEST_F(TinyRun, PlotsDeterministicWithLegend) {
  const auto first = run_plot(*dir_);
  ASSERT_EQ(first.size(), 4u);
  std::vector<std::string> text;
  for (const auto& p : first) text.push_back(io::read_text(p));
  const auto second = run_plot(*dir_);
  for (std::size_t i = 0; i < second.size(); ++i) EXPECT_EQ(io::read_text(second[i]), text[i]) << second[i];
  const auto legend = Json::parse(text[3]);
  EXPECT_TRUE(legend.contains("modality_markers"));
  EXPECT_TRUE(legend.contains("identity_colors"));
  EXPECT_EQ(legend["identity_colors"].size(), 6u);
  EXPECT_EQ(legend["n_points"].get<int>(), 48);
  EXPECT_NE(text[0].find("<svg"), std::string::npos);
}

TEST(Pipeline, MissingCheckpoint) {
  const auto dir = scratch("empty_run");
  fs::create_directories(dir);
  EXPECT_THROW(run_eval(dir), io::FormatError);
  EXPECT_THROW(run_plot(dir), std::exception);
  fs::remove_all(dir);
}

TEST(Pipeline, AblationOrder) {
  const auto rows = ablation_rows();
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows.front().label(), "BEG");
  EXPECT_EQ(rows.back(), Toggles{});
  EXPECT_EQ(rows[1].label(), "DFE");
}

TEST(Pipeline, EpochSummaryAverages) {
  std::vector<MetricsRow> log(4);
  for (int i = 0; i < 4; ++i) {
    log[static_cast<std::size_t>(i)].epoch = i / 2;
    log[static_cast<std::size_t>(i)].step = i;
    log[static_cast<std::size_t>(i)].c_base = i;
    log[static_cast<std::size_t>(i)].losses.total = 2.0 * i;
  }
  const auto e = summarize_epochs(log);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_DOUBLE_EQ(e[0].c_base, 0.5);
  EXPECT_DOUBLE_EQ(e[1].c_base, 2.5);
  EXPECT_DOUBLE_EQ(e[1].losses.total, 5.0);
}

// ---------------------------------------------------------------- executable

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BDLF_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Executable, ExitCodes) {
  const auto dir = scratch("exe");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("config --profile paper"), 0);
  EXPECT_NE(run_cli(""), 0);
  io::write_text(dir / "bad.json", R"({"train": {"momentum": 2}})");
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string() + " --run-dir " + (dir / "r").string()), 2);
  EXPECT_EQ(run_cli("eval --run-dir " + (dir / "nothing").string()), 1);
  fs::remove_all(dir);
}

TEST(Executable, TrainThenEval) {
  const auto dir = scratch("exe_train");
  EXPECT_EQ(run_cli("train --config " + (fs::path(BDLF_SOURCE_DIR) / "configs" / "tiny.json").string() +
                    " --run-dir " + dir.string() + " --seed 5"),
            0);
  EXPECT_EQ(load_checkpoint(dir / files::checkpoint).config.seed, 5u);
  EXPECT_EQ(run_cli("eval --mode both --run-dir " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "eval_ir_to_vis.json"));
  fs::remove_all(dir);
}

}  // namespace
