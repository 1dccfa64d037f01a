#include <gtest/gtest.h>

#include "shapguard/io.hpp"
#include "shapguard/pipeline.hpp"
#include "support.hpp"

using namespace shapguard;
using nlohmann::json;

namespace {

PipelineConfig small_config(uint64_t seed = 42) {
  json j = {{"seed", seed},
            {"data", {{"synthetic", {{"n_per_class", 300}, {"m", 12}}}}},
            {"classifier", {{"train", {{"epochs", 20}, {"batch_size", 64}}}}},
            {"attacks", {{"pgd", {{"steps", 10}, {"alpha", 0.02}}}}},
            {"attribution", {{"background_size", 30}}},
            {"detector", {{"latent", 4}, {"train", {{"epochs", 30}, {"batch_size", 32}}}}}};
  return config_from_json(j);
}

}  // namespace

TEST(Config, DefaultsAndDerivedSeeds) {
  const auto a = default_config(42);
  const auto b = default_config(43);
  EXPECT_EQ(a.classifier_hidden, (std::vector<size_t>{64, 32}));
  EXPECT_EQ(a.classifier_train.epochs, 50u);
  EXPECT_EQ(a.detector_train.epochs, 100u);
  EXPECT_EQ(a.attacks.size(), 3u);
  EXPECT_NE(a.split.seed, b.split.seed);
  EXPECT_NE(a.classifier_init_seed, a.detector_init_seed);
  const auto parsed = config_from_json(json::object());
  EXPECT_EQ(config_to_json(parsed), config_to_json(default_config(42)));
}

TEST(Config, RoundTripAndSeedOverride) {
  const auto cfg = small_config();
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(cfg))), config_to_json(cfg));
  json j = config_to_json(cfg);
  j["split"]["seed"] = 999;
  EXPECT_EQ(config_from_json(j).split.seed, 999u);
  const auto over = config_from_json(j, 7);
  EXPECT_EQ(over.seed, 7u);
  EXPECT_EQ(over.split.seed, default_config(7).split.seed);
  EXPECT_EQ(over.data.synthetic.n_per_class, 300u);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"split", {{"train", 0.9}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"attacks", {{"fgsm", {{"epsilon", -1}}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"attacks", {{"enabled", {"cw"}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"detector", {{"calibration", {{"method", "sigma"}, {"parameter", 4}}}}}}),
               ConfigError);
  EXPECT_THROW(config_from_json(json{{"data", {{"source", "csv"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"classifier", {{"train", {{"epochs", 0}}}}}}), ConfigError);
  EXPECT_THROW(load_config("/definitely/missing.json"), ConfigError);
}

TEST(Config, AttackSubset) {
  const auto cfg = config_from_json(json{{"attacks", {{"enabled", {"pgd"}}}}});
  EXPECT_EQ(cfg.attack_kinds(), (std::vector<AttackKind>{AttackKind::kPgd}));
  EXPECT_THROW(cfg.attack(AttackKind::kFgsm), ConfigError);
}

TEST(Ingest, SyntheticFilesAndDeterministicDigests) {
  const auto dir = testkit::scratch_dir("ingest");
  json j = {{"data", {{"synthetic", {{"n_per_class", 1000}}}}}};
  const auto cfg = config_from_json(j);
  RunManifest m1(dir / "a");
  const auto s = cmd_ingest(cfg, m1);
  EXPECT_EQ(s.train + s.val + s.test, 2000u);
  for (const char* f : {"data/train.csv", "data/val.csv", "data/test.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / f));
    EXPECT_EQ(m1.artifacts().count(f), 1u);
  }
  RunManifest m2(dir / "b");
  cmd_ingest(cfg, m2);
  for (const char* f : {"data/train.csv", "data/val.csv", "data/test.csv", "data/scaler.json"}) {
    EXPECT_EQ(m1.artifacts().at(f), m2.artifacts().at(f));
  }
  EXPECT_TRUE(m1.verify().empty());
}

TEST(Ingest, MissingCsvIsStageError) {
  const auto dir = testkit::scratch_dir("ingest_missing");
  const auto cfg = config_from_json(json{{"data", {{"source", "csv"}, {"csv", {{"paths", {"/no/such.csv"}}}}}}});
  RunManifest m(dir);
  try {
    cmd_ingest(cfg, m);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("ingest: file not found", 0), 0u) << e.what();
  }
}

TEST(Ingest, CsvSourceMergesFiles) {
  const auto dir = testkit::scratch_dir("ingest_csv");
  std::string a = "x,y,label\n", b = "x,y,label\n";
  for (int i = 0; i < 30; ++i) {
    a += std::to_string(i) + "," + std::to_string(2 * i) + ",BenignTraffic\n";
    b += std::to_string(i + 100) + "," + std::to_string(i) + ",Mirai\n";
  }
  b += "nan,1,Mirai\n";
  io::write_file(dir / "a.csv", a);
  io::write_file(dir / "b.csv", b);
  json j = {{"data",
             {{"source", "csv"},
              {"csv", {{"paths", {(dir / "a.csv").string(), (dir / "b.csv").string()}}, {"schema", {"x", "y"}}}}}}};
  RunManifest m(dir / "out");
  const auto s = cmd_ingest(config_from_json(j), m);
  EXPECT_EQ(s.rows_read, 61u);
  EXPECT_EQ(s.rows_dropped, 1u);
  EXPECT_EQ(s.train + s.val + s.test, 60u);
}

TEST(Stages, OutOfOrderFailsCleanly) {
  const auto dir = testkit::scratch_dir("out_of_order");
  RunManifest m(dir);
  EXPECT_THROW(cmd_train_nids(small_config(), m), StageError);
  EXPECT_THROW(cmd_evaluate(small_config(), m), StageError);
}

TEST(RunAll, ProducesConsistentBundle) {
  const auto dir = testkit::scratch_dir("run_all");
  const auto cfg = small_config();
  const auto summary = cmd_run_all(cfg, dir);
  EXPECT_TRUE(summary.invariant_failures.empty());
  ASSERT_EQ(summary.attacks.size(), 3u);
  for (const auto& ev : summary.attacks) {
    EXPECT_NEAR(ev.robustness.aa + ev.robustness.asr, 1.0, 1e-12);
    EXPECT_TRUE(ev.metrics.roc_auc.has_value());
  }
  EXPECT_EQ(summary.ranks.conditions, (std::vector<std::string>{"clean", "fgsm", "pgd", "deepfool"}));
  for (const char* f : {"manifest.json", "resolved_config.json", "nids/model.json", "detector/detector.json",
                        "fingerprints/clean_test.csv", "reports/metrics.csv", "reports/rank_table.csv",
                        "reports/summary.json", "reports/error_distribution_pgd.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const json manifest = json::parse(io::read_file(dir / "manifest.json"));
  for (const auto& [rel, digest] : manifest.at("artifacts").items()) {
    EXPECT_EQ(io::sha256_file(dir / rel), digest.get<std::string>()) << rel;
  }
  // Resolved config reloads to the same configuration.
  EXPECT_EQ(config_to_json(load_config(dir / "resolved_config.json")), config_to_json(cfg));
}

TEST(Stages, SeparateInvocationsMatchRunAll) {
  const auto dir = testkit::scratch_dir("staged");
  const auto cfg = small_config();
  cmd_run_all(cfg, dir / "whole");
  RunManifest m(dir / "parts");
  m.set_config(cfg);
  cmd_ingest(cfg, m);
  cmd_train_nids(cfg, m);
  for (auto k : cfg.attack_kinds()) cmd_attack(cfg, k, m);
  cmd_fingerprint(cfg, "clean", m);
  for (auto k : cfg.attack_kinds()) cmd_fingerprint(cfg, to_string(k), m);
  cmd_train_detector(cfg, m);
  cmd_evaluate(cfg, m);
  for (const char* f : {"fingerprints/pgd.csv", "detector/detector.json", "reports/summary.json"}) {
    EXPECT_EQ(io::sha256_file(dir / "whole" / f), io::sha256_file(dir / "parts" / f)) << f;
  }
}

TEST(Detect, ScoresRawFlows) {
  const auto dir = testkit::scratch_dir("detect");
  const auto cfg = small_config();
  cmd_run_all(cfg, dir);
  SynthSpec spec = cfg.data.synthetic;
  spec.n_per_class = 5;
  save_dataset_csv(synth_generate(spec), dir / "flows.csv");
  RunManifest m(dir);
  m.load_existing();
  const auto s = cmd_detect(cfg, dir / "flows.csv", m);
  EXPECT_EQ(s.rows, 10u);
  EXPECT_TRUE(std::filesystem::exists(dir / "detect" / "flows.csv"));
}
