#include "shapguard/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <set>

#include "shapguard/attribution.hpp"
#include "shapguard/io.hpp"

namespace shapguard {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Offsets from the master seed for each consumer of randomness.
enum SeedOffset : uint64_t {
  kSeedSynthetic = 0,
  kSeedSplit = 1,
  kSeedClassifierInit = 2,
  kSeedClassifierTrain = 3,
  kSeedAttack = 4,  // + attack index
  kSeedBackground = 7,
  kSeedDetectorInit = 8,
  kSeedDetectorTrain = 9,
};

const AttackKind kAllAttacks[] = {AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kDeepFool};

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

void strip_seeds(json& j) {
  if (j.is_object()) {
    for (const char* key : {"seed", "init_seed"}) j.erase(key);
    for (auto& [key, value] : j.items()) strip_seeds(value);
  }
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg, const std::string& where) {
  check_keys(j, {"epochs", "batch_size", "learning_rate", "optimizer", "beta1", "beta2", "epsilon",
                 "seed", "shuffle"},
             where);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  if (j.contains("optimizer") && j.at("optimizer") != "adam") {
    throw ConfigError(where + ": only the adam optimizer is supported");
  }
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.epsilon = j.value("epsilon", cfg.epsilon);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.shuffle = j.value("shuffle", cfg.shuffle);
  cfg.validate();
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}, {"learning_rate", cfg.learning_rate},
          {"optimizer", "adam"},  {"beta1", cfg.beta1},           {"beta2", cfg.beta2},
          {"epsilon", cfg.epsilon}, {"seed", cfg.seed},           {"shuffle", cfg.shuffle},
          {"loss", to_string(cfg.loss)}};
}

std::optional<int> class_of(RowFilter f) {
  return f == RowFilter::kMaliciousOnly ? std::optional<int>(1) : std::nullopt;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  size_t ok = 0;
  for (size_t i = 0; i < truth.size(); ++i) ok += predicted[i] == truth[i];
  return truth.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(truth.size());
}

std::string loss_history_csv(const std::vector<double>& history) {
  std::string out = "epoch,loss\n";
  for (size_t e = 0; e < history.size(); ++e) {
    out += std::to_string(e + 1) + "," + io::format_double(history[e]) + "\n";
  }
  return out;
}

std::string matrix_csv(const Matrix& m, const FeatureSchema& schema) {
  std::string out;
  for (size_t j = 0; j < schema.size(); ++j) out += (j ? "," : "") + schema.name(j);
  out += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? "," : "") + io::format_double(m(i, j));
    out += "\n";
  }
  return out;
}

// Runs a stage body with timing; foreign exceptions become StageErrors.
template <typename F>
auto run_stage(const std::string& stage, RunManifest& manifest, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      manifest.record_stage(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    } else {
      auto result = body();
      manifest.record_stage(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const InvariantError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

fs::path data_path(const RunManifest& m, const char* name) { return m.out_dir() / "data" / name; }

FlowDataset load_split(const RunManifest& m, const char* name) {
  const fs::path p = data_path(m, name);
  if (!fs::exists(p)) throw IoError("missing ingest artifact " + p.string() + " (run ingest first)");
  return load_dataset_csv(p);
}

MlpModel load_nids(const RunManifest& m) {
  const fs::path p = m.out_dir() / "nids" / "model.json";
  if (!fs::exists(p)) throw IoError("missing classifier " + p.string() + " (run train-nids first)");
  return load_model(p);
}

std::vector<AttributionFingerprint> load_fps(const RunManifest& m, const std::string& name) {
  const fs::path p = m.out_dir() / "fingerprints" / (name + ".csv");
  if (!fs::exists(p)) throw IoError("missing fingerprints " + p.string() + " (run fingerprint first)");
  return load_fingerprints(p);
}


}  // namespace

InvariantError::InvariantError(const std::string& stage, std::vector<std::string> failures)
    : Error(stage + ": " + std::to_string(failures.size()) + " invariant check(s) failed" +
            (failures.empty() ? "" : " (first: " + failures.front() + ")")),
      failures_(std::move(failures)) {}

const AttackConfig& PipelineConfig::attack(AttackKind kind) const {
  for (const auto& a : attacks) {
    if (a.kind == kind) return a;
  }
  throw ConfigError("attack '" + to_string(kind) + "' is not configured");
}

std::vector<AttackKind> PipelineConfig::attack_kinds() const {
  std::vector<AttackKind> kinds;
  for (const auto& a : attacks) kinds.push_back(a.kind);
  return kinds;
}

PipelineConfig default_config(uint64_t seed) {
  PipelineConfig cfg;
  cfg.seed = seed;
  cfg.data.synthetic.seed = seed + kSeedSynthetic;
  cfg.split.seed = seed + kSeedSplit;
  cfg.classifier_init_seed = seed + kSeedClassifierInit;
  cfg.classifier_train.seed = seed + kSeedClassifierTrain;
  cfg.classifier_train.loss = LossKind::kBce;
  for (size_t k = 0; k < 3; ++k) {
    AttackConfig a = AttackConfig::defaults(kAllAttacks[k]);
    a.seed = seed + kSeedAttack + k;
    cfg.attacks.push_back(a);
  }
  cfg.background_seed = seed + kSeedBackground;
  cfg.detector_init_seed = seed + kSeedDetectorInit;
  cfg.detector_train.epochs = 100;
  cfg.detector_train.loss = LossKind::kMse;
  cfg.detector_train.seed = seed + kSeedDetectorTrain;
  return cfg;
}

PipelineConfig config_from_json(const json& input, std::optional<uint64_t> seed_override) {
  try {
    json j = input;
    if (seed_override) strip_seeds(j);
    check_keys(j, {"seed", "data", "split", "classifier", "attacks", "attribution", "detector",
                   "evaluation"},
               "config");
    PipelineConfig cfg = default_config(seed_override.value_or(j.value("seed", uint64_t{42})));

    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, {"source", "synthetic", "csv"}, "data");
      const std::string source = d.value("source", "synthetic");
      if (source == "synthetic") {
        cfg.data.kind = DataSourceConfig::Kind::kSynthetic;
      } else if (source == "csv") {
        cfg.data.kind = DataSourceConfig::Kind::kCsv;
      } else {
        throw ConfigError("data.source must be 'synthetic' or 'csv'");
      }
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        check_keys(s, {"n_per_class", "m", "class_separation", "noise", "latent_factors",
                       "factor_scale", "seed"},
                   "data.synthetic");
        auto& sp = cfg.data.synthetic;
        sp.n_per_class = s.value("n_per_class", sp.n_per_class);
        sp.m = s.value("m", sp.m);
        sp.class_separation = s.value("class_separation", sp.class_separation);
        sp.noise = s.value("noise", sp.noise);
        sp.latent_factors = s.value("latent_factors", sp.latent_factors);
        sp.factor_scale = s.value("factor_scale", sp.factor_scale);
        sp.seed = s.value("seed", sp.seed);
      }
      if (d.contains("csv")) {
        const json& c = d.at("csv");
        check_keys(c, {"paths", "label_column", "benign_labels", "schema"}, "data.csv");
        cfg.data.csv_paths = c.value("paths", std::vector<std::string>{});
        cfg.data.csv.label_column = c.value("label_column", cfg.data.csv.label_column);
        if (c.contains("benign_labels")) {
          const auto labels = c.at("benign_labels").get<std::vector<std::string>>();
          cfg.data.csv.benign_labels = {labels.begin(), labels.end()};
        }
        cfg.data.schema = c.value("schema", std::vector<std::string>{});
      }
      if (cfg.data.kind == DataSourceConfig::Kind::kCsv && cfg.data.csv_paths.empty()) {
        throw ConfigError("data.csv.paths must list at least one file");
      }
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      check_keys(s, {"train", "val", "test", "seed"}, "split");
      cfg.split.train_frac = s.value("train", cfg.split.train_frac);
      cfg.split.val_frac = s.value("val", cfg.split.val_frac);
      cfg.split.test_frac = s.value("test", cfg.split.test_frac);
      cfg.split.seed = s.value("seed", cfg.split.seed);
    }
    cfg.split.validate();
    if (j.contains("classifier")) {
      const json& c = j.at("classifier");
      check_keys(c, {"hidden", "init_seed", "train"}, "classifier");
      cfg.classifier_hidden = c.value("hidden", cfg.classifier_hidden);
      cfg.classifier_init_seed = c.value("init_seed", cfg.classifier_init_seed);
      if (c.contains("train")) {
        cfg.classifier_train = train_config_from_json(c.at("train"), cfg.classifier_train, "classifier.train");
      }
    }
    if (j.contains("attacks")) {
      const json& a = j.at("attacks");
      check_keys(a, {"filter", "enabled", "fgsm", "pgd", "deepfool"}, "attacks");
      cfg.attack_filter = row_filter_from_string(a.value("filter", to_string(cfg.attack_filter)));
      std::vector<AttackConfig> attacks;
      std::vector<std::string> enabled = a.value("enabled", std::vector<std::string>{"fgsm", "pgd", "deepfool"});
      for (size_t k = 0; k < 3; ++k) {
        const std::string name = to_string(kAllAttacks[k]);
        if (std::find(enabled.begin(), enabled.end(), name) == enabled.end()) continue;
        AttackConfig ac = cfg.attacks[k];
        if (a.contains(name)) {
          json spec = a.at(name);
          check_keys(spec, {"epsilon", "alpha", "steps", "max_iter", "overshoot", "random_start", "seed"},
                     "attacks." + name);
          spec["kind"] = name;
          if (!spec.contains("seed")) spec["seed"] = ac.seed;
          ac = attack_config_from_json(spec);
        }
        attacks.push_back(ac);
      }
      for (const auto& e : enabled) attack_kind_from_string(e);
      if (attacks.empty()) throw ConfigError("attacks.enabled must name at least one attack");
      cfg.attacks = attacks;
    }
    if (j.contains("attribution")) {
      const json& a = j.at("attribution");
      check_keys(a, {"background_size", "seed"}, "attribution");
      cfg.background_size = a.value("background_size", cfg.background_size);
      cfg.background_seed = a.value("seed", cfg.background_seed);
      if (cfg.background_size < 1) throw ConfigError("attribution.background_size must be >= 1");
    }
    if (j.contains("detector")) {
      const json& d = j.at("detector");
      check_keys(d, {"hidden", "latent", "init_seed", "train", "calibration", "class_filter"}, "detector");
      cfg.detector_shape.hidden = d.value("hidden", cfg.detector_shape.hidden);
      cfg.detector_shape.latent = d.value("latent", cfg.detector_shape.latent);
      cfg.detector_init_seed = d.value("init_seed", cfg.detector_init_seed);
      if (d.contains("train")) {
        cfg.detector_train = train_config_from_json(d.at("train"), cfg.detector_train, "detector.train");
      }
      if (d.contains("calibration")) {
        const json& c = d.at("calibration");
        check_keys(c, {"method", "parameter"}, "detector.calibration");
        cfg.calibration.kind = calibration_kind_from_string(c.value("method", "percentile"));
        cfg.calibration.parameter = c.value("parameter", cfg.calibration.parameter);
      }
      cfg.detector_filter = row_filter_from_string(d.value("class_filter", to_string(cfg.detector_filter)));
    }
    cfg.calibration.validate();
    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      check_keys(e, {"clean_panel", "bins"}, "evaluation");
      cfg.clean_panel = row_filter_from_string(e.value("clean_panel", to_string(cfg.clean_panel)));
      cfg.histogram_bins = e.value("bins", cfg.histogram_bins);
      if (cfg.histogram_bins < 1) throw ConfigError("evaluation.bins must be >= 1");
    }
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  const auto& s = cfg.data.synthetic;
  j["data"] = {{"source", cfg.data.kind == DataSourceConfig::Kind::kSynthetic ? "synthetic" : "csv"},
               {"synthetic",
                {{"n_per_class", s.n_per_class},
                 {"m", s.m},
                 {"class_separation", s.class_separation},
                 {"noise", s.noise},
                 {"latent_factors", s.latent_factors},
                 {"factor_scale", s.factor_scale},
                 {"seed", s.seed}}},
               {"csv",
                {{"paths", cfg.data.csv_paths},
                 {"label_column", cfg.data.csv.label_column},
                 {"benign_labels", std::vector<std::string>(cfg.data.csv.benign_labels.begin(),
                                                            cfg.data.csv.benign_labels.end())},
                 {"schema", cfg.data.schema}}}};
  j["split"] = {{"train", cfg.split.train_frac},
                {"val", cfg.split.val_frac},
                {"test", cfg.split.test_frac},
                {"seed", cfg.split.seed}};
  j["classifier"] = {{"hidden", cfg.classifier_hidden},
                     {"init_seed", cfg.classifier_init_seed},
                     {"train", train_config_to_json(cfg.classifier_train)}};
  json attacks = {{"filter", to_string(cfg.attack_filter)}};
  std::vector<std::string> enabled;
  for (const auto& a : cfg.attacks) {
    json spec = attack_config_to_json(a);
    spec.erase("kind");
    attacks[to_string(a.kind)] = spec;
    enabled.push_back(to_string(a.kind));
  }
  attacks["enabled"] = enabled;
  j["attacks"] = attacks;
  j["attribution"] = {{"background_size", cfg.background_size}, {"seed", cfg.background_seed}};
  j["detector"] = {{"hidden", cfg.detector_shape.hidden},
                   {"latent", cfg.detector_shape.latent},
                   {"init_seed", cfg.detector_init_seed},
                   {"train", train_config_to_json(cfg.detector_train)},
                   {"calibration",
                    {{"method", to_string(cfg.calibration.kind)}, {"parameter", cfg.calibration.parameter}}},
                   {"class_filter", to_string(cfg.detector_filter)}};
  j["evaluation"] = {{"clean_panel", to_string(cfg.clean_panel)}, {"bins", cfg.histogram_bins}};
  // "loss" is implied by the stage, not configurable.
  j["classifier"]["train"].erase("loss");
  j["detector"]["train"].erase("loss");
  return j;
}

PipelineConfig load_config(const fs::path& path, std::optional<uint64_t> seed_override) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, seed_override);
}

// ---------------------------------------------------------------------------
// RunManifest

RunManifest::RunManifest(fs::path out_dir) : out_dir_(std::move(out_dir)) {}

void RunManifest::load_existing() {
  const fs::path p = out_dir_ / "manifest.json";
  if (!fs::exists(p)) return;
  const json j = json::parse(io::read_file(p));
  if (j.contains("artifacts")) {
    for (const auto& [k, v] : j.at("artifacts").items()) artifacts_[k] = v.get<std::string>();
  }
  if (j.contains("stages")) {
    for (const auto& [k, v] : j.at("stages").items()) stage_seconds_[k] = v.at("seconds").get<double>();
  }
}

void RunManifest::set_config(const PipelineConfig& cfg) {
  config_ = config_to_json(cfg);
  write_artifact("resolved_config.json", config_.dump(2) + "\n");
}

void RunManifest::write_artifact(const std::string& relative, std::string_view content) {
  io::write_file(out_dir_ / relative, content);
  artifacts_[relative] = io::sha256_hex(content);
}

void RunManifest::record_stage(const std::string& stage, double seconds) {
  stage_seconds_[stage] = seconds;
}

void RunManifest::save() const {
  json stages = json::object();
  for (const auto& [k, v] : stage_seconds_) stages[k] = {{"seconds", v}};
  json j = {{"tool", "shapguard"},
            {"version", kToolVersion},
            {"config", config_},
            {"stages", stages},
            {"artifacts", artifacts_}};
  io::write_file(out_dir_ / "manifest.json", j.dump(2) + "\n");
}

std::vector<std::string> RunManifest::verify() const {
  std::vector<std::string> bad;
  for (const auto& [rel, digest] : artifacts_) {
    const fs::path p = out_dir_ / rel;
    if (!fs::exists(p) || io::sha256_file(p) != digest) bad.push_back(rel);
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Stages

IngestSummary cmd_ingest(const PipelineConfig& cfg, RunManifest& manifest) {
  return run_stage("ingest", manifest, [&] {
    IngestSummary summary;
    FlowDataset ds;
    if (cfg.data.kind == DataSourceConfig::Kind::kSynthetic) {
      ds = synth_generate(cfg.data.synthetic);
      summary.rows_read = ds.rows();
    } else {
      const FeatureSchema schema =
          cfg.data.schema.empty() ? FeatureSchema::cic_iot2023() : FeatureSchema(cfg.data.schema);
      std::vector<FlowDataset> parts;
      for (const auto& path : cfg.data.csv_paths) {
        if (!fs::exists(path)) throw IoError("file not found: " + path);
        auto loaded = load_csv(path, schema, cfg.data.csv);
        summary.rows_read += loaded.rows_read;
        summary.rows_dropped += loaded.rows_dropped;
        parts.push_back(std::move(loaded.dataset));
      }
      ds.schema = schema;
      Eigen::Index total = 0;
      for (const auto& p : parts) total += p.X.rows();
      ds.X.resize(total, static_cast<Eigen::Index>(schema.size()));
      Eigen::Index row = 0;
      for (const auto& p : parts) {
        ds.X.middleRows(row, p.X.rows()) = p.X;
        row += p.X.rows();
        ds.y.insert(ds.y.end(), p.y.begin(), p.y.end());
      }
    }
    DatasetSplit parts = split(ds, cfg.split);
    const ScalerParams scaler = fit_scaler(parts.train);
    const FlowDataset train = apply_scaler(parts.train, scaler);
    const FlowDataset val = apply_scaler(parts.val, scaler);
    const FlowDataset test = apply_scaler(parts.test, scaler);
    manifest.write_artifact("data/train.csv", dataset_to_csv(train));
    manifest.write_artifact("data/val.csv", dataset_to_csv(val));
    manifest.write_artifact("data/test.csv", dataset_to_csv(test));
    manifest.write_artifact("data/scaler.json", scaler_to_json(ds.schema, scaler).dump(1) + "\n");
    summary.train = train.rows();
    summary.val = val.rows();
    summary.test = test.rows();
    summary.warnings = parts.warnings;
    if (summary.rows_dropped > 0) {
      summary.warnings.push_back(std::to_string(summary.rows_dropped) +
                                 " rows dropped for non-finite values");
    }
    json report = {{"rows_read", summary.rows_read},
                   {"rows_dropped", summary.rows_dropped},
                   {"features", ds.features()},
                   {"train", {{"rows", train.rows()}, {"malicious", train.count_label(1)}}},
                   {"val", {{"rows", val.rows()}, {"malicious", val.count_label(1)}}},
                   {"test", {{"rows", test.rows()}, {"malicious", test.count_label(1)}}},
                   {"warnings", summary.warnings}};
    manifest.write_artifact("data/ingest.json", report.dump(1) + "\n");
    return summary;
  });
}

NidsSummary cmd_train_nids(const PipelineConfig& cfg, RunManifest& manifest) {
  return run_stage("train-nids", manifest, [&] {
    const FlowDataset train_ds = load_split(manifest, "train.csv");
    const FlowDataset test_ds = load_split(manifest, "test.csv");
    MlpSpec spec;
    spec.layer_sizes.push_back(train_ds.features());
    for (size_t h : cfg.classifier_hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(1);
    spec.output_activation = Activation::kSigmoid;
    spec.seed = cfg.classifier_init_seed;
    TrainConfig tc = cfg.classifier_train;
    tc.loss = LossKind::kBce;
    const TrainResult trained = train(init(spec), train_ds.X, train_ds.y, tc);
    NidsSummary s;
    s.train_accuracy = accuracy(predict(trained.model, train_ds.X).labels, train_ds.y);
    s.test_accuracy = accuracy(predict(trained.model, test_ds.X).labels, test_ds.y);
    s.final_loss = trained.loss_history.back();
    manifest.write_artifact("nids/model.json", model_to_json(trained.model).dump(1) + "\n");
    manifest.write_artifact("nids/loss_history.csv", loss_history_csv(trained.loss_history));
    json report = {{"train_accuracy", s.train_accuracy},
                   {"test_accuracy", s.test_accuracy},
                   {"final_loss", s.final_loss},
                   {"epochs", trained.loss_history.size()}};
    manifest.write_artifact("nids/report.json", report.dump(1) + "\n");
    return s;
  });
}

AttackSummary cmd_attack(const PipelineConfig& cfg, AttackKind kind, RunManifest& manifest) {
  const std::string stage = "attack-" + to_string(kind);
  return run_stage(stage, manifest, [&] {
    const AttackConfig& ac = cfg.attack(kind);
    const MlpModel model = load_nids(manifest);
    const FlowDataset test_ds = load_split(manifest, "test.csv");
    const AdvBatch batch = attack_batch(model, test_ds, ac, cfg.attack_filter);
    AttackSummary s;
    s.kind = kind;
    s.samples = batch.size();
    s.success_rate = batch.success_rate();
    for (size_t r = 0; r < batch.size(); ++r) {
      s.mean_linf += batch.linf[r] / static_cast<double>(batch.size());
      s.mean_l2 += batch.l2[r] / static_cast<double>(batch.size());
      const bool bounded = kind == AttackKind::kDeepFool || batch.linf[r] <= ac.epsilon + 1e-12;
      const auto row = batch.adversarial.row(static_cast<Eigen::Index>(r));
      const bool in_box = row.minCoeff() >= 0.0 && row.maxCoeff() <= 1.0;
      if (!bounded || !in_box) ++s.containment_violations;
    }
    const std::string base = "attacks/" + to_string(kind);
    manifest.write_artifact(base + ".csv", adv_batch_to_csv(batch));
    json side = {{"config", attack_config_to_json(ac)},
                 {"filter", to_string(cfg.attack_filter)},
                 {"samples", s.samples},
                 {"success_rate", s.success_rate},
                 {"mean_linf", s.mean_linf},
                 {"mean_l2", s.mean_l2},
                 {"degenerate", batch.degenerate},
                 {"containment_violations", s.containment_violations}};
    manifest.write_artifact(base + ".json", side.dump(1) + "\n");
    if (s.containment_violations > 0) {
      throw InvariantError(stage, {std::to_string(s.containment_violations) +
                                   " samples left the epsilon ball or the unit box"});
    }
    return s;
  });
}

FingerprintSummary cmd_fingerprint(const PipelineConfig& cfg, const std::string& source,
                                   RunManifest& manifest) {
  return run_stage("fingerprint-" + source, manifest, [&] {
    const MlpModel model = load_nids(manifest);
    const FlowDataset train_ds = load_split(manifest, "train.csv");
    const BackgroundSet bg = sample_background(train_ds, cfg.background_size, cfg.background_seed);
    FingerprintSummary s;
    auto emit = [&](const std::string& name, const std::vector<AttributionFingerprint>& fps,
                    const std::string& origin) {
      for (const auto& fp : fps) s.completeness_violations += fp.complete() ? 0 : 1;
      s.rows[name] = fps.size();
      manifest.write_artifact("fingerprints/" + name + ".csv", fingerprints_to_csv(fps, origin));
    };
    auto ids_of = [](size_t n) {
      std::vector<int64_t> ids(n);
      for (size_t i = 0; i < n; ++i) ids[i] = static_cast<int64_t>(i);
      return ids;
    };
    if (source == "clean") {
      manifest.write_artifact("fingerprints/background.csv", matrix_csv(bg.samples, train_ds.schema));
      const FlowDataset val_ds = load_split(manifest, "val.csv");
      const FlowDataset test_ds = load_split(manifest, "test.csv");
      const auto ztrain = class_of(cfg.detector_filter);
      auto ids = ids_of(train_ds.rows());
      emit("clean_train", fingerprint_batch(model, train_ds.X, bg, &train_ds.y, ztrain, &ids), "clean");
      ids = ids_of(val_ds.rows());
      emit("clean_val", fingerprint_batch(model, val_ds.X, bg, &val_ds.y, ztrain, &ids), "clean");
      ids = ids_of(test_ds.rows());
      emit("clean_test",
           fingerprint_batch(model, test_ds.X, bg, &test_ds.y, class_of(cfg.clean_panel), &ids), "clean");
    } else {
      const AttackKind kind = attack_kind_from_string(source);
      cfg.attack(kind);
      const fs::path csv = manifest.out_dir() / "attacks" / (source + ".csv");
      const fs::path side = manifest.out_dir() / "attacks" / (source + ".json");
      if (!fs::exists(csv) || !fs::exists(side)) {
        throw IoError("missing adversarial batch " + csv.string() + " (run attack first)");
      }
      const AdvBatch batch = load_adv_batch(csv, side);
      std::vector<int64_t> ids;
      for (size_t r : batch.row_index) ids.push_back(static_cast<int64_t>(r));
      emit(source, fingerprint_batch(model, batch.adversarial, bg, nullptr, std::nullopt, &ids), source);
    }
    json report = {{"source", source},
                   {"rows", s.rows},
                   {"background_rows", bg.size()},
                   {"background_seed", bg.seed},
                   {"completeness_violations", s.completeness_violations}};
    manifest.write_artifact("fingerprints/" + source + "_report.json", report.dump(1) + "\n");
    if (s.completeness_violations > 0) {
      throw InvariantError("fingerprint-" + source,
                           {std::to_string(s.completeness_violations) +
                            " fingerprints violate phi0 + sum(phi) = g(x)"});
    }
    return s;
  });
}

DetectorSummary cmd_train_detector(const PipelineConfig& cfg, RunManifest& manifest) {
  return run_stage("train-detector", manifest, [&] {
    const Matrix z_train = fingerprint_matrix(load_fps(manifest, "clean_train"));
    const Matrix z_val = fingerprint_matrix(load_fps(manifest, "clean_val"));
    TrainConfig tc = cfg.detector_train;
    tc.loss = LossKind::kMse;
    const TrainResult trained = train_autoencoder(z_train, tc, cfg.detector_shape, cfg.detector_init_seed);
    DetectorModel det;
    det.autoencoder = trained.model;
    det.loss_history = trained.loss_history;
    const std::vector<double> val_errors = reconstruction_errors(det.autoencoder, z_val);
    const double tau = calibrate_threshold(val_errors, cfg.calibration, &det.calibration);
    if (!(tau > 0)) throw CalibrationError("calibrated threshold is not positive");
    det.tau = tau;
    det.background_ref = "clean train split, " + std::to_string(cfg.background_size) +
                         " rows, seed " + std::to_string(cfg.background_seed);
    manifest.write_artifact("detector/detector.json", detector_to_json(det).dump(1) + "\n");
    manifest.write_artifact("detector/loss_history.csv", loss_history_csv(trained.loss_history));
    DetectorSummary s;
    s.tau = tau;
    s.train_rows = static_cast<size_t>(z_train.rows());
    s.calibration_rows = val_errors.size();
    s.final_loss = trained.loss_history.back();
    return s;
  });
}

EvaluationSummary cmd_evaluate(const PipelineConfig& cfg, RunManifest& manifest) {
  return run_stage("evaluate", manifest, [&] {
    const fs::path det_path = manifest.out_dir() / "detector" / "detector.json";
    if (!fs::exists(det_path)) throw IoError("missing detector " + det_path.string() + " (run train-detector first)");
    const DetectorModel det = load_detector(det_path);
    const FlowDataset test_ds = load_split(manifest, "test.csv");
    const auto clean_fps = load_fps(manifest, "clean_test");
    const std::vector<double> clean_errors = reconstruction_errors(det.autoencoder, fingerprint_matrix(clean_fps));

    EvaluationSummary summary;
    std::vector<std::string> conditions = {"clean"};
    std::vector<std::vector<double>> importances = {importance(clean_fps)};
    std::string metrics_csv = metrics_csv_header();
    json robustness = json::object();
    json confusions = json::object();
    json headline = json::object();

    for (AttackKind kind : cfg.attack_kinds()) {
      const std::string name = to_string(kind);
      const auto adv_fps = load_fps(manifest, name);
      const std::vector<double> adv_errors = reconstruction_errors(det.autoencoder, fingerprint_matrix(adv_fps));
      std::vector<double> scores = clean_errors;
      scores.insert(scores.end(), adv_errors.begin(), adv_errors.end());
      std::vector<int> truths(clean_errors.size(), 0);
      truths.resize(scores.size(), 1);
      std::vector<int> predicted;
      for (double s : scores) predicted.push_back(decide(det, s).adversarial() ? 1 : 0);

      AttackEvaluation ev;
      ev.kind = kind;
      ev.metrics = classification_metrics(confusion(truths, predicted), scores, truths);
      std::vector<bool> clean_ok, adv_ok;
      for (size_t i = 0; i < scores.size(); ++i) {
        (truths[i] == 0 ? clean_ok : adv_ok).push_back(predicted[i] == truths[i]);
      }
      ev.robustness = robustness_metrics(clean_ok, adv_ok);
      ev.distribution = error_distribution_report(clean_errors, adv_errors, *det.tau, cfg.histogram_bins);

      for (const auto& f : check_metric_invariants(ev.metrics)) summary.invariant_failures.push_back(name + ": " + f);
      if (ev.metrics.counts.total() != scores.size()) {
        summary.invariant_failures.push_back(name + ": confusion counts do not sum to sample count");
      }
      if (std::abs(ev.robustness.aa + ev.robustness.asr - 1.0) > 1e-12) {
        summary.invariant_failures.push_back(name + ": aa + asr != 1");
      }

      metrics_csv += metrics_csv_row(name, ev.metrics);
      robustness[name] = to_json(ev.robustness);
      confusions[name] = to_json(ev.metrics.counts);
      manifest.write_artifact("reports/metrics_" + name + ".json", to_json(ev.metrics).dump(1) + "\n");
      manifest.write_artifact("reports/error_distribution_" + name + ".csv", ev.distribution.to_csv());
      manifest.write_artifact("reports/error_distribution_" + name + ".json",
                              ev.distribution.to_json().dump(1) + "\n");
      conditions.push_back(name);
      importances.push_back(importance(adv_fps));
      headline[name] = {{"roc_auc", ev.metrics.roc_auc ? json(*ev.metrics.roc_auc) : json(nullptr)},
                        {"accuracy", ev.metrics.accuracy},
                        {"fpr", ev.metrics.fpr},
                        {"fnr", ev.metrics.fnr}};
      summary.attacks.push_back(std::move(ev));
    }

    summary.ranks = build_rank_table(test_ds.schema.names(), conditions, importances);
    for (size_t c = 0; c < summary.ranks.ranks.size(); ++c) {
      std::vector<size_t> sorted = summary.ranks.ranks[c];
      std::sort(sorted.begin(), sorted.end());
      for (size_t k = 0; k < sorted.size(); ++k) {
        if (sorted[k] != k + 1) {
          summary.invariant_failures.push_back("ranks for " + conditions[c] + " are not a permutation");
          break;
        }
      }
    }
    manifest.write_artifact("reports/metrics.csv", metrics_csv);
    manifest.write_artifact("reports/robustness.json", robustness.dump(1) + "\n");
    manifest.write_artifact("reports/confusion.json", confusions.dump(1) + "\n");
    manifest.write_artifact("reports/rank_table.csv", summary.ranks.to_csv());
    manifest.write_artifact("reports/rank_table.json", summary.ranks.to_json().dump(1) + "\n");

    json nids = json::object();
    const fs::path nids_report = manifest.out_dir() / "nids" / "report.json";
    if (fs::exists(nids_report)) nids = json::parse(io::read_file(nids_report));
    json attack_rates = json::object();
    for (AttackKind kind : cfg.attack_kinds()) {
      const fs::path side = manifest.out_dir() / "attacks" / (to_string(kind) + ".json");
      if (fs::exists(side)) attack_rates[to_string(kind)] = json::parse(io::read_file(side)).at("success_rate");
    }
    json report = {{"tau", *det.tau},
                   {"clean_test_fingerprints", clean_fps.size()},
                   {"nids", nids},
                   {"attack_success_rate", attack_rates},
                   {"detection", headline},
                   {"invariant_failures", summary.invariant_failures}};
    manifest.write_artifact("reports/summary.json", report.dump(1) + "\n");
    return summary;
  });
}

DetectSummary cmd_detect(const PipelineConfig& cfg, const fs::path& input, RunManifest& manifest) {
  return run_stage("detect", manifest, [&] {
    if (!fs::exists(input)) throw IoError("file not found: " + input.string());
    const fs::path scaler_path = data_path(manifest, "scaler.json");
    const fs::path det_path = manifest.out_dir() / "detector" / "detector.json";
    if (!fs::exists(scaler_path) || !fs::exists(det_path)) {
      throw IoError("missing scaler or detector under " + manifest.out_dir().string());
    }
    FeatureSchema schema;
    const ScalerParams scaler = scaler_from_json(json::parse(io::read_file(scaler_path)), &schema);
    FlowDataset raw = cfg.data.kind == DataSourceConfig::Kind::kSynthetic
                          ? load_dataset_csv(input)
                          : load_csv(input, schema, cfg.data.csv).dataset;
    const FlowDataset flows = apply_scaler(raw, scaler);
    const MlpModel model = load_nids(manifest);
    const DetectorModel det = load_detector(det_path);
    const FlowDataset train_ds = load_split(manifest, "train.csv");
    const BackgroundSet bg = sample_background(train_ds, cfg.background_size, cfg.background_seed);

    DetectSummary s;
    std::string out = "row,nids_label,logit,score,verdict\n";
    for (Eigen::Index i = 0; i < flows.X.rows(); ++i) {
      const PipelineDetection d = detect_pipeline(model, det, bg, flows.X.row(i).transpose());
      const bool flagged = d.detection.adversarial();
      s.flagged += flagged;
      out += std::to_string(i) + "," + std::to_string(d.fingerprint.model_output > 0 ? 1 : 0) + "," +
             io::format_double(d.fingerprint.model_output) + "," + io::format_double(d.detection.score) +
             "," + (flagged ? "adversarial" : "clean") + "\n";
    }
    s.rows = flows.rows();
    manifest.write_artifact("detect/" + input.stem().string() + ".csv", out);
    return s;
  });
}

EvaluationSummary cmd_run_all(const PipelineConfig& cfg, const fs::path& out_dir) {
  RunManifest manifest(out_dir);
  manifest.set_config(cfg);
  auto finish = [&] { manifest.save(); };
  try {
    cmd_ingest(cfg, manifest);
    cmd_train_nids(cfg, manifest);
    for (AttackKind kind : cfg.attack_kinds()) cmd_attack(cfg, kind, manifest);
    cmd_fingerprint(cfg, "clean", manifest);
    for (AttackKind kind : cfg.attack_kinds()) cmd_fingerprint(cfg, to_string(kind), manifest);
    cmd_train_detector(cfg, manifest);
    EvaluationSummary summary = cmd_evaluate(cfg, manifest);
    finish();
    if (!summary.invariant_failures.empty()) throw InvariantError("evaluate", summary.invariant_failures);
    return summary;
  } catch (...) {
    finish();
    throw;
  }
}

}  // namespace shapguard
