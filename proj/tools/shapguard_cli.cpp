// Command-line front end for the fingerprinting pipeline.
//
// Exit codes: 0 success, 1 usage or config error, 2 stage failure,
// 3 a run finished but one of its invariant checks failed.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "shapguard/io.hpp"
#include "shapguard/pipeline.hpp"

namespace sg = shapguard;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kStage = 2, kInvariant = 3 };

struct Options {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
  std::string attack = "all";
  std::string source = "all";
  std::string input;
};

sg::PipelineConfig resolve(const Options& o) {
  if (o.config_path.empty()) {
    return sg::default_config(o.seed.value_or(42));
  }
  return sg::load_config(o.config_path, o.seed);
}

std::vector<sg::AttackKind> selected_attacks(const sg::PipelineConfig& cfg, const std::string& name) {
  if (name == "all") return cfg.attack_kinds();
  const sg::AttackKind kind = sg::attack_kind_from_string(name);
  cfg.attack(kind);
  return {kind};
}

void print_evaluation(const sg::EvaluationSummary& s) {
  std::printf("%-9s %8s %8s %8s %8s %8s %8s\n", "attack", "auc", "ap", "acc", "fpr", "fnr", "asr");
  for (const auto& ev : s.attacks) {
    std::printf("%-9s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", sg::to_string(ev.kind).c_str(),
                ev.metrics.roc_auc.value_or(NAN), ev.metrics.average_precision.value_or(NAN),
                ev.metrics.accuracy, ev.metrics.fpr, ev.metrics.fnr, ev.robustness.asr);
  }
}

int run(const std::string& command, const Options& o) {
  const sg::PipelineConfig cfg = resolve(o);
  if (command == "run-all") {
    const auto summary = sg::cmd_run_all(cfg, o.out_dir);
    print_evaluation(summary);
    return kOk;
  }

  sg::RunManifest manifest(o.out_dir);
  manifest.load_existing();
  manifest.set_config(cfg);
  int code = kOk;
  try {
    if (command == "ingest") {
      const auto s = sg::cmd_ingest(cfg, manifest);
      std::printf("ingest: %zu rows read, %zu dropped; train %zu, val %zu, test %zu\n", s.rows_read,
                  s.rows_dropped, s.train, s.val, s.test);
      for (const auto& w : s.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    } else if (command == "train-nids") {
      const auto s = sg::cmd_train_nids(cfg, manifest);
      std::printf("train-nids: train accuracy %.4f, test accuracy %.4f, final loss %.6g\n",
                  s.train_accuracy, s.test_accuracy, s.final_loss);
    } else if (command == "attack") {
      for (auto kind : selected_attacks(cfg, o.attack)) {
        const auto s = sg::cmd_attack(cfg, kind, manifest);
        std::printf("attack %s: %zu samples, success %.4f, mean linf %.4g, mean l2 %.4g\n",
                    sg::to_string(kind).c_str(), s.samples, s.success_rate, s.mean_linf, s.mean_l2);
      }
    } else if (command == "fingerprint") {
      std::vector<std::string> sources;
      if (o.source == "all" || o.source == "clean") sources.push_back("clean");
      if (o.source != "clean") {
        for (auto kind : selected_attacks(cfg, o.source == "all" ? "all" : o.source)) {
          sources.push_back(sg::to_string(kind));
        }
      }
      for (const auto& src : sources) {
        const auto s = sg::cmd_fingerprint(cfg, src, manifest);
        for (const auto& [name, rows] : s.rows) std::printf("fingerprint %s: %zu rows\n", name.c_str(), rows);
      }
    } else if (command == "train-detector") {
      const auto s = sg::cmd_train_detector(cfg, manifest);
      std::printf("train-detector: %zu rows, final loss %.6g, tau %.6g\n", s.train_rows, s.final_loss,
                  s.tau);
    } else if (command == "detect") {
      const auto s = sg::cmd_detect(cfg, o.input, manifest);
      std::printf("detect: %zu flows, %zu flagged adversarial\n", s.rows, s.flagged);
    } else if (command == "evaluate") {
      const auto s = sg::cmd_evaluate(cfg, manifest);
      print_evaluation(s);
      for (const auto& f : s.invariant_failures) std::fprintf(stderr, "invariant: %s\n", f.c_str());
      if (!s.invariant_failures.empty()) code = kInvariant;
    }
  } catch (...) {
    manifest.save();
    throw;
  }
  manifest.save();
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribution-fingerprint detector for adversarial flows against an MLP NIDS"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sg::kToolVersion));

  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "master seed; overrides every seed in the config");
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"ingest", "load, split and scale the data"},
      {"train-nids", "train the MLP classifier"},
      {"attack", "craft adversarial test samples"},
      {"fingerprint", "compute attribution fingerprints"},
      {"train-detector", "train and calibrate the autoencoder"},
      {"evaluate", "score clean and adversarial fingerprints"},
      {"run-all", "every stage in order"},
      {"detect", "score new flows with a trained classifier and detector"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "attack") {
      sub->add_option("--attack", o.attack, "fgsm, pgd, deepfool or all")
          ->check(CLI::IsMember({"fgsm", "pgd", "deepfool", "all"}));
    }
    if (name == "detect") {
      sub->add_option("--input", o.input, "unscaled flow CSV")->required();
    }
    if (name == "fingerprint") {
      sub->add_option("--source", o.source, "clean, fgsm, pgd, deepfool or all")
          ->check(CLI::IsMember({"clean", "fgsm", "pgd", "deepfool", "all"}));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const sg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const sg::InvariantError& e) {
    std::fprintf(stderr, "invariant failure: %s\n", e.what());
    for (const auto& f : e.failures()) std::fprintf(stderr, "  %s\n", f.c_str());
    return kInvariant;
  } catch (const sg::StageError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kStage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kStage;
  }
}
