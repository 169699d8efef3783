#include "cli.hpp"

#include "saol/config.hpp"
#include "saol/error.hpp"
#include "saol/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>

namespace saol {
namespace {

// Failure tagged with the exit code of the stage that raised it.
struct StageError {
  int code;
  std::string message;
};

struct Options {
  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string head;
};

template <typename F> auto stage(int code, F &&fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw StageError{code, e.what()};
  }
}

RunConfig resolve_config(const Options &opts) {
  return stage(kExitConfig, [&] {
    RunConfig config = load_config(opts.config_path);
    if (!opts.out_dir.empty()) {
      config.out_dir = opts.out_dir;
    }
    if (opts.seed) {
      config.seed = *opts.seed;
    }
    if (!opts.head.empty()) {
      set_config_value(config, "test_head", opts.head);
    }
    finalize(config);
    return config;
  });
}

Dataset resolve_data(const RunConfig &config) {
  return stage(kExitData, [&] { return load_dataset(config); });
}

Trainer<float> make_trainer(const RunConfig &config, Dataset data) {
  return stage(kExitData, [&] { return Trainer<float>(config, std::move(data)); });
}

void restore_from(Trainer<float> &trainer, const std::string &path) {
  if (path.empty()) {
    throw StageError{kExitCheckpoint, "--checkpoint is required"};
  }
  stage(kExitCheckpoint, [&] { trainer.restore(load_checkpoint(path)); });
}

void prepare_out_dir(const RunConfig &config) {
  stage(kExitData, [&] { std::filesystem::create_directories(config.out_dir); });
}

std::string fmt(const char *pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

int cmd_train(const Options &opts, std::ostream &out) {
  const RunConfig config = resolve_config(opts);
  Trainer<float> trainer = make_trainer(config, resolve_data(config));
  prepare_out_dir(config);
  const auto metrics = config.out_dir / "metrics.csv";
  const auto ckpt = config.out_dir / "checkpoint.bin";
  if (!opts.checkpoint_path.empty()) {
    restore_from(trainer, opts.checkpoint_path);
    out << "resumed at epoch " << trainer.epoch() << ", step " << trainer.step_count() << '\n';
  } else {
    stage(kExitData, [&] {
      std::filesystem::remove(metrics);
      std::ofstream(config.out_dir / "config.txt") << to_string(trainer.config());
    });
  }
  out << "train " << trainer.data().train.size() << " / test " << trainer.data().test.size()
      << " images, " << trainer.model().params.total_elements() << " parameters, "
      << trainer.total_steps() << " steps\n";
  const auto start = std::chrono::steady_clock::now();
  trainer.fit([&](const EpochSummary &s) {
    stage(kExitData, [&] { append_metrics(metrics, s.metrics()); });
    stage(kExitCheckpoint, [&] { save_checkpoint(trainer.checkpoint(), ckpt); });
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << "epoch " << s.epoch << "/" << config.epochs << " lr " << fmt("%.4f", s.lr) << " sl "
        << fmt("%.4f", s.loss_sl) << " ss1 " << fmt("%.4f", s.loss_ss1) << " ss2 "
        << fmt("%.4f", s.loss_ss2) << " sd " << fmt("%.4f", s.loss_sd) << " acc_saol "
        << fmt("%.4f", s.eval.acc_saol) << " acc_gapfc " << fmt("%.4f", s.eval.acc_gapfc) << " ["
        << fmt("%.1f", secs) << "s]\n";
  });
  out << "checkpoint " << ckpt.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Options &opts, std::ostream &out) {
  const RunConfig config = resolve_config(opts);
  Trainer<float> trainer = make_trainer(config, resolve_data(config));
  restore_from(trainer, opts.checkpoint_path);
  prepare_out_dir(config);
  const EvalResult result = trainer.evaluate(trainer.data().test);
  const auto report = config.out_dir / "eval.csv";
  stage(kExitData, [&] {
    std::ofstream csv(report);
    if (!csv) {
      throw IoError("cannot write " + report.string());
    }
    csv << "head,accuracy,count,selected\n";
    csv << "saol," << fmt("%.6f", result.acc_saol) << ',' << result.count << ','
        << (config.test_head == TestHead::kSaol ? 1 : 0) << '\n';
    csv << "gapfc," << fmt("%.6f", result.acc_gapfc) << ',' << result.count << ','
        << (config.test_head == TestHead::kGapFc ? 1 : 0) << '\n';
  });
  out << "saol  accuracy " << fmt("%.4f", result.acc_saol)
      << (config.test_head == TestHead::kSaol ? "  (selected)" : "") << '\n';
  out << "gapfc accuracy " << fmt("%.4f", result.acc_gapfc)
      << (config.test_head == TestHead::kGapFc ? "  (selected)" : "") << '\n';
  out << "images " << result.count << ", report " << report.string() << '\n';
  return kExitOk;
}

int cmd_wsol(const Options &opts, std::ostream &out) {
  const RunConfig config = resolve_config(opts);
  Trainer<float> trainer = make_trainer(config, resolve_data(config));
  const auto &test = trainer.data().test;
  std::vector<BoundingBox> boxes;
  for (const auto &image : test) {
    if (image.box) {
      boxes.push_back(*image.box);
    }
  }
  if (boxes.empty()) {
    throw StageError{kExitData, "dataset has no ground-truth boxes"};
  }
  restore_from(trainer, opts.checkpoint_path);
  prepare_out_dir(config);
  const auto records = localize_dataset(trainer, test);
  const auto top1 = loc_accuracy(records, LocMode::kTop1);
  const auto gtk = loc_accuracy(records, LocMode::kGtKnown);
  const double baseline =
      random_box_baseline(boxes, config.input_size(), config.input_size(), 100000, config.seed);
  const auto report = config.out_dir / "wsol_report.csv";
  std::size_t files = 0;
  stage(kExitData, [&] {
    write_loc_report(report, records);
    files = export_heatmaps(trainer, test, config.wsol_heatmaps, config.out_dir / "heatmaps");
  });
  out << "top-1 loc accuracy     " << fmt("%.4f", top1.accuracy) << '\n';
  out << "gt-known loc accuracy  " << fmt("%.4f", gtk.accuracy) << '\n';
  out << "random-box baseline    " << fmt("%.4f", baseline) << '\n';
  if (gtk.skipped) {
    out << "skipped " << gtk.skipped << " images without boxes\n";
  }
  out << "report " << report.string() << ", " << files << " heatmap files\n";
  return kExitOk;
}

int cmd_visualize(const Options &opts, std::ostream &out) {
  const RunConfig config = resolve_config(opts);
  Trainer<float> trainer = make_trainer(config, resolve_data(config));
  restore_from(trainer, opts.checkpoint_path);
  std::size_t files = 0;
  stage(kExitData, [&] {
    files = export_heatmaps(trainer, trainer.data().test, config.wsol_heatmaps,
                            config.out_dir / "heatmaps");
  });
  out << files << " files in " << (config.out_dir / "heatmaps").string() << '\n';
  return kExitOk;
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Spatially attentive output layer: training, evaluation and localization"};
  app.require_subcommand(1);
  Options opts;

  const auto add_common = [&](CLI::App *cmd, bool needs_checkpoint) {
    cmd->add_option("--config", opts.config_path, "run configuration (key = value)")
        ->required()
        ->check(CLI::ExistingFile);
    auto *ck = cmd->add_option("--checkpoint", opts.checkpoint_path,
                               needs_checkpoint ? "trained checkpoint" : "resume from checkpoint");
    if (needs_checkpoint) {
      ck->required();
    }
    cmd->add_option("--out", opts.out_dir, "output directory (overrides out_dir)");
    cmd->add_option("--seed", opts.seed, "seed (overrides seed)");
    cmd->add_option("--head", opts.head, "test-time head")->check(CLI::IsMember({"saol", "gapfc"}));
  };
  auto *train = app.add_subcommand("train", "train a model");
  auto *eval = app.add_subcommand("eval", "top-1 accuracy of both heads");
  auto *wsol = app.add_subcommand("wsol", "weakly-supervised localization scores");
  auto *visualize = app.add_subcommand("visualize", "export attention and class heatmaps");
  add_common(train, false);
  add_common(eval, true);
  add_common(wsol, true);
  add_common(visualize, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      return cmd_train(opts, out);
    }
    if (*eval) {
      return cmd_eval(opts, out);
    }
    if (*wsol) {
      return cmd_wsol(opts, out);
    }
    return cmd_visualize(opts, out);
  } catch (const StageError &e) {
    err << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

} // namespace saol
