#include "srda/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "srda/checkpoint.hpp"
#include "srda/config.hpp"
#include "srda/dataset.hpp"
#include "srda/error.hpp"
#include "srda/evaluate.hpp"
#include "srda/image_io.hpp"
#include "srda/ops.hpp"
#include "srda/train.hpp"

namespace fs = std::filesystem;

namespace srda {

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string resume;
  std::string checkpoint;
  std::string input;
  std::string output;
};

void add_common(CLI::App* cmd, Options& o, bool out_required) {
  cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", o.seed, "seed for data generation and training");
  cmd->add_option("--set", o.set, "override a config value, e.g. --set train.main_iters=100")->take_all();
}

std::vector<std::string> overrides(const Options& o) {
  std::vector<std::string> all = o.set;
  if (!o.data.empty()) all.push_back("data.root=\"" + o.data + "\"");
  if (o.seed) {
    all.push_back("data.seed=" + std::to_string(*o.seed));
    all.push_back("train.seed=" + std::to_string(*o.seed));
  }
  return all;
}

RunConfig resolve_config(const Options& o, const std::string& checkpoint_config = {}) {
  if (o.config.empty() && !checkpoint_config.empty()) {
    nlohmann::json j = nlohmann::json::parse(checkpoint_config, nullptr, false);
    if (j.is_discarded()) throw ValidationError("checkpoint '" + o.checkpoint + "' carries an unreadable config");
    for (const auto& ov : overrides(o)) apply_override(j, ov);
    return config_from_json(j);
  }
  return load_config(o.config, overrides(o));
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write '" + path + "'");
}

void echo_config(const RunConfig& cfg, const std::string& dir) {
  make_dir(dir);
  write_text((fs::path(dir) / "effective_config.json").string(), to_json(cfg).dump(2) + "\n");
}

DomainDataset open_dataset(const RunConfig& cfg) {
  if (cfg.data_root.empty()) throw ValidationError("no dataset given: set data.root in the config or pass --data <dir>");
  return load_dataset(cfg.data_root, cfg.model.num_classes, cfg.model.scale);
}

int cmd_synth(const Options& o, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  cfg.data_root = o.out;
  const Manifest m = synthesize_dataset(o.out, cfg.data);
  echo_config(cfg, o.out);
  out << "wrote " << m.items.size() << " scenes to " << o.out << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, bool pretrain_only, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  if (pretrain_only) cfg.train.main_iters = 0;
  const DomainDataset dataset = open_dataset(cfg);
  echo_config(cfg, o.out);
  TrainingRun run{cfg.model, cfg.train, cfg.crop, to_json(cfg).dump(), o.out, o.resume};
  const std::int64_t total = cfg.train.pretrain_iters + cfg.train.main_iters;
  const TrainingResult result = run_training(run, dataset, [&](std::int64_t iter, const LossReport& r) {
    if ((iter + 1) % 50 == 0 || iter + 1 == total) {
      out << "iter " << iter + 1 << "/" << total << (iter < cfg.train.pretrain_iters ? " pretrain" : " main")
          << " gen=" << r.gen_total << " disc=" << r.disc_total << " seg=" << r.seg << "\n";
    }
  });
  out << "checkpoint " << result.checkpoint_path << "\nmetrics " << result.metrics_path << "\n";
  return kExitOk;
}

Trainer restore_trainer(const RunConfig& cfg, const Checkpoint& ckpt) {
  Trainer t(cfg.model, cfg.train);
  t.restore(ckpt);
  return t;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const RunConfig cfg = resolve_config(o, ckpt.config_json);
  const DomainDataset dataset = open_dataset(cfg);
  const Trainer trainer = restore_trainer(cfg, ckpt);
  const MetricsReport report = evaluate(trainer.model(), dataset, cfg.eval.split, cfg.crop, cfg.eval.psnr);
  out << report.table() << "\n" << report.csv();
  if (!o.out.empty()) {
    echo_config(cfg, o.out);
    write_text((fs::path(o.out) / "report.csv").string(), report.csv());
  }
  return kExitOk;
}

int cmd_infer(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const RunConfig cfg = resolve_config(o, ckpt.config_json);
  const Trainer trainer = restore_trainer(cfg, ckpt);
  const Tensor image = read_rgb_png(o.input);
  NoGradGuard no_grad;
  const auto p = trainer.model().predict(image);
  const fs::path label_path(o.output);
  if (label_path.has_parent_path()) make_dir(label_path.parent_path().string());
  write_label_png(label_path.string(), argmax_channel(p.logits));
  const fs::path sr_path = label_path.parent_path() / (label_path.stem().string() + "_sr.png");
  write_rgb_png(sr_path.string(), p.sr_image);
  if (!o.out.empty()) echo_config(cfg, o.out);
  out << "labels " << label_path.string() << "\nsr " << sr_path.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Super-resolution domain adaptation for cross-resolution segmentation", "srda"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic two-domain dataset under --out");
  add_common(synth, o, true);

  auto* pretrain = app.add_subcommand("pretrain", "run the pretraining phase only");
  add_common(pretrain, o, true);
  pretrain->add_option("--data", o.data, "dataset directory (overrides data.root)");
  pretrain->add_option("--resume", o.resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "pretrain then train adversarially");
  add_common(train, o, true);
  train->add_option("--data", o.data, "dataset directory (overrides data.root)");
  train->add_option("--resume", o.resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "score a checkpoint on the held-out target split");
  add_common(eval, o, false);
  eval->add_option("--data", o.data, "dataset directory (overrides data.root)");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);

  auto* infer = app.add_subcommand("infer", "segment and super-resolve one low resolution image");
  add_common(infer, o, false);
  infer->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", o.input, "input PNG")->required()->check(CLI::ExistingFile);
  infer->add_option("--output", o.output, "label PNG to write; the SR image goes next to it as <name>_sr.png")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*pretrain) return cmd_train(o, true, out);
    if (*train) return cmd_train(o, false, out);
    if (*eval) return cmd_eval(o, out);
    if (*infer) return cmd_infer(o, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace srda
