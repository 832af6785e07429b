// Acceptance suite. Prints one PASS/FAIL line per criterion; detail lines are
// indented underneath. Exit status is non-zero when any selected criterion
// fails.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradient_suite.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "srda/checkpoint.hpp"
#include "srda/config.hpp"
#include "srda/evaluate.hpp"
#include "srda/losses.hpp"
#include "srda/metrics.hpp"
#include "srda/ops.hpp"
#include "srda/train.hpp"

namespace fs = std::filesystem;

namespace srda::acceptance {
namespace {

struct Outcome {
  bool pass = true;
  std::string summary;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      details.push_back("failed: " + what);
    }
  }
  void note(const std::string& line) { details.push_back(line); }
};

struct Context {
  fs::path work;
  bool reuse = false;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

double wall_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

RunConfig preset(const std::string& name) { return load_config(test::source_path("configs/" + name + ".json")); }

// --- 1 -------------------------------------------------------------------

Outcome gradient_suite(const Context&) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::vector<test::GradCase> cases = test::layer_cases();
  for (auto& c : test::loss_cases()) cases.push_back(std::move(c));
  cases.push_back(test::composite_case());

  double worst_layer = 0, worst_composite = 0;
  int checked = 0, straddling = 0;
  for (const auto& c : cases) {
    const test::GradResult r = test::run_case(c);
    checked += r.checked;
    straddling += r.straddling;
    const bool composite = c.tolerance == test::kCompositeTolerance;
    (composite ? worst_composite : worst_layer) = std::max(composite ? worst_composite : worst_layer, r.worst);
    o.require(r.worst <= c.tolerance, c.name + " max relative error " + sci(r.worst) + " > " + sci(c.tolerance));
    o.require(r.checked >= test::kGradSeeds * test::kGradCoordinates, c.name + " checked too few coordinates");
  }
  const double elapsed = wall_seconds(start);
  o.require(elapsed <= 120.0, "runtime " + fmt(elapsed) + " s > 120 s");
  o.summary = std::to_string(cases.size()) + " cases x " + std::to_string(test::kGradSeeds) +
              " seeds, worst layer/loss " + sci(worst_layer) + " (<= 1e-4), composite " + sci(worst_composite) +
              " (<= 1e-3), " + fmt(elapsed, 3) + " s";
  o.note(std::to_string(checked) + " coordinates compared; " + std::to_string(straddling) +
         " kink-straddling stencils in piecewise-linear networks were replaced");
  return o;
}

// --- 2 -------------------------------------------------------------------

Outcome loss_oracles(const Context&) {
  Outcome o;
  const double ln2 = std::numbers::ln2;

  const Tensor zeros = Tensor::zeros({2, 2, 5, 7}, DType::kFloat64);
  const double ce = cross_entropy_2d(zeros, test::random_labels(2, 5, 7, 2, 3)).item();
  o.require(std::abs(ce - ln2) <= 1e-6, "cross-entropy at uniform logits " + fmt(ce, 12));

  const Tensor half = Tensor::full({2, 1, 6, 6}, 0.5);
  const AdversarialPair pdc = pdc_losses(half, half);
  o.require(pdc.loss.item() == 0.5 && pdc.inverse.item() == 0.5,
            "PDC at constant 0.5 gave " + fmt(pdc.loss.item(), 17) + " / " + fmt(pdc.inverse.item(), 17));

  const Tensor logit0 = Tensor::zeros({2, 1, 3, 3});  // sigmoid(0) = 0.5
  const AdversarialPair odc = odc_losses(logit0, logit0);
  o.require(std::abs(odc.loss.item() - 2 * ln2) <= 1e-6, "ODC at sigmoid 0.5 gave " + fmt(odc.loss.item(), 12));
  o.require(std::abs(odc.inverse.item() - 2 * ln2) <= 1e-6,
            "ODC inverse at sigmoid 0.5 gave " + fmt(odc.inverse.item(), 12));

  const LossWeights w{2.5, 10.0};
  Rng rng(5);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0, 3), b = rng.uniform(0, 1), c = rng.uniform(0, 1);
    const double expected = 2.5 * a + 10.0 * (b + c);
    const auto f64 = [](double v) { return Tensor::scalar(v, DType::kFloat64); };
    const double tensor_form = srs_loss(w, f64(a), f64(b), f64(c)).item();
    worst = std::max({worst, std::abs(tensor_form - expected), std::abs(srs_loss(w, a, b, c) - expected)});
  }
  o.require(worst <= 1e-6, "weighted sum deviates by " + sci(worst));

  o.summary = "CE " + fmt(ce, 10) + " vs ln 2, PDC " + fmt(pdc.loss.item(), 10) + ", ODC " +
              fmt(odc.loss.item(), 10) + " vs 2 ln 2, alpha=2.5 beta=10 composition max deviation " + sci(worst);
  return o;
}

// --- 3 -------------------------------------------------------------------

Outcome brute_force(const Context&) {
  Outcome o;
  Rng rng(2024);
  int conv_cases = 0, deconv_cases = 0, iou_cases = 0;

  while (conv_cases < 120) {
    const std::int64_t n = rng.range(1, 3), cin = rng.range(1, 4), cout = rng.range(1, 4);
    const std::int64_t k = rng.range(1, 4), stride = rng.range(1, 3), dil = rng.range(1, 2), pad = rng.range(0, 2);
    const std::int64_t span = dil * (k - 1) + 1;
    const std::int64_t lo = std::max<std::int64_t>(1, span - 2 * pad);
    const std::int64_t h = rng.range(lo, 10), w = rng.range(lo, 10);
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(conv_cases);
    const Tensor x = test::random_int_tensor({n, cin, h, w}, seed);
    const Tensor wt = test::random_int_tensor({cout, cin, k, k}, seed + 7919);
    std::optional<Tensor> b;
    std::vector<double> bv;
    if (rng.bernoulli(0.5)) {
      b = test::random_int_tensor({1, cout, 1, 1}, seed + 104729);
      bv = b->to_vector();
    }
    Shape shape;
    const auto expected = test::conv2d_reference(x, wt, bv, stride, pad, dil, shape);
    const Tensor y = conv2d(x, wt, b, {stride, pad, dil});
    o.require(y.shape() == shape && y.to_vector() == expected, "conv2d instance " + std::to_string(conv_cases));
    ++conv_cases;
  }

  while (deconv_cases < 120) {
    const std::int64_t n = rng.range(1, 3), cin = rng.range(1, 4), cout = rng.range(1, 4);
    const std::int64_t k = rng.range(1, 4), stride = rng.range(1, 3), pad = rng.range(0, (k - 1) / 2);
    const std::int64_t h = rng.range(1, 7), w = rng.range(1, 7);
    if ((h - 1) * stride - 2 * pad + k < 1 || (w - 1) * stride - 2 * pad + k < 1) continue;
    const std::uint64_t seed = 5000 + static_cast<std::uint64_t>(deconv_cases);
    const Tensor x = test::random_int_tensor({n, cin, h, w}, seed);
    const Tensor wt = test::random_int_tensor({cin, cout, k, k}, seed + 7919);
    std::optional<Tensor> b;
    std::vector<double> bv;
    if (rng.bernoulli(0.5)) {
      b = test::random_int_tensor({1, cout, 1, 1}, seed + 104729);
      bv = b->to_vector();
    }
    Shape shape;
    const auto expected = test::conv_transpose2d_reference(x, wt, bv, stride, pad, shape);
    const Tensor y = conv_transpose2d(x, wt, b, stride, pad);
    o.require(y.shape() == shape && y.to_vector() == expected,
              "conv_transpose2d instance " + std::to_string(deconv_cases));
    ++deconv_cases;
  }

  for (; iou_cases < 120; ++iou_cases) {
    const int classes = static_cast<int>(rng.range(2, 6));
    const std::int64_t n = rng.range(1, 3), h = rng.range(1, 12), w = rng.range(1, 12);
    const LabelMap t = test::random_labels(n, h, w, classes, 9000 + iou_cases);
    const LabelMap p = test::random_labels(n, h, w, classes, 19000 + iou_cases);
    ConfusionMatrix conf(classes);
    conf.add(t, p);
    for (int k = 0; k < classes; ++k) {
      std::int64_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        inter += t.values[i] == k && p.values[i] == k;
        uni += t.values[i] == k || p.values[i] == k;
      }
      const std::optional<double> got = iou(conf, k);
      const bool ok = uni == 0 ? !got.has_value()
                               : got.has_value() && conf.at(k, k) == inter &&
                                     *got == static_cast<double>(inter) / static_cast<double>(uni);
      o.require(ok, "IoU instance " + std::to_string(iou_cases) + " class " + std::to_string(k));
    }
  }

  o.summary = std::to_string(conv_cases) + " conv2d, " + std::to_string(deconv_cases) + " conv_transpose2d, " +
              std::to_string(iou_cases) + " IoU instances match nested-loop oracles exactly";
  return o;
}

// --- 4 -------------------------------------------------------------------

// Stub predictor: every pixel of the i-th tile gets class i, so the stitched
// map records which tile produced each pixel.
struct TileStamp {
  int calls = 0;
  int classes;
  std::int64_t expected_input;
  bool inputs_ok = true;
  Predictor predictor() {
    Predictor p;
    p.logits = [this](const Tensor& x) {
      const Shape s = x.shape();
      inputs_ok = inputs_ok && s == Shape{1, 3, expected_input, expected_input};
      Tensor out = Tensor::zeros({1, classes, s.h, s.w}, DType::kFloat32);
      auto v = out.mutable_data<float>();
      if (calls < classes) std::fill(v.begin() + calls * s.plane(), v.begin() + (calls + 1) * s.plane(), 50.0f);
      ++calls;
      return out;
    };
    return p;
  }
};

void check_tiling(Outcome& o, const std::string& label, std::int64_t size, const CropSpec& crop) {
  const std::int64_t per_side = (size + crop.eval_tile - 1) / crop.eval_tile;
  TileStamp stamp{0, static_cast<int>(per_side * per_side), crop.eval_resize};
  const LabelMap out = sliding_window_infer(stamp.predictor(), Tensor::zeros({1, 3, size, size}), crop);
  bool stitched = out.h == size && out.w == size;
  for (std::int64_t y = 0; stitched && y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x)
      if (out.at(0, y, x) != (y / crop.eval_tile) * per_side + x / crop.eval_tile) {
        stitched = false;
        break;
      }
  o.require(stamp.calls == per_side * per_side, label + ": " + std::to_string(stamp.calls) + " tiles");
  o.require(stamp.inputs_ok, label + ": tiles not resized to " + std::to_string(crop.eval_resize));
  o.require(stitched, label + ": stitched map does not place every tile at its own window");
}

Outcome protocol_shapes(const Context&) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> seen;
  const std::pair<const char*, std::int64_t> presets[] = {{"mini_mi", 1250}, {"mini_vp", 1000}};
  for (const auto& [name, image_size] : presets) {
    const RunConfig cfg = preset(name);
    const std::int64_t src = cfg.crop.source_crop, tgt = cfg.crop.target_crop;
    const SrsModel model(cfg.model, 0);
    const auto p = model.predict(test::random_tensor({1, 3, src, src}, 1, 0, 1, DType::kFloat32));
    const Shape want_sr{1, 3, tgt, tgt}, want_p{1, cfg.model.num_classes, tgt, tgt};
    o.require(p.sr_image.shape() == want_sr, std::string(name) + " SR shape " + p.sr_image.shape().str());
    o.require(p.logits.shape() == want_p, std::string(name) + " P shape " + p.logits.shape().str());
    seen.push_back(std::string(name) + " " + std::to_string(src) + "^2 -> SR " + p.sr_image.shape().str() + ", P " +
                   p.logits.shape().str());

    check_tiling(o, std::string(name) + " stub", image_size, cfg.crop);
    // The same path with the real network, on a single tile.
    const Tensor tile = test::random_tensor({1, 3, cfg.crop.eval_tile, cfg.crop.eval_tile}, 2, 0, 1, DType::kFloat32);
    const LabelMap m = sliding_window_infer(make_predictor(model), tile, cfg.crop);
    o.require(m.h == cfg.crop.eval_tile && m.w == cfg.crop.eval_tile, std::string(name) + " model tiling");
    seen.push_back(std::string(name) + " eval " + std::to_string(cfg.crop.eval_tile) + " -> " +
                   std::to_string(cfg.crop.eval_resize) + " -> " + std::to_string(m.h) + " stitched");
  }
  const double elapsed = wall_seconds(start);
  o.require(elapsed <= 60.0, "runtime " + fmt(elapsed) + " s > 60 s");
  for (auto& s : seen) o.note(s);
  o.summary = "mini-MI 114 -> 380 and mini-VP 160 -> 320, tiling 625/188 and 500/250 stitched, " + fmt(elapsed, 3) + " s";
  return o;
}

// --- training helpers ----------------------------------------------------

struct Trained {
  std::string checkpoint;
  double cpu = 0;  // seconds spent training
};

Trained train(const RunConfig& cfg, const DomainDataset& ds, const fs::path& out, const std::string& resume,
              const Context& ctx) {
  const fs::path final_ckpt = out / "checkpoint_final.srda";
  const fs::path cpu_file = out / "cpu_seconds.txt";
  const std::string config_json = to_json(cfg).dump();
  if (ctx.reuse && fs::exists(final_ckpt) && fs::exists(cpu_file) &&
      load_checkpoint(final_ckpt.string()).config_json == config_json) {
    double cpu = 0;
    std::ifstream(cpu_file) >> cpu;
    return {final_ckpt.string(), cpu};
  }
  fs::create_directories(out);
  const double t0 = cpu_seconds();
  const TrainingResult r = run_training({cfg.model, cfg.train, cfg.crop, config_json, out.string(), resume}, ds);
  const double cpu = cpu_seconds() - t0;
  std::ofstream(cpu_file) << std::setprecision(17) << cpu << "\n";
  return {r.checkpoint_path, cpu};
}

MetricsReport score(const RunConfig& cfg, const DomainDataset& ds, const std::string& checkpoint, bool with_psnr) {
  Trainer trainer(cfg.model, cfg.train);
  trainer.restore(load_checkpoint(checkpoint));
  return evaluate(trainer.model(), ds, cfg.eval.split, cfg.crop, with_psnr);
}

DomainDataset make_dataset(const RunConfig& cfg, const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) synthesize_dataset(dir.string(), cfg.data);
  return load_dataset(dir.string(), cfg.model.num_classes, cfg.model.scale);
}

RunConfig desk(std::uint64_t seed) {
  RunConfig cfg = preset("mini_vp_desk");
  cfg.data.seed = seed;
  cfg.train.seed = seed;
  return cfg;
}

// --- 5 -------------------------------------------------------------------

Outcome adaptation_direction(const Context& ctx) {
  Outcome o;
  struct Variant {
    const char* name;
    bool pdc, odc;
  };
  const Variant variants[] = {{"NoAdapt", false, false}, {"SRS+PDC", true, false}, {"SRS+ODC", false, true},
                              {"Full", true, true}};
  std::map<std::string, double> mean;
  std::ofstream table(ctx.work / "adaptation.csv");
  table << "seed,variant,miou,cpu_seconds\n";

  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const RunConfig base = desk(seed);
    const fs::path root = ctx.work / ("seed" + std::to_string(seed));
    const DomainDataset ds = make_dataset(base, root / "data");

    // Pretraining is shared by every adapted variant; NoAdapt pretrains R
    // without the pixel-level classifier.
    RunConfig pre = base;
    pre.train.main_iters = 0;
    const Trained adapted_pre = train(pre, ds, root / "pretrain", "", ctx);
    pre.train.pretrain_pdc = false;
    const Trained plain_pre = train(pre, ds, root / "pretrain_noadapt", "", ctx);

    std::ostringstream line;
    line << "seed " << seed << ":";
    for (const Variant& v : variants) {
      RunConfig cfg = base;
      cfg.train.flags = {v.pdc, v.odc};
      const bool noadapt = !v.pdc && !v.odc;
      if (noadapt) cfg.train.pretrain_pdc = false;
      const Trained& from = noadapt ? plain_pre : adapted_pre;
      const Trained run = train(cfg, ds, root / v.name, from.checkpoint, ctx);
      const double miou = score(cfg, ds, run.checkpoint, false).miou * 100.0;
      const double cpu = from.cpu + run.cpu;
      mean[v.name] += miou / 3.0;
      line << " " << v.name << " " << fmt(miou, 4) << " (" << fmt(cpu / 60.0, 3) << " min)";
      table << seed << "," << v.name << "," << std::setprecision(17) << miou << "," << cpu << "\n" << std::flush;
      o.require(cpu <= 30 * 60.0, std::string(v.name) + " seed " + std::to_string(seed) + " took " +
                                      fmt(cpu / 60.0, 3) + " CPU-minutes");
    }
    o.note(line.str());
  }

  const double gap = mean["Full"] - mean["NoAdapt"];
  o.require(gap >= 2.0, "Full - NoAdapt = " + fmt(gap, 3) + " mIoU points < 2");
  o.require(mean["SRS+PDC"] >= mean["NoAdapt"] - 1.0, "SRS+PDC below NoAdapt - 1");
  o.require(mean["SRS+ODC"] >= mean["NoAdapt"] - 1.0, "SRS+ODC below NoAdapt - 1");
  o.summary = "mean target mIoU NoAdapt " + fmt(mean["NoAdapt"], 4) + ", SRS+PDC " + fmt(mean["SRS+PDC"], 4) +
              ", SRS+ODC " + fmt(mean["SRS+ODC"], 4) + ", Full " + fmt(mean["Full"], 4) + " (Full - NoAdapt " +
              fmt(gap, 3) + ", need >= 2)";
  return o;
}

// --- 6 -------------------------------------------------------------------

Outcome sr_quality(const Context& ctx) {
  Outcome o;
  RunConfig cfg = desk(0);
  cfg.train.main_iters = 0;
  const fs::path root = ctx.work / "sr_quality";
  const DomainDataset ds = make_dataset(cfg, root / "data");
  const Trained pre = train(cfg, ds, root / "pretrain", "", ctx);
  const MetricsReport r = score(cfg, ds, pre.checkpoint, true);
  const double sr = r.psnr_db.value_or(0), bicubic = r.psnr_bicubic_db.value_or(0);
  o.require(sr >= bicubic + 0.5, "R(down I_T) " + fmt(sr, 4) + " dB < bicubic " + fmt(bicubic, 4) + " + 0.5 dB");
  o.summary = "after " + std::to_string(cfg.train.pretrain_iters) + " pretraining iterations: SR " + fmt(sr, 4) +
              " dB vs bicubic " + fmt(bicubic, 4) + " dB on " + std::to_string(r.images) + " held-out images";
  return o;
}

// --- 7 -------------------------------------------------------------------

Outcome engineering_invariants(const Context& ctx) {
  Outcome o;
  RunConfig cfg = desk(0);
  cfg.data.source_scenes = 12;
  cfg.data.target_scenes = 12;
  cfg.data.eval_scenes = 2;
  const fs::path root = ctx.work / "invariants";
  const DomainDataset ds = make_dataset(cfg, root / "data");

  // Two identical short runs.
  cfg.train.pretrain_iters = 4;
  cfg.train.main_iters = 4;
  const TrainingRun a{cfg.model, cfg.train, cfg.crop, to_json(cfg).dump(), (root / "run_a").string(), ""};
  TrainingRun b = a;
  b.out_dir = (root / "run_b").string();
  const TrainingResult ra = run_training(a, ds), rb = run_training(b, ds);
  const bool csv_same = test::read_file(ra.metrics_path) == test::read_file(rb.metrics_path);
  o.require(csv_same, "metrics CSV differs between two runs of the same config and seed");
  o.require(test::read_file(ra.checkpoint_path) == test::read_file(rb.checkpoint_path),
            "final checkpoints differ between two identical runs");

  // Round trip through a fresh trainer.
  const Checkpoint saved = load_checkpoint(ra.checkpoint_path);
  Trainer restored(cfg.model, cfg.train);
  restored.restore(saved);
  const Checkpoint again = restored.to_checkpoint(saved.config_json);
  const std::string copy = (root / "roundtrip.srda").string();
  save_checkpoint(again, copy);
  const bool round_trip = bitwise_equal(saved, again) && test::read_file(copy) == test::read_file(ra.checkpoint_path);
  o.require(round_trip, "checkpoint round trip is not bitwise exact");

  // 50 iterations with the isolation assertion on every step.
  cfg.train.pretrain_iters = 25;
  cfg.train.main_iters = 25;
  cfg.train.check_isolation = true;
  int steps = 0;
  std::string isolation_error;
  try {
    run_training({cfg.model, cfg.train, cfg.crop, to_json(cfg).dump(), (root / "isolation").string(), ""}, ds,
                 [&](std::int64_t, const LossReport&) { ++steps; });
  } catch (const Error& e) {
    isolation_error = e.what();
  }
  o.require(isolation_error.empty(), "isolation run aborted: " + isolation_error);
  o.require(steps == 50, "isolation run stopped after " + std::to_string(steps) + " steps");

  o.summary = std::string("checkpoint round trip ") + (round_trip ? "bitwise exact" : "differs") +
              ", repeated run metrics CSV " + (csv_same ? "byte-identical" : "differs") + ", isolation held on " +
              std::to_string(steps) + "/50 steps";
  return o;
}

}  // namespace
}  // namespace srda::acceptance

int main(int argc, char** argv) {
  using namespace srda::acceptance;
  CLI::App app{"srda acceptance suite"};
  std::vector<int> selected;
  std::string work;
  bool reuse = false;
  app.add_option("--criterion", selected, "criteria to run (1-7); all when omitted")->check(CLI::Range(1, 7));
  app.add_option("--work", work, "directory for datasets and training runs");
  app.add_flag("--reuse", reuse, "reuse training runs already present in --work with the same config");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome(const Context&)>>> criteria = {
      {"gradient suite", gradient_suite},
      {"analytic loss oracles", loss_oracles},
      {"brute-force equivalence", brute_force},
      {"protocol shapes", protocol_shapes},
      {"adaptation direction", adaptation_direction},
      {"SR quality", sr_quality},
      {"engineering invariants", engineering_invariants},
  };
  if (selected.empty())
    for (int i = 1; i <= 7; ++i) selected.push_back(i);

  Context ctx;
  ctx.work = work.empty() ? fs::temp_directory_path() / ("srda_acceptance_" + std::to_string(::getpid())) : fs::path(work);
  ctx.reuse = reuse;
  fs::create_directories(ctx.work);

  int failures = 0;
  for (int id : selected) {
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = run(ctx);
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("threw: ") + e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.summary << "\n";
    for (const auto& d : o.details) std::cout << "  " << d << "\n";
    std::cout.flush();
    failures += !o.pass;
  }
  if (work.empty()) fs::remove_all(ctx.work);
  return failures == 0 ? 0 : 1;
}
