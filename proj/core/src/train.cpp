#include "srda/train.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "srda/error.hpp"
#include "srda/ops.hpp"
#include "srda/param_store.hpp"
#include "srda/random.hpp"

namespace fs = std::filesystem;

namespace srda {

void TrainConfig::validate() const {
  weights.validate();
  if (!(lr_pretrain > 0) || !(lr_main > 0)) throw ValidationError("train.lr_pretrain and train.lr_main must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ValidationError("train.beta1 and train.beta2 must lie in [0, 1)");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (pretrain_iters < 0 || main_iters < 0) throw ValidationError("train.pretrain_iters and train.main_iters must be >= 0");
  if (disc_updates < 0) throw ValidationError("train.disc_updates must be >= 0");
  if (checkpoint_every < 0) throw ValidationError("train.checkpoint_every must be >= 0");
}

namespace {

enum Stream : std::uint64_t { kGeneratorSeed = 0x47, kPdcSeed = 0x50, kOdcSeed = 0x4f, kBatchStream = 0x42 };

double value(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

TrainingBatch batch_to(const TrainingBatch& b, DType dtype) {
  return {b.source.to(dtype), b.source_labels, b.target.to(dtype), b.target_down.to(dtype)};
}

GeneratorPass generator_pass(const SrsModel& model, const PdcModel& pdc, const OdcModel& odc,
                             const TrainingBatch& batch, const LossWeights& weights, const AdversarialFlags& flags,
                             const Tensor* true_scores) {
  GeneratorPass g;
  g.forward = model.forward(batch.source, batch.target_down);
  const SrsForward& f = g.forward;
  const Shape hr = f.sr_source.image.shape();
  const Shape lr = batch.source.shape();

  g.idT = idt_loss(f.sr_target.image, batch.target);

  const Tensor up = resize(batch.source, hr.h, hr.w, ResizeMode::kBicubic);
  g.perceptual = perceptual_loss(model.perceptual(), f.sr_source.image, up);
  // E(down R(I_S)) feeds both the fixpoint term and the second segmentation
  // branch.
  const Tensor round_trip = resize(f.sr_source.image, lr.h, lr.w, ResizeMode::kBicubic);
  const Tensor rt_features = model.extract(round_trip);
  g.fp = l1_loss(rt_features, f.features_source);
  g.idS = add(g.perceptual, scale(g.fp, 0.5));

  const LabelMap labels_up = resize_labels(batch.source_labels, hr.h, hr.w);
  const SrResult rt_sr = model.super_resolve(rt_features, hr.h, hr.w);
  const Tensor rt_logits = model.segment(rt_features, rt_sr.pyramid, hr.h, hr.w);
  g.seg = add(cross_entropy_2d(f.logits_source, labels_up), cross_entropy_2d(rt_logits, labels_up));

  g.srs = srs_loss(weights, g.seg, g.idT, g.idS);
  if (flags.use_pdc) {
    const Tensor real = true_scores ? true_scores->detach() : pdc.forward(batch.target).detach();
    g.pdc = pdc_losses(pdc.forward(f.sr_source.image), real).loss;
  }
  if (flags.use_odc) g.odc = odc_losses(odc, f.prob_source, f.prob_target).loss;
  g.total = generator_objective(g.srs, g.pdc, g.odc, flags);
  return g;
}

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train)
    : model_config_(model),
      train_(train),
      model_(model, derive_seed(train.seed, kGeneratorSeed)),
      pdc_(derive_seed(train.seed, kPdcSeed)),
      odc_(model.num_classes, derive_seed(train.seed, kOdcSeed)) {
  train_.validate();
#ifndef NDEBUG
  train_.check_isolation = true;
#endif
  const AdamOptions pre{train_.lr_pretrain, train_.beta1, train_.beta2, 1e-8};
  const AdamOptions main{train_.lr_main, train_.beta1, train_.beta2, 1e-8};
  pre_r_opt_ = AdamState(pre);
  pre_pdc_opt_ = AdamState(pre);
  gen_opt_ = AdamState(main);
  pdc_opt_ = AdamState(main);
  odc_opt_ = AdamState(main);
}

void Trainer::update(ParamStore& params, AdamState& state) {
  // Parameters the objective does not reach keep their value and moments.
  ParamStore reached;
  for (auto& [name, t] : params) {
    if (t.has_grad()) reached.add(name, t);
  }
  if (!reached.empty()) adam_step(reached, state);
}

void Trainer::check_no_grads(const ParamStore& params, const char* during) const {
  for (const auto& [name, t] : params) {
    if (t.has_grad()) {
      throw Error(std::string("parameter isolation violated: '") + name + "' received a gradient during the " +
                  during);
    }
  }
}

namespace {

void require_finite(const LossReport& r, std::int64_t iter, const char* phase) {
  if (!r.all_finite()) {
    throw NumericalError("non-finite loss at iteration " + std::to_string(iter) + " (" + phase + "): " + r.str());
  }
}

ParamStore snapshot(const ParamStore& p) { return p.clone(); }

void check_unchanged(const ParamStore& before, const ParamStore& after, const char* during) {
  for (const auto& [name, t] : before) {
    if (t.to_vector() != after.at(name).to_vector()) {
      throw Error(std::string("parameter isolation violated: '") + name + "' changed during the " + during);
    }
  }
}

}  // namespace

LossReport Trainer::pretrain_step(const TrainingBatch& batch) {
  const bool use_pdc = train_.pretrain_pdc;
  ParamStore theta_r = model_.sr_params();
  LossReport r;
  Tensor sr_source;
  {
    FreezeGuard freeze_pdc(pdc_.params());
    const Shape lr = batch.source.shape();
    const Shape hr = batch.target.shape();
    const Tensor fs = model_.extract(batch.source);
    sr_source = model_.super_resolve(fs, hr.h, hr.w).image;
    const Tensor sr_target = model_.super_resolve(model_.extract(batch.target_down), hr.h, hr.w).image;
    const Tensor idT = idt_loss(sr_target, batch.target);
    const Tensor up = resize(batch.source, hr.h, hr.w, ResizeMode::kBicubic);
    const Tensor per = perceptual_loss(model_.perceptual(), sr_source, up);
    const Tensor fp = l1_loss(model_.extract(resize(sr_source, lr.h, lr.w, ResizeMode::kBicubic)), fs);
    const Tensor idS = add(per, scale(fp, 0.5));
    Tensor objective = scale(add(idT, idS), train_.weights.beta);
    r.idT = idT.item();
    r.idS = idS.item();
    r.fp = fp.item();
    r.srs = objective.item();
    if (use_pdc) {
      Tensor real;
      {
        NoGradGuard no_grad;
        real = pdc_.forward(batch.target);
      }
      const Tensor pdc = pdc_losses(pdc_.forward(sr_source), real).loss;
      r.pdc = pdc.item();
      objective = add(objective, pdc);
    }
    r.gen_total = objective.item();
    require_finite(r, iteration_, "pretrain");
    if (train_.check_isolation) {
      check_no_grads(pdc_.params(), "pretrain R update");
    }
    ParamStore before_pdc;
    if (train_.check_isolation) before_pdc = snapshot(pdc_.params());
    if (objective.requires_grad()) objective.backward();
    if (train_.check_isolation) {
      check_no_grads(pdc_.params(), "pretrain R update");
      check_no_grads(model_.seg_head(), "pretrain R update");
      check_no_grads(odc_.params(), "pretrain R update");
    }
    update(theta_r, pre_r_opt_);
    if (train_.check_isolation) check_unchanged(before_pdc, pdc_.params(), "pretrain R update");
  }
  if (use_pdc) {
    ParamStore before_r;
    if (train_.check_isolation) before_r = snapshot(theta_r);
    const Tensor inv = pdc_losses(pdc_.forward(sr_source.detach()), pdc_.forward(batch.target)).inverse;
    r.pdc_inv = inv.item();
    r.disc_total = r.pdc_inv;
    require_finite(r, iteration_, "pretrain");
    inv.backward();
    if (train_.check_isolation) check_no_grads(model_.generator_params(), "pretrain PDC update");
    update(pdc_.params(), pre_pdc_opt_);
    if (train_.check_isolation) check_unchanged(before_r, theta_r, "pretrain PDC update");
  }
  return r;
}

LossReport Trainer::adversarial_step(const TrainingBatch& batch) {
  const AdversarialFlags flags = train_.flags;
  ParamStore gen = model_.generator_params();
  LossReport r;

  // PDC scores of the real crops do not depend on the generator; one graph
  // serves the generator loss value and the first classifier update.
  Tensor true_scores;
  if (flags.use_pdc) true_scores = pdc_.forward(batch.target);

  GeneratorPass g;
  {
    FreezeGuard freeze_pdc(pdc_.params());
    FreezeGuard freeze_odc(odc_.params());
    g = generator_pass(model_, pdc_, odc_, batch, train_.weights, flags, flags.use_pdc ? &true_scores : nullptr);
    r.seg = g.seg.item();
    r.idT = g.idT.item();
    r.idS = g.idS.item();
    r.fp = g.fp.item();
    r.srs = g.srs.item();
    r.pdc = value(g.pdc);
    r.odc = value(g.odc);
    r.gen_total = g.total.item();
    require_finite(r, iteration_, "main");

    ParamStore before_d;
    if (train_.check_isolation) {
      before_d = snapshot(pdc_.params());
      before_d.merge(snapshot(odc_.params()));
    }
    g.total.backward();
    if (train_.check_isolation) {
      check_no_grads(pdc_.params(), "generator update");
      check_no_grads(odc_.params(), "generator update");
      check_no_grads(model_.perceptual().params(), "generator update");
    }
    update(gen, gen_opt_);
    if (train_.check_isolation) {
      ParamStore after_d = pdc_.params();
      after_d.merge(odc_.params());
      check_unchanged(before_d, after_d, "generator update");
    }
  }

  if (!flags.use_pdc && !flags.use_odc) return r;
  const Tensor fake_image = g.forward.sr_source.image.detach();
  const Tensor prob_source = g.forward.prob_source.detach();
  const Tensor prob_target = g.forward.prob_target.detach();
  for (int k = 0; k < train_.disc_updates; ++k) {
    ParamStore before_g;
    if (train_.check_isolation) before_g = snapshot(gen);
    Tensor pdc_inv, odc_inv;
    if (flags.use_pdc) {
      const Tensor real = k == 0 ? true_scores : pdc_.forward(batch.target);
      pdc_inv = pdc_losses(pdc_.forward(fake_image), real).inverse;
    }
    if (flags.use_odc) odc_inv = odc_losses(odc_, prob_source, prob_target).inverse;
    const Tensor disc = discriminator_objective(pdc_inv, odc_inv, flags);
    if (k == 0) {
      r.pdc_inv = value(pdc_inv);
      r.odc_inv = value(odc_inv);
      r.disc_total = disc.item();
      require_finite(r, iteration_, "main");
    }
    disc.backward();
    if (train_.check_isolation) check_no_grads(gen, "classifier update");
    if (flags.use_pdc) update(pdc_.params(), pdc_opt_);
    if (flags.use_odc) update(odc_.params(), odc_opt_);
    if (train_.check_isolation) check_unchanged(before_g, gen, "classifier update");
  }
  return r;
}

LossReport Trainer::step(const TrainingBatch& batch) {
  LossReport r = in_pretrain() ? pretrain_step(batch) : adversarial_step(batch);
  ++iteration_;
  return r;
}

namespace {

void put_store(Checkpoint& c, const ParamStore& store) {
  for (const auto& [name, t] : store) c.arrays[name] = t.detach();
}

void put_adam(Checkpoint& c, const std::string& label, const AdamState& s) {
  c.integers["adam." + label + ".step"] = s.step;
  for (const auto& [name, t] : s.first_moment) c.arrays["adam." + label + ".m." + name] = t;
  for (const auto& [name, t] : s.second_moment) c.arrays["adam." + label + ".v." + name] = t;
}

}  // namespace

Checkpoint Trainer::to_checkpoint(const std::string& config_json) const {
  Checkpoint c;
  c.config_json = config_json;
  c.iteration = iteration_;
  put_store(c, model_.extractor());
  put_store(c, model_.decoder());
  put_store(c, model_.seg_head());
  put_store(c, model_.perceptual().params());
  put_store(c, pdc_.params());
  put_store(c, odc_.params());
  put_adam(c, "pre_r", pre_r_opt_);
  put_adam(c, "pre_pdc", pre_pdc_opt_);
  put_adam(c, "gen", gen_opt_);
  put_adam(c, "pdc", pdc_opt_);
  put_adam(c, "odc", odc_opt_);
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  // Everything is checked before anything is written.
  std::map<std::string, Tensor*> params;
  auto collect = [&](ParamStore& store) {
    for (auto& [name, t] : store) params[name] = &t;
  };
  collect(model_.extractor());
  collect(model_.decoder());
  collect(model_.seg_head());
  collect(model_.perceptual().params());
  collect(pdc_.params());
  collect(odc_.params());
  std::map<std::string, AdamState*> opts{{"pre_r", &pre_r_opt_}, {"pre_pdc", &pre_pdc_opt_}, {"gen", &gen_opt_},
                                         {"pdc", &pdc_opt_}, {"odc", &odc_opt_}};

  auto mismatch = [](const std::string& name, const Shape& want, const Shape& got) {
    return CheckpointError(CheckpointErrorKind::kShapeMismatch, "checkpoint array '" + name + "' has shape " + got.str() +
                                                                    " but the configured model expects " + want.str());
  };
  struct Moment {
    AdamState* state;
    bool second;
    std::string param;
    const Tensor* value;
  };
  std::vector<Moment> moments;
  for (const auto& [name, t] : c.arrays) {
    const auto p = params.find(name);
    if (p != params.end()) {
      if (t.shape() != p->second->shape()) throw mismatch(name, p->second->shape(), t.shape());
      if (t.dtype() != p->second->dtype()) {
        throw CheckpointError(CheckpointErrorKind::kDtypeMismatch, "checkpoint array '" + name + "' is " +
                                                                       dtype_name(t.dtype()) + ", expected " +
                                                                       dtype_name(p->second->dtype()));
      }
      continue;
    }
    bool matched = false;
    for (auto& [label, state] : opts) {
      for (const char* kind : {".m.", ".v."}) {
        const std::string prefix = "adam." + label + kind;
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string param = name.substr(prefix.size());
        const auto q = params.find(param);
        if (q == params.end()) break;
        if (t.shape() != q->second->shape()) throw mismatch(name, q->second->shape(), t.shape());
        moments.push_back({state, kind[1] == 'v', param, &t});
        matched = true;
      }
      if (matched) break;
    }
    if (!matched) {
      throw CheckpointError(CheckpointErrorKind::kUnknownArray, "checkpoint array '" + name + "' is not part of the configured model");
    }
  }
  for (const auto& [name, p] : params) {
    if (!c.arrays.count(name)) {
      throw CheckpointError(CheckpointErrorKind::kMissingArray, "checkpoint lacks array '" + name + "'");
    }
  }
  for (const auto& [name, v] : c.integers) {
    bool known = false;
    for (auto& [label, state] : opts) known = known || name == "adam." + label + ".step";
    if (!known) throw CheckpointError(CheckpointErrorKind::kUnknownArray, "checkpoint integer '" + name + "' is not recognised");
  }

  for (const auto& [name, p] : params) {
    const Tensor& src = c.arrays.at(name);
    const bool grad = p->requires_grad();
    *p = src.clone();
    p->set_requires_grad(grad);
  }
  // The stores hold copies of the handles; rebind them through the maps.
  for (auto& [label, state] : opts) {
    state->step = c.integers.count("adam." + label + ".step") ? c.integers.at("adam." + label + ".step") : 0;
    state->first_moment.clear();
    state->second_moment.clear();
  }
  for (const auto& m : moments) {
    (m.second ? m.state->second_moment : m.state->first_moment)[m.param] = m.value->clone();
  }
  iteration_ = c.iteration;
}

std::string metrics_row(std::int64_t iter, const char* phase, const LossReport& r) {
  std::string row = std::to_string(iter);
  row += ',';
  row += phase;
  for (std::size_t i = 0; i < LossReport::kNames.size(); ++i) {
    if (LossReport::kNames[i] == "srs") continue;
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, r.get(LossReport::kNames[i]));
    row += ',';
    row.append(buf, res.ptr);
  }
  return row;
}

TrainingResult run_training(const TrainingRun& run, const DomainDataset& dataset,
                            const std::function<void(std::int64_t, const LossReport&)>& on_step) {
  run.model.validate();
  run.train.validate();
  run.crop.validate(run.model.scale);
  if (dataset.num_classes() != run.model.num_classes) {
    throw ValidationError("dataset has " + std::to_string(dataset.num_classes()) + " classes but model.num_classes is " +
                          std::to_string(run.model.num_classes));
  }
  std::error_code ec;
  fs::create_directories(run.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + run.out_dir + "': " + ec.message());

  Trainer trainer(run.model, run.train);
  if (!run.resume.empty()) trainer.restore(load_checkpoint(run.resume));

  TrainingResult result;
  result.metrics_path = (fs::path(run.out_dir) / "metrics.csv").string();
  std::vector<std::string> kept;
  if (trainer.iteration() > 0 && fs::exists(result.metrics_path)) {
    std::ifstream in(result.metrics_path);
    std::string line;
    std::getline(in, line);
    while (static_cast<std::int64_t>(kept.size()) < trainer.iteration() && std::getline(in, line)) kept.push_back(line);
  }
  std::ofstream csv(result.metrics_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write metrics file '" + result.metrics_path + "'");
  csv << kMetricsHeader << '\n';
  for (const auto& line : kept) csv << line << '\n';

  auto save = [&](const std::string& file) {
    const std::string path = (fs::path(run.out_dir) / file).string();
    save_checkpoint(trainer.to_checkpoint(run.config_json), path);
    return path;
  };

  const std::int64_t total = run.train.pretrain_iters + run.train.main_iters;
  while (trainer.iteration() < total) {
    const std::int64_t iter = trainer.iteration();
    Rng rng(derive_seed(run.train.seed, kBatchStream, static_cast<std::uint64_t>(iter)));
    const TrainingBatch batch = sample_training_batch(dataset, run.crop, run.train.batch_size, rng);
    const char* phase = trainer.in_pretrain() ? "pretrain" : "main";
    result.last = trainer.step(batch);
    csv << metrics_row(iter, phase, result.last) << '\n';
    if (!csv) throw IoError("cannot write metrics file '" + result.metrics_path + "'");
    if (on_step) on_step(iter, result.last);
    if (run.train.checkpoint_every > 0 && trainer.iteration() % run.train.checkpoint_every == 0 &&
        trainer.iteration() < total) {
      save("checkpoint_" + std::to_string(trainer.iteration()) + ".srda");
    }
  }
  csv.flush();
  result.iterations = trainer.iteration();
  result.checkpoint_path = save("checkpoint_final.srda");
  return result;
}

}  // namespace srda
