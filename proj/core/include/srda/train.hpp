#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "srda/adam.hpp"
#include "srda/checkpoint.hpp"
#include "srda/dataset.hpp"
#include "srda/losses.hpp"
#include "srda/models.hpp"

namespace srda {

struct TrainConfig {
  LossWeights weights;
  double lr_pretrain = 2e-4;
  double lr_main = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::int64_t batch_size = 4;
  std::int64_t pretrain_iters = 300;
  std::int64_t main_iters = 1200;
  AdversarialFlags flags;
  // Include L_PDC in the pretraining objective and train the PDC alongside.
  bool pretrain_pdc = true;
  // Discriminator updates per generator update.
  int disc_updates = 1;
  // Write checkpoint_<iter>.srda every this many iterations; 0 disables.
  std::int64_t checkpoint_every = 0;
  // Assert on every step that no update leaks gradients across networks.
  bool check_isolation = false;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Everything one generator pass over a batch produces.
struct GeneratorPass {
  SrsForward forward;
  Tensor idT;
  Tensor perceptual;
  Tensor fp;
  Tensor idS;
  Tensor seg;
  Tensor srs;
  Tensor pdc;  // undefined when disabled
  Tensor odc;  // undefined when disabled
  Tensor total;
};

// L_SRS plus the enabled adversarial terms on one batch. true_scores, when
// given, are PDC scores of the target crops to reuse.
GeneratorPass generator_pass(const SrsModel& model, const PdcModel& pdc, const OdcModel& odc,
                             const TrainingBatch& batch, const LossWeights& weights, const AdversarialFlags& flags,
                             const Tensor* true_scores = nullptr);

// Converts every tensor of a batch.
TrainingBatch batch_to(const TrainingBatch& batch, DType dtype);

class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train);

  SrsModel& model() { return model_; }
  const SrsModel& model() const { return model_; }
  PdcModel& pdc() { return pdc_; }
  const PdcModel& pdc() const { return pdc_; }
  OdcModel& odc() { return odc_; }
  const OdcModel& odc() const { return odc_; }
  const TrainConfig& config() const { return train_; }

  std::int64_t iteration() const { return iteration_; }
  bool in_pretrain() const { return iteration_ < train_.pretrain_iters; }

  // One optimisation of theta_R = E and R on beta (L_idT + L_idS) + L_PDC,
  // then one PDC update on L_PDC_inv. Does not advance the iteration.
  LossReport pretrain_step(const TrainingBatch& batch);
  // Generator update on the full objective with the classifiers frozen, then
  // classifier updates on detached generator outputs.
  LossReport adversarial_step(const TrainingBatch& batch);
  // Runs the step matching the current phase and advances the iteration.
  LossReport step(const TrainingBatch& batch);

  Checkpoint to_checkpoint(const std::string& config_json) const;
  // Loads parameters, optimiser state and the iteration. Unknown, missing or
  // differently shaped arrays raise CheckpointError.
  void restore(const Checkpoint& checkpoint);

 private:
  void update(ParamStore& params, AdamState& state);
  void check_no_grads(const ParamStore& params, const char* during) const;

  ModelConfig model_config_;
  TrainConfig train_;
  SrsModel model_;
  PdcModel pdc_;
  OdcModel odc_;
  AdamState pre_r_opt_;
  AdamState pre_pdc_opt_;
  AdamState gen_opt_;
  AdamState pdc_opt_;
  AdamState odc_opt_;
  std::int64_t iteration_ = 0;
};

inline constexpr const char* kMetricsHeader = "iter,phase,seg,idT,idS,fp,pdc,pdc_inv,odc,odc_inv,gen_total,disc_total";

std::string metrics_row(std::int64_t iter, const char* phase, const LossReport& r);

struct TrainingRun {
  ModelConfig model;
  TrainConfig train;
  CropSpec crop;
  std::string config_json;  // stored in every checkpoint
  std::string out_dir;
  std::string resume;       // checkpoint path, empty for a fresh start
};

struct TrainingResult {
  std::int64_t iterations = 0;
  std::string metrics_path;
  std::string checkpoint_path;
  LossReport last;
};

// Pretraining then adversarial training, appending one metrics row per
// iteration to <out>/metrics.csv and writing <out>/checkpoint_final.srda.
// Resuming keeps the first `iteration` rows of an existing metrics file.
TrainingResult run_training(const TrainingRun& run, const DomainDataset& dataset,
                            const std::function<void(std::int64_t, const LossReport&)>& on_step = {});

}  // namespace srda
