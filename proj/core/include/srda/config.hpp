#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srda/dataset.hpp"
#include "srda/models.hpp"
#include "srda/train.hpp"

namespace srda {

struct EvalConfig {
  std::string split = "val";
  bool psnr = true;
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

// The four sections of a run configuration file: model, data, train, eval.
struct RunConfig {
  ModelConfig model;
  SynthConfig data;  // data.scale mirrors model.scale
  std::string data_root;
  CropSpec crop;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys take built-in defaults; unknown keys raise ValidationError.
RunConfig config_from_json(const nlohmann::json& j);

// Applies "section.key=value"; the value is parsed as JSON when possible and
// taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Built-in defaults, then the file (if any), then the overrides in order.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace srda
