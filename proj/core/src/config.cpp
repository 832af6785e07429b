#include "srda/config.hpp"

#include <fstream>
#include <set>

#include "srda/error.hpp"

namespace srda {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  data.validate();
  crop.validate(model.scale);
  train.validate();
  if (data.scene.num_classes() != model.num_classes) {
    throw ValidationError("data.classes lists " + std::to_string(data.scene.num_classes()) +
                          " classes but model.num_classes is " + std::to_string(model.num_classes));
  }
  if (eval.split.empty()) throw ValidationError("eval.split must not be empty");
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = {{"num_classes", c.model.num_classes},
                {"scale_ratio", c.model.scale.str()},
                {"base_channels", c.model.base_channels},
                {"aspp_dilations", c.model.aspp_dilations}};
  std::vector<std::string> classes;
  for (auto k : c.data.scene.classes) classes.emplace_back(object_kind_name(k));
  j["data"] = {{"root", c.data_root},
               {"canvas_px", c.data.scene.canvas_px},
               {"classes", classes},
               {"buildings", c.data.scene.buildings},
               {"roads", c.data.scene.roads},
               {"cars", c.data.scene.cars},
               {"vegetation", c.data.scene.vegetation},
               {"source_scenes", c.data.source_scenes},
               {"target_scenes", c.data.target_scenes},
               {"eval_scenes", c.data.eval_scenes},
               {"gsd_target", c.data.gsd_target},
               {"seed", c.data.seed},
               {"source_crop", c.crop.source_crop},
               {"target_crop", c.crop.target_crop},
               {"eval_tile", c.crop.eval_tile},
               {"eval_resize", c.crop.eval_resize}};
  const TrainConfig& t = c.train;
  j["train"] = {{"alpha", t.weights.alpha},
                {"beta", t.weights.beta},
                {"lr_pretrain", t.lr_pretrain},
                {"lr_main", t.lr_main},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"batch_size", t.batch_size},
                {"pretrain_iters", t.pretrain_iters},
                {"main_iters", t.main_iters},
                {"use_pdc", t.flags.use_pdc},
                {"use_odc", t.flags.use_odc},
                {"pretrain_pdc", t.pretrain_pdc},
                {"disc_updates", t.disc_updates},
                {"checkpoint_every", t.checkpoint_every},
                {"check_isolation", t.check_isolation},
                {"seed", t.seed}};
  j["eval"] = {{"split", c.eval.split}, {"psnr", c.eval.psnr}};
  return j;
}

namespace {

class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    const json& s = root.at(name_);
    if (!s.is_object()) throw ValidationError("config section '" + name_ + "' must be an object");
    j_ = &s;
  }

  template <typename T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (!j_ || !j_->contains(key)) return;
    try {
      out = j_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config key '" + name_ + "." + key + "' has the wrong type (got " +
                            std::string(j_->at(key).type_name()) + ")");
    }
  }

  const json* raw(const char* key) {
    known_.insert(key);
    if (!j_ || !j_->contains(key)) return nullptr;
    return &j_->at(key);
  }

  std::string key(const char* k) const { return name_ + "." + k; }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (!known_.count(k)) throw ValidationError("unknown config key '" + name_ + "." + k + "'");
    }
  }

 private:
  std::string name_;
  const json* j_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "model" && k != "data" && k != "train" && k != "eval") {
      throw ValidationError("unknown config section '" + k + "' (expected model, data, train, eval)");
    }
  }
  RunConfig c;
  {
    Section s(j, "model");
    s.read("num_classes", c.model.num_classes);
    if (const json* r = s.raw("scale_ratio")) {
      if (r->is_string()) {
        c.model.scale = ScaleRatio::parse(r->get<std::string>());
      } else if (r->is_number()) {
        c.model.scale = ScaleRatio::parse(r->dump());
      } else {
        throw ValidationError("config key 'model.scale_ratio' must be a number or a string such as \"10/3\"");
      }
    }
    s.read("base_channels", c.model.base_channels);
    s.read("aspp_dilations", c.model.aspp_dilations);
    s.finish();
  }
  {
    Section s(j, "data");
    s.read("root", c.data_root);
    s.read("canvas_px", c.data.scene.canvas_px);
    if (const json* cls = s.raw("classes")) {
      if (!cls->is_array()) throw ValidationError("config key 'data.classes' must be an array of names");
      c.data.scene.classes.clear();
      for (const auto& name : *cls) {
        if (!name.is_string()) throw ValidationError("config key 'data.classes' must be an array of names");
        c.data.scene.classes.push_back(parse_object_kind(name.get<std::string>()));
      }
    }
    s.read("buildings", c.data.scene.buildings);
    s.read("roads", c.data.scene.roads);
    s.read("cars", c.data.scene.cars);
    s.read("vegetation", c.data.scene.vegetation);
    s.read("source_scenes", c.data.source_scenes);
    s.read("target_scenes", c.data.target_scenes);
    s.read("eval_scenes", c.data.eval_scenes);
    s.read("gsd_target", c.data.gsd_target);
    s.read("seed", c.data.seed);
    s.read("source_crop", c.crop.source_crop);
    s.read("target_crop", c.crop.target_crop);
    s.read("eval_tile", c.crop.eval_tile);
    s.read("eval_resize", c.crop.eval_resize);
    s.finish();
  }
  {
    Section s(j, "train");
    TrainConfig& t = c.train;
    s.read("alpha", t.weights.alpha);
    s.read("beta", t.weights.beta);
    s.read("lr_pretrain", t.lr_pretrain);
    s.read("lr_main", t.lr_main);
    s.read("beta1", t.beta1);
    s.read("beta2", t.beta2);
    s.read("batch_size", t.batch_size);
    s.read("pretrain_iters", t.pretrain_iters);
    s.read("main_iters", t.main_iters);
    s.read("use_pdc", t.flags.use_pdc);
    s.read("use_odc", t.flags.use_odc);
    s.read("pretrain_pdc", t.pretrain_pdc);
    s.read("disc_updates", t.disc_updates);
    s.read("checkpoint_every", t.checkpoint_every);
    s.read("check_isolation", t.check_isolation);
    s.read("seed", t.seed);
    s.finish();
  }
  {
    Section s(j, "eval");
    s.read("split", c.eval.split);
    s.read("psnr", c.eval.psnr);
    s.finish();
  }
  c.data.scale = c.model.scale;
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq) {
    throw ValidationError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  if (!j.contains(section)) j[section] = json::object();
  if (!j[section].is_object()) throw ValidationError("config section '" + section + "' must be an object");
  j[section][key] = value;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ValidationError("config file '" + path + "' is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace srda
