#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "attrnet/crop.hpp"
#include "attrnet/manifest.hpp"
#include "attrnet/model.hpp"
#include "attrnet/train.hpp"

namespace attrnet {

/// Everything a training run reads: hyperparameters, crop rule,
/// augmentation, split and architecture. Loaded from a JSON document whose
/// top-level sections are train, crop, augment, split and architecture;
/// command-line flags override individual fields afterwards.
struct RunConfig {
  TrainConfig train;
  std::vector<std::string> attributes;
  unsigned jobs = 1;
  CropRule crop;
  SplitSpec split;
  std::string preset = "small";
  ArchitectureConfig arch = small_preset();
  /// Square input side; 0 means the preset default.
  std::size_t input_size = 0;

  std::size_t resolved_input_size() const {
    if (input_size) return input_size;
    return preset == "small" || preset == "custom" ? 32 : 224;
  }

  void set_preset(const std::string& name) {
    if (name == "small") arch = small_preset();
    else if (name == "resnet18") arch = resnet_preset(18);
    else if (name == "resnet34") arch = resnet_preset(34);
    else if (name == "resnet50") arch = resnet_preset(50);
    else if (name != "custom") throw ConfigError("unknown preset: " + name + " (use small, resnet18, resnet34, resnet50 or custom)");
    preset = name;
  }

  void validate() const {
    train.validate();
    if (jobs == 0) throw ConfigError("jobs must be >= 1");
    try {
      crop.validate();
      split.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    if (preset == "custom" && arch.stages.empty() && !arch.stem) throw ConfigError("custom architecture has no layers");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.contains(it.key())) throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
}

template <class V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

inline StemSpec stem_from_json(const nlohmann::json& j) {
  check_keys(j, "architecture.stem", {"channels", "kernel", "stride", "pad", "pool"});
  StemSpec s;
  read_opt(j, "channels", s.channels);
  read_opt(j, "kernel", s.kernel);
  read_opt(j, "stride", s.stride);
  read_opt(j, "pad", s.pad);
  if (j.contains("pool")) {
    if (j["pool"].is_null()) {
      s.pool.reset();
    } else {
      check_keys(j["pool"], "architecture.stem.pool", {"kernel", "stride", "pad"});
      PoolSpec p;
      read_opt(j["pool"], "kernel", p.kernel);
      read_opt(j["pool"], "stride", p.stride);
      read_opt(j["pool"], "pad", p.pad);
      s.pool = p;
    }
  }
  return s;
}

inline nlohmann::json to_json(const StemSpec& s) {
  nlohmann::json j{{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride}, {"pad", s.pad}};
  j["pool"] = s.pool ? nlohmann::json{{"kernel", s.pool->kernel}, {"stride", s.pool->stride}, {"pad", s.pool->pad}}
                     : nlohmann::json(nullptr);
  return j;
}

}  // namespace detail

/// Applies a config document on top of `cfg`. Unknown keys are errors.
inline void apply_config(RunConfig& cfg, const nlohmann::json& doc) {
  using detail::check_keys;
  using detail::read_opt;
  try {
    check_keys(doc, "<root>", {"train", "crop", "augment", "split", "architecture"});
    if (doc.contains("train")) {
      const auto& t = doc["train"];
      check_keys(t, "train", {"epochs", "batch_size", "loss", "lr", "beta1", "beta2", "eps", "seed", "attributes", "jobs",
                              "dataset"});
      read_opt(t, "epochs", cfg.train.epochs);
      read_opt(t, "batch_size", cfg.train.batch_size);
      if (t.contains("loss")) cfg.train.loss = parse_loss_kind(t["loss"].get<std::string>());
      read_opt(t, "lr", cfg.train.adam.lr);
      read_opt(t, "beta1", cfg.train.adam.beta1);
      read_opt(t, "beta2", cfg.train.adam.beta2);
      read_opt(t, "eps", cfg.train.adam.eps);
      read_opt(t, "seed", cfg.train.seed);
      read_opt(t, "attributes", cfg.attributes);
      read_opt(t, "jobs", cfg.jobs);
      read_opt(t, "dataset", cfg.train.dataset);
    }
    if (doc.contains("crop")) {
      const auto& c = doc["crop"];
      check_keys(c, "crop", {"pad_left", "pad_right", "pad_top", "pad_bottom"});
      read_opt(c, "pad_left", cfg.crop.pad_left);
      read_opt(c, "pad_right", cfg.crop.pad_right);
      read_opt(c, "pad_top", cfg.crop.pad_top);
      read_opt(c, "pad_bottom", cfg.crop.pad_bottom);
    }
    if (doc.contains("augment")) {
      const auto& a = doc["augment"];
      check_keys(a, "augment", {"flip", "flip_prob", "shift", "max_shift", "zoom", "max_zoom"});
      auto& g = cfg.train.augment;
      read_opt(a, "flip", g.flip);
      read_opt(a, "flip_prob", g.flip_prob);
      read_opt(a, "shift", g.shift);
      read_opt(a, "max_shift", g.max_shift);
      read_opt(a, "zoom", g.zoom);
      read_opt(a, "max_zoom", g.max_zoom);
    }
    if (doc.contains("split")) {
      const auto& s = doc["split"];
      check_keys(s, "split", {"test_fraction", "val_fraction", "seed", "stratified"});
      read_opt(s, "test_fraction", cfg.split.test_fraction);
      read_opt(s, "val_fraction", cfg.split.val_fraction);
      read_opt(s, "seed", cfg.split.seed);
      read_opt(s, "stratified", cfg.split.stratified);
    }
    if (doc.contains("architecture")) {
      const auto& a = doc["architecture"];
      check_keys(a, "architecture", {"preset", "input_size", "stem", "stages"});
      if (a.contains("preset")) cfg.set_preset(a["preset"].get<std::string>());
      read_opt(a, "input_size", cfg.input_size);
      if (a.contains("stem") || a.contains("stages")) {
        if (cfg.preset != "custom") throw ConfigError("architecture.stem/stages require preset \"custom\"");
      }
      if (a.contains("stem")) {
        cfg.arch.stem = a["stem"].is_null() ? std::nullopt : std::optional<StemSpec>(detail::stem_from_json(a["stem"]));
      }
      if (a.contains("stages")) {
        cfg.arch.stages.clear();
        for (const auto& s : a["stages"]) {
          check_keys(s, "architecture.stages[]", {"kind", "blocks", "width", "stride"});
          StageConfig st;
          if (s.contains("kind")) st.kind = parse_block_kind(s["kind"].get<std::string>());
          read_opt(s, "blocks", st.blocks);
          read_opt(s, "width", st.width);
          read_opt(s, "stride", st.stride);
          cfg.arch.stages.push_back(st);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig cfg;
  apply_config(cfg, doc);
  return cfg;
}

/// Fully resolved configuration, in the same layout apply_config reads.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json train{{"epochs", c.train.epochs},   {"batch_size", c.train.batch_size}, {"lr", c.train.adam.lr},
             {"beta1", c.train.adam.beta1}, {"beta2", c.train.adam.beta2},       {"eps", c.train.adam.eps},
             {"seed", c.train.seed},        {"attributes", c.attributes},        {"jobs", c.jobs},
             {"dataset", c.train.dataset}};
  if (c.train.loss) train["loss"] = to_string(*c.train.loss);
  json stages = json::array();
  for (const auto& s : c.arch.stages)
    stages.push_back({{"kind", to_string(s.kind)}, {"blocks", s.blocks}, {"width", s.width}, {"stride", s.stride}});
  json arch{{"preset", c.preset}, {"input_size", c.resolved_input_size()}};
  if (c.preset == "custom") {
    arch["stem"] = c.arch.stem ? detail::to_json(*c.arch.stem) : json(nullptr);
    arch["stages"] = stages;
  }
  const auto& a = c.train.augment;
  return {{"train", train},
          {"crop",
           {{"pad_left", c.crop.pad_left},
            {"pad_right", c.crop.pad_right},
            {"pad_top", c.crop.pad_top},
            {"pad_bottom", c.crop.pad_bottom}}},
          {"augment",
           {{"flip", a.flip},
            {"flip_prob", a.flip_prob},
            {"shift", a.shift},
            {"max_shift", a.max_shift},
            {"zoom", a.zoom},
            {"max_zoom", a.max_zoom}}},
          {"split",
           {{"test_fraction", c.split.test_fraction},
            {"val_fraction", c.split.val_fraction},
            {"seed", c.split.seed},
            {"stratified", c.split.stratified}}},
          {"architecture", arch}};
}

}  // namespace attrnet
