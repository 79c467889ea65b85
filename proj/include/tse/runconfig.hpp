// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_RUNCONFIG_HPP_
#define TSE_RUNCONFIG_HPP_

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "tse/network.hpp"
#include "tse/train.hpp"

namespace tse {

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.alpha = j.value("alpha", c.alpha);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"batch_size", c.batch_size},
       {"max_epochs", c.max_epochs},
       {"grad_clip", c.grad_clip},
       {"patience", c.patience},
       {"seed", c.seed},
       {"alpha", c.alpha}};
}

// Everything one run needs: model + training settings + dataset location.
// File values override the defaults; CLI flags override the file.
struct RunConfig {
  NetConfig model;
  TrainConfig train;
  std::string data_dir = "data";
  std::string train_manifest = "train.tsv";
  std::string val_manifest = "val.tsv";
  std::string test_manifest = "test.tsv";
};

namespace detail {
inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& allowed,
                                const std::string& section) {
  if (!j.is_object())
    throw std::invalid_argument("config: section '" + section +
                                "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + key +
                                  "' in section '" + section + "'");
}
}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"model", "train", "data"}, "top level");
  RunConfig cfg;
  if (j.contains("model")) {
    detail::reject_unknown_keys(
        j.at("model"),
        {"embed_channels", "kernel", "stride", "bottleneck", "hidden",
         "block_kernel", "blocks_per_repeat", "repeats", "sample_rate",
         "adaptation", "asa", "channels", "num_speakers"},
        "model");
    if (j.at("model").contains("asa"))
      detail::reject_unknown_keys(
          j.at("model").at("asa"),
          {"pool_size", "residual", "sqrt_scale", "pooling"}, "model.asa");
    cfg.model = j.at("model").get<NetConfig>();
  }
  if (j.contains("train")) {
    detail::reject_unknown_keys(
        j.at("train"),
        {"lr", "beta1", "beta2", "adam_eps", "batch_size", "max_epochs",
         "grad_clip", "patience", "seed", "alpha"},
        "train");
    cfg.train = j.at("train").get<TrainConfig>();
  }
  if (j.contains("data")) {
    detail::reject_unknown_keys(j.at("data"), {"dir", "train", "val", "test"},
                                "data");
    const auto& d = j.at("data");
    cfg.data_dir = d.value("dir", cfg.data_dir);
    cfg.train_manifest = d.value("train", cfg.train_manifest);
    cfg.val_manifest = d.value("val", cfg.val_manifest);
    cfg.test_manifest = d.value("test", cfg.test_manifest);
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream fs(path);
  if (!fs) throw std::invalid_argument("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    fs >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: '" + path + "' is not valid JSON: " +
                                e.what());
  }
  return parse_run_config(j);
}

}  // namespace tse

#endif  // TSE_RUNCONFIG_HPP_
