#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "ratfm/datagen.hpp"
#include "ratfm/keyvalue.hpp"
#include "ratfm/model.hpp"

namespace ratfm {

/// Everything a command needs. Text form is key=value; unknown keys are rejected.
struct RunConfig {
  DatasetConfig data;
  ModelConfig model;
  RoadWeighting road_weighting = RoadWeighting::weighted;

  double learning_rate = 1e-3;
  double lr_decay = 0.5;
  std::size_t lr_patience = 3;  // epochs without validation improvement before decaying
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 0;  // 0 means one pass over the training split
  std::size_t max_steps = 0;        // 0 means no cap
  std::size_t val_samples = 0;      // 0 means the whole validation split
  double loss_epsilon = 1e-5;
  std::uint64_t seed = 1;
  bool clamp_nonneg = false;

  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoint";
  std::filesystem::path out_dir = "report";

  /// Keys set explicitly through apply().
  std::set<std::string> explicit_keys;

  /// Sets one key. Throws std::invalid_argument for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  void apply(const KeyValues& kv);
  KeyValues to_keyvalues() const;

  /// Enlarges the model to channels 128, radius 4.
  void use_paper_scale();

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ratfm
