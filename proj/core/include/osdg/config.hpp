// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace osdg {

/// Optimisation and method hyperparameters. Defaults follow the published
/// setup; `epochs` and `momentum` are not given there and use 50 and 0.9.
struct TrainConfig {
  int batch_size = 32;
  double lr = 0.001;
  double weight_decay = 0.0005;
  double momentum = 0.9;  // Nesterov
  double lr_decay_factor = 0.1;
  int lr_decay_every = 20;  // epochs
  int epochs = 50;
  double tau = 1.0;
  double lambda1 = 1.0;  // weight of the (edge) one-vs-all loss
  double lambda2 = 1.0;  // weight of the distillation loss
  double alpha = 0.8;    // momentum of the global uncertainty moving average
  double gpsa_prob = 0.5;
  std::vector<std::string> gpsa_stages = {"stage1", "stage2"};
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

/// Checks every range invariant and returns the config unchanged when valid.
/// Throws ConfigError naming the first offending field.
TrainConfig validate_config(TrainConfig cfg);

/// Learning rate in effect during `epoch` (0-based) under step decay.
double scheduled_lr(const TrainConfig& cfg, int epoch);

using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are an error.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_value_file(const std::filesystem::path& path);

/// Moves every TrainConfig key found in `kv` into `cfg` and erases it from `kv`.
void apply_train_keys(TrainConfig& cfg, KeyValues& kv);

/// Canonical flat serialization; parse_key_values + apply_train_keys inverts it.
std::string to_key_values(const TrainConfig& cfg);

/// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace osdg
