// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "osdg/config.hpp"
#include "osdg/data.hpp"
#include "osdg/model.hpp"
#include "osdg/types.hpp"

namespace osdg {

/// Everything needed to rebuild a trained model and evaluate it.
struct Checkpoint {
  TrainConfig config;
  std::string switches;  // free-form record of the active ablation switches
  LabelSpace labels;
  model::ModelConfig model;
  data::Normalization normalization;
  model::GpsaStates gpsa;
  std::vector<model::NamedTensor<float>> state;
  int epoch = 0;  // epochs completed when the snapshot was taken
};

/// Binary file: an 8-byte magic, a little-endian u64 header length, a JSON
/// header and then the raw float32 tensors in header order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws DataError on a malformed file, a config hash mismatch, or (when
/// `expected_labels` is given) a different class list.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<LabelSpace>& expected_labels = std::nullopt);

/// A model carrying the checkpoint's parameters and running statistics.
model::Model<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace osdg
