// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "osdg/autograd.hpp"
#include "osdg/style_uncertainty.hpp"
#include "osdg/tensor.hpp"

namespace osdg::model {

/// Encoder geometry. Stage i (1-based, tag "stage<i>") is
/// conv3x3 -> batch norm -> ReLU -> 2x2 max pool with widths[i-1] channels.
struct ModelConfig {
  int in_channels = 3;
  std::vector<int> widths = {32, 64, 128};
  int num_classes = 4;

  bool operator==(const ModelConfig&) const = default;
};

/// Global uncertainty state for every GPSA injection point, keyed by stage tag.
using GpsaStates = std::map<std::string, style::GlobalUncertainty>;

struct ForwardOptions {
  style::Mode mode = style::Mode::eval;
  bool use_gpsa = false;
  double gpsa_prob = 0.5;
  /// Train-mode batch norm folds batch statistics into its running buffers.
  bool update_bn_stats = true;
};

template <typename T>
struct ForwardOutput {
  ag::Var<T> pre_pool;       // B x C' x H' x W', the final encoder map
  ag::Var<T> pooled;         // B x C'
  ag::Var<T> class_logits;   // B x K
  ag::Var<T> binary_logits;  // B x K x 2, (positive, negative) per head

  /// The K one-vs-all heads' logits as separate B x 2 tensors.
  std::vector<Tensor<T>> binary_logit_list() const;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Feature encoder, multi-class head and K one-vs-all binary heads. The
/// parameter leaves are owned by the model; copies are made through
/// state()/load_state().
template <typename T>
class Model {
 public:
  /// Throws ConfigError if a GPSA stage tag does not name an encoder stage.
  Model(ModelConfig cfg, std::vector<std::string> gpsa_stages, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// GPSA runs after each configured stage iff mode is train and use_gpsa is
  /// set; it then reads and updates `gpsa`, which must hold an entry per
  /// configured stage. Eval mode never touches `gpsa` or `rng`.
  ForwardOutput<T> forward(const Tensor<T>& images, const ForwardOptions& opts, GpsaStates& gpsa,
                           style::Rng& rng);

  /// Fresh zero-initialised uncertainty state for the configured stages.
  GpsaStates make_gpsa_states(double alpha) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  const std::vector<std::string>& gpsa_stages() const noexcept { return gpsa_stages_; }
  std::vector<std::string> stage_tags() const;
  int feature_dim() const { return cfg_.widths.back(); }

  /// Trainable leaves in a fixed order.
  std::vector<std::pair<std::string, ag::Var<T>>>& parameters() noexcept { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  /// Parameters followed by batch-norm running buffers.
  std::vector<NamedTensor<T>> state() const;
  /// Throws ShapeError/DataError on a name or shape mismatch.
  void load_state(const std::vector<NamedTensor<T>>& state);

 private:
  struct Stage {
    std::string tag;
    ag::Var<T> conv_w, conv_b, bn_gamma, bn_beta;
    Tensor<T> running_mean, running_var;
  };

  ModelConfig cfg_;
  std::vector<std::string> gpsa_stages_;
  std::vector<Stage> stages_;
  ag::Var<T> multi_w_, multi_b_, binary_w_, binary_b_;
  std::vector<std::pair<std::string, ag::Var<T>>> params_;
};

}  // namespace osdg::model
