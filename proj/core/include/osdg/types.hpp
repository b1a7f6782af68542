// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "osdg/tensor.hpp"

namespace osdg {

using Image = Tensor<float>;  // C x H x W, values in [0, 1] before normalization
using Mask = Tensor<float>;   // H x W, 1 = foreground

/// The source label space. Known ids are dense 0..size()-1; the id size() is
/// reserved for the collapsed unknown class and only appears at evaluation.
class LabelSpace {
 public:
  LabelSpace() = default;

  const std::vector<std::string>& known_classes() const noexcept { return names_; }
  int size() const noexcept { return static_cast<int>(names_.size()); }
  int unknown_token() const noexcept { return size(); }

  std::optional<int> id_of(const std::string& name) const;
  /// Class name for a known id, or "unknown" for the unknown token.
  std::string name_of(int id) const;
  bool is_known(int id) const noexcept { return id >= 0 && id < size(); }

  bool operator==(const LabelSpace& o) const { return names_ == o.names_; }

 private:
  friend LabelSpace make_label_space(const std::vector<std::string>&);
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

/// Builds a label space assigning ids in list order. Throws ConfigError on
/// duplicate names or fewer than two classes.
LabelSpace make_label_space(const std::vector<std::string>& class_names);

/// One labeled image. `label` is a known id for source samples and may be the
/// unknown token for target samples.
struct SampleRecord {
  std::string id;          // stable identifier, e.g. "<domain>/<class>/<stem>"
  Image image;             // 3 x H x W in [0, 1]
  int label = -1;
  std::string class_name;  // original class directory name
  std::string domain;
  std::optional<Mask> mask;   // H x W, binary
  std::optional<Image> edge;  // cached edge map, same shape as image
};

/// Rank-4 feature tensor B x C x H x W tagged with the encoder stage that made it.
template <typename T>
struct FeatureMap {
  Tensor<T> data;
  std::string stage_tag;

  FeatureMap() = default;
  FeatureMap(Tensor<T> d, std::string tag);

  int batch() const { return data.dim(0); }
  int channels() const { return data.dim(1); }
  int height() const { return data.dim(2); }
  int width() const { return data.dim(3); }
};

/// The per-step loss report. Invariant: total == ce + lambda1*eova + lambda2*kd.
struct LossBreakdown {
  double ce = 0.0;
  double kd = 0.0;
  double eova = 0.0;
  double total = 0.0;
  bool operator==(const LossBreakdown&) const = default;
};

}  // namespace osdg
