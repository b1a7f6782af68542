// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/types.hpp"

#include "osdg/error.hpp"

namespace osdg {

std::optional<int> LabelSpace::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string LabelSpace::name_of(int id) const {
  if (id == unknown_token()) return "unknown";
  if (!is_known(id)) throw DataError("class id " + std::to_string(id) + " outside label space");
  return names_[static_cast<std::size_t>(id)];
}

LabelSpace make_label_space(const std::vector<std::string>& class_names) {
  if (class_names.size() < 2)
    throw ConfigError("label space needs at least 2 known classes, got " +
                      std::to_string(class_names.size()));
  LabelSpace ls;
  for (const auto& name : class_names) {
    if (name.empty()) throw ConfigError("empty class name in label space");
    if (!ls.ids_.emplace(name, static_cast<int>(ls.names_.size())).second)
      throw ConfigError("duplicate class name in label space: " + name);
    ls.names_.push_back(name);
  }
  return ls;
}

template <typename T>
FeatureMap<T>::FeatureMap(Tensor<T> d, std::string tag) : data(std::move(d)), stage_tag(std::move(tag)) {
  if (data.rank() != 4) throw ShapeError("feature map must be rank 4, got " + shape_str(data.shape()));
  if (data.dim(0) < 1 || data.dim(1) < 1 || data.dim(2) * data.dim(3) < 1)
    throw ShapeError("feature map has an empty dimension: " + shape_str(data.shape()));
  if (!data.all_finite()) throw NumericError("feature map '" + stage_tag + "' has non-finite entries");
}

template struct FeatureMap<float>;
template struct FeatureMap<double>;

}  // namespace osdg
