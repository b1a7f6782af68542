// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "osdg/error.hpp"

namespace osdg {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'O', 'S', 'D', 'G', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json gpsa_to_json(const model::GpsaStates& states) {
  json out = json::object();
  for (const auto& [tag, gu] : states)
    out[tag] = {{"u_mu", gu.u_mu}, {"u_sigma", gu.u_sigma}, {"alpha", gu.alpha}, {"update_count", gu.update_count}};
  return out;
}

model::GpsaStates gpsa_from_json(const json& j) {
  model::GpsaStates out;
  for (const auto& [tag, v] : j.items()) {
    style::GlobalUncertainty gu(0, v.at("alpha").get<double>());
    gu.u_mu = v.at("u_mu").get<std::vector<double>>();
    gu.u_sigma = v.at("u_sigma").get<std::vector<double>>();
    gu.update_count = v.at("update_count").get<decltype(gu.update_count)>();
    out.emplace(tag, std::move(gu));
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["config"] = to_key_values(ckpt.config);
  header["config_hash"] = config_hash(ckpt.config);
  header["switches"] = ckpt.switches;
  header["classes"] = ckpt.labels.known_classes();
  header["model"] = {{"in_channels", ckpt.model.in_channels},
                     {"widths", ckpt.model.widths},
                     {"num_classes", ckpt.model.num_classes}};
  header["normalization"] = {{"mean", ckpt.normalization.mean}, {"std", ckpt.normalization.std}};
  header["gpsa"] = gpsa_to_json(ckpt.gpsa);
  header["epoch"] = ckpt.epoch;
  json tensors = json::array();
  for (const auto& t : ckpt.state) tensors.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  header["tensors"] = tensors;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.state)
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * 4));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<LabelSpace>& expected_labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  if (len > (1u << 30)) throw DataError("checkpoint header too large: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  Checkpoint ckpt;
  try {
    const json header = json::parse(text);
    KeyValues kv = parse_key_values(header.at("config").get<std::string>());
    apply_train_keys(ckpt.config, kv);
    if (!kv.empty()) throw DataError("checkpoint config has unknown key '" + kv.begin()->first + "'");
    if (config_hash(ckpt.config) != header.at("config_hash").get<std::uint64_t>())
      throw DataError("checkpoint config hash mismatch: " + path.string());
    ckpt.switches = header.at("switches").get<std::string>();
    ckpt.labels = make_label_space(header.at("classes").get<std::vector<std::string>>());
    const auto& m = header.at("model");
    ckpt.model.in_channels = m.at("in_channels").get<int>();
    ckpt.model.widths = m.at("widths").get<std::vector<int>>();
    ckpt.model.num_classes = m.at("num_classes").get<int>();
    ckpt.normalization.mean = header.at("normalization").at("mean").get<data::Rgb>();
    ckpt.normalization.std = header.at("normalization").at("std").get<data::Rgb>();
    ckpt.gpsa = gpsa_from_json(header.at("gpsa"));
    ckpt.epoch = header.at("epoch").get<int>();
    for (const auto& t : header.at("tensors")) {
      Tensor<float> value(t.at("shape").get<Shape>());
      in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * 4));
      if (!in) throw DataError("truncated checkpoint tensor '" + t.at("name").get<std::string>() + "'");
      ckpt.state.push_back({t.at("name").get<std::string>(), std::move(value)});
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("invalid checkpoint " + path.string() + ": " + e.what());
  }
  if (expected_labels && !(*expected_labels == ckpt.labels))
    throw DataError("checkpoint class list does not match the dataset's known classes");
  return ckpt;
}

model::Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  model::Model<float> m(ckpt.model, ckpt.config.gpsa_stages, ckpt.config.seed);
  m.load_state(ckpt.state);
  return m;
}

}  // namespace osdg
