// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "osdg/error.hpp"

namespace osdg {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("config field '" + key + "': not a number: '" + v + "'");
  return out;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("config field '" + key + "': not an integer: '" + v + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(std::string("config field '") + field + "' " + what);
}

}  // namespace

TrainConfig validate_config(TrainConfig cfg) {
  require(cfg.batch_size >= 1, "batch_size", "must be >= 1");
  require(std::isfinite(cfg.lr) && cfg.lr > 0, "lr", "must be > 0");
  require(std::isfinite(cfg.weight_decay) && cfg.weight_decay >= 0, "weight_decay", "must be >= 0");
  require(cfg.momentum >= 0 && cfg.momentum < 1, "momentum", "must be in [0, 1)");
  require(cfg.lr_decay_factor > 0 && cfg.lr_decay_factor <= 1, "lr_decay_factor", "must be in (0, 1]");
  require(cfg.lr_decay_every >= 1, "lr_decay_every", "must be >= 1");
  require(cfg.epochs >= 0, "epochs", "must be >= 0");
  require(std::isfinite(cfg.tau) && cfg.tau > 0, "tau", "must be > 0");
  require(std::isfinite(cfg.lambda1) && cfg.lambda1 >= 0, "lambda1", "must be >= 0");
  require(std::isfinite(cfg.lambda2) && cfg.lambda2 >= 0, "lambda2", "must be >= 0");
  require(cfg.alpha > 0 && cfg.alpha < 1, "alpha", "must be in (0, 1)");
  require(cfg.gpsa_prob >= 0 && cfg.gpsa_prob <= 1, "gpsa_prob", "must be in [0, 1]");
  return cfg;
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  const int drops = epoch / cfg.lr_decay_every;
  return cfg.lr * std::pow(cfg.lr_decay_factor, drops);
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
  }
  return kv;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void apply_train_keys(TrainConfig& cfg, KeyValues& kv) {
  auto take = [&kv](const char* key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(std::string(key), it->second);
    kv.erase(it);
  };
  take("batch_size", [&](const auto& k, const auto& v) { cfg.batch_size = parse_int<int>(k, v); });
  take("lr", [&](const auto& k, const auto& v) { cfg.lr = parse_double(k, v); });
  take("weight_decay", [&](const auto& k, const auto& v) { cfg.weight_decay = parse_double(k, v); });
  take("momentum", [&](const auto& k, const auto& v) { cfg.momentum = parse_double(k, v); });
  take("lr_decay_factor", [&](const auto& k, const auto& v) { cfg.lr_decay_factor = parse_double(k, v); });
  take("lr_decay_every", [&](const auto& k, const auto& v) { cfg.lr_decay_every = parse_int<int>(k, v); });
  take("epochs", [&](const auto& k, const auto& v) { cfg.epochs = parse_int<int>(k, v); });
  take("tau", [&](const auto& k, const auto& v) { cfg.tau = parse_double(k, v); });
  take("lambda1", [&](const auto& k, const auto& v) { cfg.lambda1 = parse_double(k, v); });
  take("lambda2", [&](const auto& k, const auto& v) { cfg.lambda2 = parse_double(k, v); });
  take("alpha", [&](const auto& k, const auto& v) { cfg.alpha = parse_double(k, v); });
  take("gpsa_prob", [&](const auto& k, const auto& v) { cfg.gpsa_prob = parse_double(k, v); });
  take("gpsa_stages", [&](const auto&, const auto& v) { cfg.gpsa_stages = split_list(v); });
  take("seed", [&](const auto& k, const auto& v) { cfg.seed = parse_int<std::uint64_t>(k, v); });
}

std::string to_key_values(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "batch_size = " << cfg.batch_size << '\n'
     << "lr = " << format_double(cfg.lr) << '\n'
     << "weight_decay = " << format_double(cfg.weight_decay) << '\n'
     << "momentum = " << format_double(cfg.momentum) << '\n'
     << "lr_decay_factor = " << format_double(cfg.lr_decay_factor) << '\n'
     << "lr_decay_every = " << cfg.lr_decay_every << '\n'
     << "epochs = " << cfg.epochs << '\n'
     << "tau = " << format_double(cfg.tau) << '\n'
     << "lambda1 = " << format_double(cfg.lambda1) << '\n'
     << "lambda2 = " << format_double(cfg.lambda2) << '\n'
     << "alpha = " << format_double(cfg.alpha) << '\n'
     << "gpsa_prob = " << format_double(cfg.gpsa_prob) << '\n'
     << "gpsa_stages = ";
  for (std::size_t i = 0; i < cfg.gpsa_stages.size(); ++i) os << (i ? "," : "") << cfg.gpsa_stages[i];
  os << '\n' << "seed = " << cfg.seed << '\n';
  return os.str();
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_key_values(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace osdg
