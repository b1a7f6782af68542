// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "osdg/error.hpp"

namespace osdg::ablation {

std::vector<Variant> standard_variants() {
  return {
      {"ce", train::ce_only()},
      {"ova", train::ablate("bs,gpsa,kd,eova")},
      {"de_kd", train::ablate("ova")},
      {"de_kd_ova", train::ablate("eova")},
      {"debug", train::full_method()},
  };
}

Variant variant_by_name(const std::string& name) {
  std::string names;
  for (const auto& v : standard_variants()) {
    if (v.name == name) return v;
    names += (names.empty() ? "" : ", ") + v.name;
  }
  throw ConfigError("unknown ablation variant '" + name + "' (" + names + ")");
}

namespace {

struct Job {
  std::size_t variant;
  std::size_t seed;
};

std::vector<Row> run_one(const data::Dataset& source, const std::vector<data::Dataset>& targets,
                         const std::vector<std::string>& target_names, TrainConfig cfg, const Variant& variant,
                         std::uint64_t seed, const GridOptions& opt) {
  cfg.seed = seed;
  train::TrainOptions topt = opt.train;
  if (!opt.out_dir.empty()) topt.out_dir = opt.out_dir / variant.name / ("seed" + std::to_string(seed));
  topt.on_epoch = nullptr;  // callbacks are not safe across concurrent runs
  const auto result = train::run_training(source, cfg, variant.switches, topt);
  std::vector<Row> rows;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto r = eval::evaluate_domain(result.final_checkpoint, targets[t], target_names[t]);
    if (!topt.out_dir.empty()) eval::write_predictions(r.predictions, topt.out_dir / ("predictions_" + target_names[t] + ".ndjson"));
    rows.push_back({variant.name, seed, target_names[t], r.metrics, t == 0 ? result.steps : std::vector<train::StepRecord>{}});
  }
  return rows;
}

}  // namespace

std::vector<Row> run_grid(const data::Dataset& source, const std::vector<data::Dataset>& targets,
                          const std::vector<std::string>& target_names, const TrainConfig& cfg,
                          const std::vector<Variant>& variants, const GridOptions& opt) {
  if (targets.size() != target_names.size()) throw ConfigError("one name per target domain is required");
  if (opt.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::size_t s = 0; s < opt.seeds.size(); ++s) jobs.push_back({v, s});

  std::vector<std::vector<Row>> out(jobs.size());
  const unsigned width = opt.parallel ? opt.parallel : std::max(1u, std::thread::hardware_concurrency());
  // Runs are independent and individually seeded, so the grid is
  // deterministic whatever the concurrency.
  for (std::size_t begin = 0; begin < jobs.size(); begin += width) {
    std::vector<std::future<std::vector<Row>>> wave;
    const std::size_t end = std::min(jobs.size(), begin + width);
    for (std::size_t j = begin; j < end; ++j)
      wave.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async, [&, j] {
        return run_one(source, targets, target_names, cfg, variants[jobs[j].variant], opt.seeds[jobs[j].seed], opt);
      }));
    for (std::size_t j = begin; j < end; ++j) out[j] = wave[j - begin].get();
  }

  std::vector<Row> rows;
  for (auto& r : out) rows.insert(rows.end(), r.begin(), r.end());
  for (const auto& v : variants)
    for (const auto& name : target_names) {
      std::vector<eval::Metrics> ms;
      for (const auto& r : rows)
        if (r.variant == v.name && r.domain == name) ms.push_back(r.metrics);
      rows.push_back({v.name + "/mean", 0, name, eval::average(ms), {}});
    }
  return rows;
}

const Row& mean_row(const std::vector<Row>& rows, const std::string& variant, const std::string& domain) {
  for (const auto& r : rows)
    if (r.variant == variant + "/mean" && r.domain == domain) return r;
  throw ConfigError("no mean row for variant '" + variant + "' on '" + domain + "'");
}

namespace {

std::string pct(const std::optional<double>& v) {
  if (!v) return "     -";
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%6.2f", *v);
  return buf;
}

}  // namespace

std::string format_table(const std::vector<Row>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %-6s %-12s %6s %6s %6s %6s\n", "variant", "seed", "target", "acc_k", "acc_u",
                "acc", "hs");
  os << buf;
  for (const auto& r : rows) {
    const bool mean = r.variant.ends_with("/mean");
    std::snprintf(buf, sizeof(buf), "%-16s %-6s %-12s %s %s %s %s\n", r.variant.c_str(),
                  mean ? "-" : std::to_string(r.seed).c_str(), r.domain.c_str(), pct(r.metrics.acc_k).c_str(),
                  pct(r.metrics.acc_u).c_str(), pct(r.metrics.acc).c_str(), pct(r.metrics.hs).c_str());
    os << buf;
  }
  return os.str();
}

void write_table_json(const std::vector<Row>& rows, const std::filesystem::path& path) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    const bool mean = r.variant.ends_with("/mean");
    arr.push_back({{"variant", mean ? r.variant.substr(0, r.variant.size() - 5) : r.variant},
                   {"seed", mean ? nlohmann::json("mean") : nlohmann::json(r.seed)},
                   {"target", r.domain},
                   {"acc_k", r.metrics.acc_k},
                   {"acc_u", opt(r.metrics.acc_u)},
                   {"acc", r.metrics.acc},
                   {"hs", opt(r.metrics.hs)}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << arr.dump(2) << '\n';
}

}  // namespace osdg::ablation
