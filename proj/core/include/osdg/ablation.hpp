// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "osdg/evaluation.hpp"
#include "osdg/trainer.hpp"

namespace osdg::ablation {

struct Variant {
  std::string name;
  train::AblationSwitches switches;
};

/// ce, ova (plain one-vs-all on the originals), de_kd (suppression, style
/// augmentation and distillation without one-vs-all), de_kd_ova (everything
/// but the edge maps) and debug (the full method).
std::vector<Variant> standard_variants();

/// Looks a variant up by name; throws ConfigError listing the valid names.
Variant variant_by_name(const std::string& name);

struct Row {
  std::string variant;
  std::uint64_t seed = 0;
  std::string domain;  // target domain, or "mean" for the across-seed rows
  eval::Metrics metrics;
  std::vector<train::StepRecord> steps;
};

struct GridOptions {
  train::TrainOptions train;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  /// Runs executed concurrently; 0 picks the hardware concurrency.
  unsigned parallel = 0;
  /// Per-run subdirectories "<variant>/seed<k>" when non-empty.
  std::filesystem::path out_dir;
};

/// Trains every variant under every seed (config seed replaced) and
/// evaluates the final checkpoint on each target. Returns one row per run
/// and target in variant/seed order, followed by one mean row per variant
/// and target.
std::vector<Row> run_grid(const data::Dataset& source, const std::vector<data::Dataset>& targets,
                          const std::vector<std::string>& target_names, const TrainConfig& cfg,
                          const std::vector<Variant>& variants, const GridOptions& opt);

/// Mean of the rows for `variant` over seeds (the "mean" rows).
const Row& mean_row(const std::vector<Row>& rows, const std::string& variant, const std::string& domain);

/// Aligned text table and a JSON array of the same rows.
std::string format_table(const std::vector<Row>& rows);
void write_table_json(const std::vector<Row>& rows, const std::filesystem::path& path);

}  // namespace osdg::ablation
