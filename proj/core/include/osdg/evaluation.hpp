// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osdg/checkpoint.hpp"
#include "osdg/data.hpp"
#include "osdg/model.hpp"
#include "osdg/types.hpp"

namespace osdg::eval {

struct OpenSetPrediction {
  std::vector<double> scores;  // softmax of the class logits
  double entropy_bits = 0.0;
  int decision = 0;            // known id or the unknown token
};

/// Half the maximum entropy: 0.5 * log2(K) bits.
double entropy_threshold(int num_known);

/// Known argmax iff the base-2 entropy of the scores is strictly below the
/// threshold; otherwise the unknown token. Throws ShapeError on a logit
/// count different from the label space size.
OpenSetPrediction decide(std::span<const double> logits, const LabelSpace& labels);

/// Percentages. acc_u and hs are absent when no unknown samples were scored.
struct Metrics {
  double acc_k = 0.0;
  std::optional<double> acc_u;
  double acc = 0.0;
  std::optional<double> hs;
  std::size_t samples = 0;
};

/// Combines class-averaged accuracies: acc = (K*acc_k + acc_u)/(K+1) and hs
/// their harmonic mean (0 when both are 0). Without acc_u, acc = acc_k.
Metrics combine(double acc_k, std::optional<double> acc_u, int num_known);

/// Per-class accuracy over the known classes present, plus the collapsed
/// unknown class. Throws DataError on a truth outside [0, K].
Metrics compute_metrics(std::span<const int> decisions, std::span<const int> truths, const LabelSpace& labels);

struct PredictionRecord {
  std::string id;
  std::string domain;
  int truth = 0;
  OpenSetPrediction prediction;
};

struct DomainResult {
  std::string domain;
  Metrics metrics;
  std::vector<PredictionRecord> predictions;
};

/// Class logits of a sample set in eval mode (no GPSA, running BN statistics).
std::vector<std::vector<double>> class_logits(model::Model<float>& model, const std::vector<SampleRecord>& samples,
                                              const data::Normalization& norm, int batch_size = 64);

/// Decisions and metrics for one target domain. Binary heads are not used.
/// Throws DataError when a sample's class name is "unknown" (reserved) or its
/// label disagrees with the label space.
DomainResult evaluate_domain(const Checkpoint& ckpt, const data::Dataset& target, const std::string& domain);
DomainResult evaluate_domain(model::Model<float>& model, const data::Normalization& norm,
                             const data::Dataset& target, const std::string& domain);

/// NDJSON, one record per sample: id, domain, label, scores, entropy_bits, decision.
void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// JSON array with one row per domain plus an "average" row (mean of each metric over domains).
void write_metrics_summary(const std::vector<DomainResult>& results, const std::filesystem::path& path);

/// Mean of each metric across results; absent fields stay absent unless every result has them.
Metrics average(const std::vector<Metrics>& rows);

}  // namespace osdg::eval
