// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osdg/checkpoint.hpp"
#include "osdg/config.hpp"
#include "osdg/content_aug.hpp"
#include "osdg/data.hpp"
#include "osdg/model.hpp"

namespace osdg::train {

/// What the one-vs-all positive term is computed on when the edge variant is
/// active. Only `edges` is the method proper; the others exist for ablations.
enum class OvaSource { edges, weak, strong };

OvaSource parse_ova_source(const std::string& name);
std::string to_string(OvaSource s);

struct AblationSwitches {
  bool use_bs = true;
  bool use_gpsa = true;
  bool use_kd = true;
  bool use_eova = true;        // off: plain one-vs-all on the original images
  bool use_ova_at_all = true;  // off: no one-vs-all term whatsoever
  OvaSource ova_source = OvaSource::edges;

  bool operator==(const AblationSwitches&) const = default;
};

/// Every component on.
inline AblationSwitches full_method() { return {}; }
/// Cross-entropy on the original images only.
inline AblationSwitches ce_only() { return {false, false, false, false, false, OvaSource::edges}; }

/// Throws ConfigError when distillation has no distinct teacher branch.
void validate_switches(const AblationSwitches& s);

/// Starts from the full method and turns off every component named in a
/// comma-separated list of {bs, gpsa, kd, eova, ova}. Turning off "eova"
/// falls back to one-vs-all on the originals; "ova" removes it entirely.
AblationSwitches ablate(const std::string& disabled);

/// "bs=1,gpsa=0,..." record of the switches.
std::string describe(const AblationSwitches& s);

/// The nuisance-removal inputs a step needs beside the images.
struct BranchInputs {
  aug::MaskProvider masks = aug::MaskProvider::oracle();
  aug::EdgeOperator edges;
  aug::Rgb fill{0.5f, 0.5f, 0.5f};  // raw-pixel colour written over the background
};

/// One mini-batch, already normalized and stacked B x 3 x H x W.
template <typename T>
struct Batch {
  Tensor<T> original;
  Tensor<T> suppressed;  // equals `original` when background suppression is off
  Tensor<T> positive;    // edge maps (or the weak/strong views); empty when unused
  std::vector<int> labels;
};

/// Builds a batch from raw samples. Throws DataError if a label is not a
/// known class. `aug_rng` is only consumed for the weak/strong positives.
template <typename T>
Batch<T> make_batch(std::span<const SampleRecord* const> samples, const LabelSpace& labels,
                    const BranchInputs& inputs, const data::Normalization& norm, const AblationSwitches& sw,
                    std::mt19937_64& aug_rng);

/// The differentiable step objective and its breakdown.
template <typename T>
struct StepLoss {
  ag::Var<T> total;
  LossBreakdown breakdown;
};

/// Forward passes and loss assembly for one step, without the update:
/// original branch, then suppressed branch (both GPSA-augmented when on and
/// both updating `gpsa`), distillation against the detached suppressed map,
/// the one-vs-all term, and cross-entropy averaged over the two branches.
/// When neither suppression nor GPSA is on the branches coincide and the
/// second forward is skipped.
template <typename T>
StepLoss<T> step_loss(const Batch<T>& batch, model::Model<T>& model, model::GpsaStates& gpsa,
                      const TrainConfig& cfg, const AblationSwitches& sw, style::Rng& gpsa_rng);

/// SGD with Nesterov momentum and L2 weight decay.
template <typename T>
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(std::vector<std::pair<std::string, ag::Var<T>>>& params, double lr);

 private:
  double momentum_, weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

/// step_loss + backward + one optimizer step. Throws NumericError (before
/// touching the parameters) when the total is not finite.
template <typename T>
LossBreakdown train_step(const Batch<T>& batch, model::Model<T>& model, model::GpsaStates& gpsa,
                         const TrainConfig& cfg, const AblationSwitches& sw, Sgd<T>& opt, double lr,
                         style::Rng& gpsa_rng);

struct StepRecord {
  int epoch = 0;
  int step = 0;  // global step index
  LossBreakdown loss;
  double lr = 0.0;
  bool operator==(const StepRecord&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_total = 0.0;
  std::optional<double> val_accuracy;  // percent, closed-set
};

struct TrainOptions {
  BranchInputs inputs;
  model::ModelConfig model;  // num_classes is taken from the dataset's label space
  double val_fraction = 0.1;
  std::filesystem::path out_dir;  // logs and checkpoints; nothing is written when empty
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainingResult {
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;  // highest validation accuracy, earliest on ties
  int best_epoch = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// Full run on a known-classes-only source set. Batches are reshuffled every
/// epoch from a seeded stream; a trailing batch of one sample is dropped.
/// The background fill is the source pixel mean. Throws DataError when a
/// known class has no samples or an unknown-class sample is present.
TrainingResult run_training(const data::Dataset& source, const TrainConfig& cfg, const AblationSwitches& sw,
                            const TrainOptions& opt);

/// NDJSON, one record per step: epoch, step, ce, kd, eova, total, lr.
void write_step_log(const std::vector<StepRecord>& steps, const std::filesystem::path& path);

}  // namespace osdg::train
