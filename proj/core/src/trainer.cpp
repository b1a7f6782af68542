// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "osdg/error.hpp"
#include "osdg/losses.hpp"
#include "osdg/ops.hpp"

namespace osdg::train {
namespace {

template <typename T>
Tensor<T> stack(const std::vector<Image>& images) {
  const Shape& s = images.front().shape();
  Tensor<T> out({static_cast<int>(images.size()), s[0], s[1], s[2]});
  const std::size_t n = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw ShapeError("batch images differ in shape: " + shape_str(images[i].shape()));
    std::copy(images[i].data(), images[i].data() + n, out.data() + i * n);
  }
  return out;
}

std::vector<int> labels_of(std::span<const SampleRecord* const> samples, const LabelSpace& labels) {
  std::vector<int> out;
  for (const auto* s : samples) {
    if (!labels.is_known(s->label))
      throw DataError("training batch contains sample '" + s->id + "' with non-known label " +
                      std::to_string(s->label));
    out.push_back(s->label);
  }
  return out;
}

double closed_set_accuracy(model::Model<float>& model, const std::vector<const SampleRecord*>& samples,
                           const data::Normalization& norm, int batch_size) {
  model::GpsaStates none;
  style::Rng unused(0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<Image> imgs;
    for (std::size_t j = i; j < std::min(samples.size(), i + static_cast<std::size_t>(batch_size)); ++j)
      imgs.push_back(data::normalize(samples[j]->image, norm));
    const auto out = model.forward(stack<float>(imgs), {}, none, unused);
    const auto& logits = out.class_logits.value();
    const int K = logits.dim(1);
    for (int b = 0; b < logits.dim(0); ++b) {
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (logits.at(b, k) > logits.at(b, best)) best = k;
      if (best == samples[i + static_cast<std::size_t>(b)]->label) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

OvaSource parse_ova_source(const std::string& name) {
  if (name == "edges") return OvaSource::edges;
  if (name == "weak") return OvaSource::weak;
  if (name == "strong") return OvaSource::strong;
  throw ConfigError("unknown one-vs-all source '" + name + "' (edges, weak, strong)");
}

std::string to_string(OvaSource s) {
  switch (s) {
    case OvaSource::edges: return "edges";
    case OvaSource::weak: return "weak";
    case OvaSource::strong: return "strong";
  }
  return "?";
}

void validate_switches(const AblationSwitches& s) {
  if (s.use_kd && !s.use_bs && !s.use_gpsa)
    throw ConfigError("distillation needs background suppression or GPSA to form a distinct teacher branch");
}

AblationSwitches ablate(const std::string& disabled) {
  AblationSwitches s = full_method();
  std::stringstream ss(disabled);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (item == "bs") s.use_bs = false;
    else if (item == "gpsa") s.use_gpsa = false;
    else if (item == "kd") s.use_kd = false;
    else if (item == "eova") s.use_eova = false;
    else if (item == "ova") s.use_ova_at_all = s.use_eova = false;
    else throw ConfigError("unknown ablation component '" + item + "' (bs, gpsa, kd, eova, ova)");
  }
  return s;
}

std::string describe(const AblationSwitches& s) {
  std::ostringstream os;
  os << "bs=" << s.use_bs << ",gpsa=" << s.use_gpsa << ",kd=" << s.use_kd << ",eova=" << s.use_eova
     << ",ova=" << s.use_ova_at_all << ",ova_source=" << to_string(s.ova_source);
  return os.str();
}

template <typename T>
Batch<T> make_batch(std::span<const SampleRecord* const> samples, const LabelSpace& labels,
                    const BranchInputs& inputs, const data::Normalization& norm, const AblationSwitches& sw,
                    std::mt19937_64& aug_rng) {
  if (samples.empty()) throw DataError("empty training batch");
  Batch<T> batch;
  batch.labels = labels_of(samples, labels);
  std::vector<Image> orig, supp, pos;
  for (const auto* s : samples) {
    orig.push_back(data::normalize(s->image, norm));
    if (sw.use_bs) supp.push_back(data::normalize(aug::suppress_background(*s, inputs.masks, inputs.fill).image, norm));
    if (sw.use_ova_at_all && sw.use_eova) {
      Image view;
      switch (sw.ova_source) {
        case OvaSource::edges:
          view = s->edge ? *s->edge : *aug::extract_edges(*s, inputs.edges).edge;
          break;
        case OvaSource::weak: view = aug::weak_augment(s->image, aug_rng); break;
        case OvaSource::strong: view = aug::strong_augment(s->image, aug_rng); break;
      }
      pos.push_back(data::normalize(view, norm));
    }
  }
  batch.original = stack<T>(orig);
  batch.suppressed = sw.use_bs ? stack<T>(supp) : batch.original;
  if (!pos.empty()) batch.positive = stack<T>(pos);
  return batch;
}

template <typename T>
StepLoss<T> step_loss(const Batch<T>& batch, model::Model<T>& model, model::GpsaStates& gpsa,
                      const TrainConfig& cfg, const AblationSwitches& sw, style::Rng& gpsa_rng) {
  validate_switches(sw);
  const std::span<const int> labels(batch.labels);
  model::ForwardOptions branch{style::Mode::train, sw.use_gpsa, cfg.gpsa_prob, true};

  const auto out = model.forward(batch.original, branch, gpsa, gpsa_rng);
  const bool distinct = sw.use_bs || sw.use_gpsa;
  const auto out_bs = distinct ? model.forward(batch.suppressed, branch, gpsa, gpsa_rng) : out;

  ag::Var<T> ce = ag::weighted_sum<T>({losses::ce_loss(out.class_logits, labels),
                                       losses::ce_loss(out_bs.class_logits, labels)},
                                      {0.5, 0.5});
  std::vector<ag::Var<T>> terms{ce};
  std::vector<double> weights{1.0};
  double kd_value = 0.0, ova_value = 0.0;
  double lambda1 = 0.0, lambda2 = 0.0;

  if (sw.use_kd) {
    auto kd = losses::kd_loss(out.pre_pool, out_bs.pre_pool.value(), cfg.tau);
    kd_value = kd.value()[0];
    lambda2 = cfg.lambda2;
    terms.push_back(kd);
    weights.push_back(lambda2);
  }
  if (sw.use_ova_at_all) {
    ag::Var<T> ova;
    if (sw.use_eova) {
      if (batch.positive.size() == 0) throw ShapeError("edge one-vs-all needs the positive view in the batch");
      // The positive view carries no style, so it is never restyled and
      // leaves the running statistics alone.
      const model::ForwardOptions edge_opts{style::Mode::train, false, 0.0, false};
      const auto out_pos = model.forward(batch.positive, edge_opts, gpsa, gpsa_rng);
      ova = losses::eova_loss(out_pos.binary_logits, out.binary_logits, labels);
    } else {
      ova = losses::ova_loss(out.binary_logits, labels);
    }
    ova_value = ova.value()[0];
    lambda1 = cfg.lambda1;
    terms.push_back(ova);
    weights.push_back(lambda1);
  }

  StepLoss<T> result;
  result.breakdown = losses::total_loss(ce.value()[0], ova_value, kd_value, lambda1, lambda2);
  result.total = ag::weighted_sum<T>(terms, weights);
  return result;
}

template <typename T>
void Sgd<T>::step(std::vector<std::pair<std::string, ag::Var<T>>>& params, double lr) {
  if (velocity_.empty())
    for (const auto& [name, p] : params) velocity_.emplace_back(p.value().shape());
  const T mu = static_cast<T>(momentum_), wd = static_cast<T>(weight_decay_), eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].second;
    const Tensor<T>& g = p.grad();
    Tensor<T>& w = p.mutable_value();
    Tensor<T>& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T d = g[j] + wd * w[j];
      v[j] = mu * v[j] + d;
      w[j] -= eta * (d + mu * v[j]);
    }
  }
}

template <typename T>
LossBreakdown train_step(const Batch<T>& batch, model::Model<T>& model, model::GpsaStates& gpsa,
                         const TrainConfig& cfg, const AblationSwitches& sw, Sgd<T>& opt, double lr,
                         style::Rng& gpsa_rng) {
  auto loss = step_loss(batch, model, gpsa, cfg, sw, gpsa_rng);
  if (!std::isfinite(static_cast<double>(loss.total.value()[0])))
    throw NumericError("non-finite total loss; step aborted");
  model.zero_grad();
  ag::backward(loss.total);
  opt.step(model.parameters(), lr);
  return loss.breakdown;
}

TrainingResult run_training(const data::Dataset& source, const TrainConfig& cfg_in, const AblationSwitches& sw,
                            const TrainOptions& opt) {
  const TrainConfig cfg = validate_config(cfg_in);
  validate_switches(sw);
  const LabelSpace& labels = source.labels;
  std::vector<int> per_class(static_cast<std::size_t>(labels.size()), 0);
  for (const auto& s : source.samples) {
    if (!labels.is_known(s.label))
      throw DataError("source sample '" + s.id + "' is not a known class; training never sees unknowns");
    ++per_class[static_cast<std::size_t>(s.label)];
  }
  for (int k = 0; k < labels.size(); ++k)
    if (per_class[static_cast<std::size_t>(k)] == 0)
      throw DataError("known class '" + labels.name_of(k) + "' has no training samples");

  auto [train_set, val_set] = data::stratified_split(source.samples, opt.val_fraction, cfg.seed);
  std::vector<const SampleRecord*> train_ptrs, val_ptrs;
  for (const auto& s : train_set) train_ptrs.push_back(&s);
  for (const auto& s : val_set) val_ptrs.push_back(&s);

  const data::Normalization norm = data::compute_normalization(train_set);
  BranchInputs inputs = opt.inputs;
  inputs.fill = norm.mean;
  // Edge maps are deterministic per sample, so compute them once.
  if (sw.use_ova_at_all && sw.use_eova && sw.ova_source == OvaSource::edges)
    for (auto& s : train_set)
      if (!s.edge) s.edge = aug::extract_edges(s, inputs.edges).edge;

  model::ModelConfig mcfg = opt.model;
  mcfg.num_classes = labels.size();
  model::Model<float> model(mcfg, cfg.gpsa_stages, cfg.seed);
  model::GpsaStates gpsa = model.make_gpsa_states(cfg.alpha);
  Sgd<float> sgd(cfg.momentum, cfg.weight_decay);

  std::seed_seq shuffle_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 1u};
  std::seed_seq gpsa_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 2u};
  std::seed_seq aug_seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 3u};
  std::mt19937_64 order_rng(shuffle_seq), aug_rng(aug_seq);
  style::Rng gpsa_rng(gpsa_seq);

  auto snapshot = [&](int epoch) {
    Checkpoint c;
    c.config = cfg;
    c.switches = describe(sw);
    c.labels = labels;
    c.model = mcfg;
    c.normalization = norm;
    c.gpsa = gpsa;
    c.state = model.state();
    c.epoch = epoch;
    return c;
  };

  TrainingResult result;
  result.best_checkpoint = snapshot(0);
  std::optional<double> best_val;

  std::vector<std::size_t> order(train_ptrs.size());
  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum_total = 0.0;
    int n_steps = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size));
      if (end - i < 2) continue;  // batch statistics need two samples
      std::vector<const SampleRecord*> members;
      for (std::size_t j = i; j < end; ++j) members.push_back(train_ptrs[order[j]]);
      const auto batch = make_batch<float>(members, labels, inputs, norm, sw, aug_rng);
      LossBreakdown loss;
      try {
        loss = train_step(batch, model, gpsa, cfg, sw, sgd, lr, gpsa_rng);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(global_step) + ")");
      }
      result.steps.push_back({epoch, global_step++, loss, lr});
      sum_total += loss.total;
      ++n_steps;
    }
    EpochRecord rec{epoch, lr, n_steps ? sum_total / n_steps : 0.0, std::nullopt};
    if (!val_ptrs.empty()) {
      rec.val_accuracy = closed_set_accuracy(model, val_ptrs, norm, std::max(cfg.batch_size, 64));
      if (!best_val || *rec.val_accuracy > *best_val) {
        best_val = rec.val_accuracy;
        result.best_checkpoint = snapshot(epoch + 1);
        result.best_epoch = epoch + 1;
      }
    }
    result.epochs.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
  }
  result.final_checkpoint = snapshot(cfg.epochs);
  if (val_ptrs.empty()) {
    result.best_checkpoint = result.final_checkpoint;
    result.best_epoch = cfg.epochs;
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_step_log(result.steps, opt.out_dir / "steps.jsonl");
    std::ofstream ep(opt.out_dir / "epochs.jsonl");
    for (const auto& e : result.epochs) {
      nlohmann::json j = {{"epoch", e.epoch}, {"lr", e.lr}, {"mean_total", e.mean_total}};
      j["val_accuracy"] = e.val_accuracy ? nlohmann::json(*e.val_accuracy) : nlohmann::json(nullptr);
      ep << j.dump() << '\n';
    }
    save_checkpoint(result.final_checkpoint, opt.out_dir / "final.ckpt");
    save_checkpoint(result.best_checkpoint, opt.out_dir / "best.ckpt");
  }
  return result;
}

void write_step_log(const std::vector<StepRecord>& steps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write step log " + path.string());
  for (const auto& s : steps) {
    const nlohmann::json j = {{"epoch", s.epoch},     {"step", s.step},   {"ce", s.loss.ce},
                              {"kd", s.loss.kd},       {"eova", s.loss.eova}, {"total", s.loss.total},
                              {"lr", s.lr}};
    out << j.dump() << '\n';
  }
}

#define OSDG_INSTANTIATE(T)                                                                                        \
  template Batch<T> make_batch<T>(std::span<const SampleRecord* const>, const LabelSpace&, const BranchInputs&,     \
                                  const data::Normalization&, const AblationSwitches&, std::mt19937_64&);           \
  template StepLoss<T> step_loss<T>(const Batch<T>&, model::Model<T>&, model::GpsaStates&, const TrainConfig&,     \
                                    const AblationSwitches&, style::Rng&);                                          \
  template class Sgd<T>;                                                                                            \
  template LossBreakdown train_step<T>(const Batch<T>&, model::Model<T>&, model::GpsaStates&, const TrainConfig&,  \
                                       const AblationSwitches&, Sgd<T>&, double, style::Rng&);

OSDG_INSTANTIATE(float)
OSDG_INSTANTIATE(double)
#undef OSDG_INSTANTIATE

}  // namespace osdg::train
