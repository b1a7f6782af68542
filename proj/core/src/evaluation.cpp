// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "osdg/error.hpp"

namespace osdg::eval {
namespace {

using nlohmann::json;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const std::string& domain, const Metrics& m) {
  return {{"domain", domain},           {"acc_k", m.acc_k}, {"acc_u", optional_json(m.acc_u)},
          {"acc", m.acc},               {"hs", optional_json(m.hs)}, {"samples", m.samples}};
}

}  // namespace

double entropy_threshold(int num_known) { return 0.5 * std::log2(static_cast<double>(num_known)); }

OpenSetPrediction decide(std::span<const double> logits, const LabelSpace& labels) {
  const int K = labels.size();
  if (static_cast<int>(logits.size()) != K)
    throw ShapeError("decide: " + std::to_string(logits.size()) + " logits for " + std::to_string(K) + " classes");
  OpenSetPrediction p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  p.scores.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) z += p.scores[static_cast<std::size_t>(k)] = std::exp(logits[static_cast<std::size_t>(k)] - mx);
  int best = 0;
  for (int k = 0; k < K; ++k) {
    double& s = p.scores[static_cast<std::size_t>(k)];
    s /= z;
    if (s > 0) p.entropy_bits -= s * std::log2(s);
    if (s > p.scores[static_cast<std::size_t>(best)]) best = k;
  }
  p.entropy_bits = std::max(0.0, p.entropy_bits);
  p.decision = p.entropy_bits < entropy_threshold(K) ? best : labels.unknown_token();
  return p;
}

Metrics combine(double acc_k, std::optional<double> acc_u, int num_known) {
  Metrics m;
  m.acc_k = acc_k;
  m.acc_u = acc_u;
  if (!acc_u) {
    m.acc = acc_k;
    return m;
  }
  m.acc = (num_known * acc_k + *acc_u) / (num_known + 1);
  const double den = acc_k + *acc_u;
  m.hs = den > 0 ? 2 * acc_k * *acc_u / den : 0.0;
  return m;
}

Metrics compute_metrics(std::span<const int> decisions, std::span<const int> truths, const LabelSpace& labels) {
  if (decisions.size() != truths.size()) throw ShapeError("compute_metrics: decision and truth counts differ");
  const int K = labels.size();
  std::vector<std::size_t> total(static_cast<std::size_t>(K + 1), 0), correct(total.size(), 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i];
    if (t < 0 || t > K) throw DataError("compute_metrics: ground truth " + std::to_string(t) + " out of range");
    ++total[static_cast<std::size_t>(t)];
    if (decisions[i] == t) ++correct[static_cast<std::size_t>(t)];
  }
  auto acc_of = [&](int c) { return 100.0 * correct[static_cast<std::size_t>(c)] / total[static_cast<std::size_t>(c)]; };
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < K; ++k)
    if (total[static_cast<std::size_t>(k)]) {
      sum += acc_of(k);
      ++present;
    }
  const double acc_k = present ? sum / present : 0.0;
  std::optional<double> acc_u;
  if (total[static_cast<std::size_t>(K)]) acc_u = acc_of(K);
  // With some known classes absent the class-mean identity uses the present count.
  Metrics m = combine(acc_k, acc_u, present ? present : K);
  m.samples = truths.size();
  return m;
}

std::vector<std::vector<double>> class_logits(model::Model<float>& model, const std::vector<SampleRecord>& samples,
                                              const data::Normalization& norm, int batch_size) {
  model::GpsaStates none;
  style::Rng unused(0);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), i + static_cast<std::size_t>(batch_size));
    const Shape& s = samples[i].image.shape();
    Tensor<float> batch({static_cast<int>(end - i), s[0], s[1], s[2]});
    for (std::size_t j = i; j < end; ++j) {
      if (samples[j].image.shape() != s) throw ShapeError("evaluation images differ in shape");
      const Image x = data::normalize(samples[j].image, norm);
      std::copy(x.data(), x.data() + x.size(), batch.data() + (j - i) * x.size());
    }
    const auto fwd = model.forward(batch, {}, none, unused);
    const auto& lg = fwd.class_logits.value();
    for (int b = 0; b < lg.dim(0); ++b) {
      std::vector<double> row(static_cast<std::size_t>(lg.dim(1)));
      for (int k = 0; k < lg.dim(1); ++k) row[static_cast<std::size_t>(k)] = lg.at(b, k);
      out.push_back(std::move(row));
    }
  }
  return out;
}

DomainResult evaluate_domain(model::Model<float>& model, const data::Normalization& norm,
                             const data::Dataset& target, const std::string& domain) {
  const LabelSpace& labels = target.labels;
  for (const auto& s : target.samples) {
    if (s.class_name == "unknown")
      throw DataError("sample '" + s.id + "': class name 'unknown' collides with the unknown token");
    const auto id = labels.id_of(s.class_name);
    const int expected = id ? *id : labels.unknown_token();
    if (!s.class_name.empty() && s.label != expected)
      throw DataError("sample '" + s.id + "' has label " + std::to_string(s.label) + " but class '" + s.class_name +
                      "' maps to " + std::to_string(expected));
  }
  if (model.config().num_classes != labels.size())
    throw DataError("model has " + std::to_string(model.config().num_classes) + " classes, dataset " +
                    std::to_string(labels.size()));
  DomainResult r;
  r.domain = domain;
  const auto logits = class_logits(model, target.samples, norm);
  std::vector<int> decisions, truths;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& s = target.samples[i];
    PredictionRecord rec{s.id, s.domain, s.label, decide(logits[i], labels)};
    decisions.push_back(rec.prediction.decision);
    truths.push_back(s.label);
    r.predictions.push_back(std::move(rec));
  }
  r.metrics = compute_metrics(decisions, truths, labels);
  return r;
}

DomainResult evaluate_domain(const Checkpoint& ckpt, const data::Dataset& target, const std::string& domain) {
  if (!(ckpt.labels == target.labels))
    throw DataError("checkpoint class list does not match the target dataset's known classes");
  auto model = model_from_checkpoint(ckpt);
  return evaluate_domain(model, ckpt.normalization, target, domain);
}

void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions " + path.string());
  for (const auto& p : preds) {
    const json j = {{"id", p.id},
                    {"domain", p.domain},
                    {"label", p.truth},
                    {"scores", p.prediction.scores},
                    {"entropy_bits", p.prediction.entropy_bits},
                    {"decision", p.prediction.decision}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read predictions " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    PredictionRecord p;
    p.id = j.at("id").get<std::string>();
    p.domain = j.at("domain").get<std::string>();
    p.truth = j.at("label").get<int>();
    p.prediction.scores = j.at("scores").get<std::vector<double>>();
    p.prediction.entropy_bits = j.at("entropy_bits").get<double>();
    p.prediction.decision = j.at("decision").get<int>();
    out.push_back(std::move(p));
  }
  return out;
}

Metrics average(const std::vector<Metrics>& rows) {
  Metrics m;
  if (rows.empty()) return m;
  const bool all_u = std::all_of(rows.begin(), rows.end(), [](const Metrics& r) { return r.acc_u.has_value(); });
  double u = 0.0, h = 0.0;
  for (const auto& r : rows) {
    m.acc_k += r.acc_k / rows.size();
    m.acc += r.acc / rows.size();
    m.samples += r.samples;
    if (all_u) {
      u += *r.acc_u / rows.size();
      h += *r.hs / rows.size();
    }
  }
  if (all_u) {
    m.acc_u = u;
    m.hs = h;
  }
  return m;
}

void write_metrics_summary(const std::vector<DomainResult>& results, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  json rows = json::array();
  std::vector<Metrics> ms;
  for (const auto& r : results) {
    rows.push_back(metrics_json(r.domain, r.metrics));
    ms.push_back(r.metrics);
  }
  rows.push_back(metrics_json("average", average(ms)));
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics summary " + path.string());
  out << rows.dump(2) << '\n';
}

}  // namespace osdg::eval
