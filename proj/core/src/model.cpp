// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "osdg/error.hpp"
#include "osdg/ops.hpp"

namespace osdg::model {
namespace {

template <typename T>
Tensor<T> kaiming_normal(Shape shape, int fan_in, style::Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.values()) v = static_cast<T>(n(rng));
  return t;
}

template <typename T>
Tensor<T> uniform(Shape shape, double bound, style::Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

}  // namespace

template <typename T>
std::vector<Tensor<T>> ForwardOutput<T>::binary_logit_list() const {
  const auto& v = binary_logits.value();
  const int B = v.dim(0), K = v.dim(1);
  std::vector<Tensor<T>> heads;
  for (int k = 0; k < K; ++k) {
    Tensor<T> h({B, 2});
    for (int b = 0; b < B; ++b) {
      h.at(b, 0) = v.at(b, k, 0);
      h.at(b, 1) = v.at(b, k, 1);
    }
    heads.push_back(std::move(h));
  }
  return heads;
}

template <typename T>
Model<T>::Model(ModelConfig cfg, std::vector<std::string> gpsa_stages, std::uint64_t seed)
    : cfg_(std::move(cfg)), gpsa_stages_(std::move(gpsa_stages)) {
  if (cfg_.widths.empty()) throw ConfigError("model needs at least one encoder stage");
  if (cfg_.num_classes < 2) throw ConfigError("model needs at least 2 classes");
  const auto tags = stage_tags();
  for (const auto& s : gpsa_stages_)
    if (std::find(tags.begin(), tags.end(), s) == tags.end())
      throw ConfigError("gpsa_stages: unknown encoder stage '" + s + "'");

  style::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  int cin = cfg_.in_channels;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    const int cout = cfg_.widths[i];
    Stage st;
    st.tag = tags[i];
    st.conv_w = ag::Var<T>::leaf(kaiming_normal<T>({cout, cin, 3, 3}, cin * 9, rng));
    st.conv_b = ag::Var<T>::leaf(Tensor<T>({cout}));
    st.bn_gamma = ag::Var<T>::leaf(Tensor<T>({cout}, T{1}));
    st.bn_beta = ag::Var<T>::leaf(Tensor<T>({cout}));
    st.running_mean = Tensor<T>({cout});
    st.running_var = Tensor<T>({cout}, T{1});
    params_.emplace_back(st.tag + ".conv.weight", st.conv_w);
    params_.emplace_back(st.tag + ".conv.bias", st.conv_b);
    params_.emplace_back(st.tag + ".bn.weight", st.bn_gamma);
    params_.emplace_back(st.tag + ".bn.bias", st.bn_beta);
    stages_.push_back(std::move(st));
    cin = cout;
  }
  const int d = feature_dim(), K = cfg_.num_classes;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  multi_w_ = ag::Var<T>::leaf(uniform<T>({K, d}, bound, rng));
  multi_b_ = ag::Var<T>::leaf(uniform<T>({K}, bound, rng));
  binary_w_ = ag::Var<T>::leaf(uniform<T>({2 * K, d}, bound, rng));
  binary_b_ = ag::Var<T>::leaf(uniform<T>({2 * K}, bound, rng));
  params_.emplace_back("head.multi.weight", multi_w_);
  params_.emplace_back("head.multi.bias", multi_b_);
  params_.emplace_back("head.binary.weight", binary_w_);
  params_.emplace_back("head.binary.bias", binary_b_);
}

template <typename T>
std::vector<std::string> Model<T>::stage_tags() const {
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) tags.push_back("stage" + std::to_string(i + 1));
  return tags;
}

template <typename T>
GpsaStates Model<T>::make_gpsa_states(double alpha) const {
  GpsaStates states;
  for (std::size_t i = 0; i < stages_.size(); ++i)
    if (std::find(gpsa_stages_.begin(), gpsa_stages_.end(), stages_[i].tag) != gpsa_stages_.end())
      states.emplace(stages_[i].tag, style::GlobalUncertainty(cfg_.widths[i], alpha));
  return states;
}

template <typename T>
ForwardOutput<T> Model<T>::forward(const Tensor<T>& images, const ForwardOptions& opts, GpsaStates& gpsa,
                                   style::Rng& rng) {
  if (images.rank() != 4 || images.dim(1) != cfg_.in_channels)
    throw ShapeError("model input must be B x " + std::to_string(cfg_.in_channels) + " x H x W, got " +
                     shape_str(images.shape()));
  const bool training = opts.mode == style::Mode::train;
  const bool augment = training && opts.use_gpsa;
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  ag::Var<T> h = ag::Var<T>::constant(images);
  for (auto& st : stages_) {
    h = ag::conv2d(h, st.conv_w, st.conv_b, 1);
    h = ag::batch_norm(h, st.bn_gamma, st.bn_beta, st.running_mean, st.running_var, training,
                       training && opts.update_bn_stats);
    h = ag::relu(h);
    h = ag::max_pool2(h);
    if (!augment || std::find(gpsa_stages_.begin(), gpsa_stages_.end(), st.tag) == gpsa_stages_.end()) continue;

    auto it = gpsa.find(st.tag);
    if (it == gpsa.end()) throw ConfigError("no global uncertainty state for stage '" + st.tag + "'");
    auto& gu = it->second;
    const bool fire = coin(rng) < opts.gpsa_prob;
    const FeatureMap<T> z(h.value(), st.tag);
    const auto stats = style::instance_stats(z);
    style::update_global(gu, style::batch_stat_variance(stats));
    if (!fire) continue;
    const auto pert = style::sample_perturbation(stats, gu, rng);
    const int B = z.batch(), C = z.channels();
    Tensor<T> d_mu({B, C}), d_sigma({B, C});
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        d_mu.at(b, c) = pert.xi_mu.at(b, c) * static_cast<T>(std::sqrt(gu.u_mu[static_cast<std::size_t>(c)]));
        d_sigma.at(b, c) =
            pert.xi_sigma.at(b, c) * static_cast<T>(std::sqrt(gu.u_sigma[static_cast<std::size_t>(c)]));
      }
    h = ag::restyle(h, d_mu, d_sigma, style::kSigmaEps);
  }

  ForwardOutput<T> out;
  out.pre_pool = h;
  out.pooled = ag::global_avg_pool(h);
  out.class_logits = ag::linear(out.pooled, multi_w_, multi_b_);
  const int B = images.dim(0), K = cfg_.num_classes;
  out.binary_logits = ag::reshape(ag::linear(out.pooled, binary_w_, binary_b_), {B, K, 2});
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value().size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::state() const {
  std::vector<NamedTensor<T>> out;
  for (const auto& [name, p] : params_) out.push_back({name, p.value()});
  for (const auto& st : stages_) {
    out.push_back({st.tag + ".bn.running_mean", st.running_mean});
    out.push_back({st.tag + ".bn.running_var", st.running_var});
  }
  return out;
}

template <typename T>
void Model<T>::load_state(const std::vector<NamedTensor<T>>& state) {
  std::vector<std::pair<std::string, Tensor<T>*>> slots;
  for (auto& [name, p] : params_) slots.emplace_back(name, &p.mutable_value());
  for (auto& st : stages_) {
    slots.emplace_back(st.tag + ".bn.running_mean", &st.running_mean);
    slots.emplace_back(st.tag + ".bn.running_var", &st.running_var);
  }
  if (state.size() != slots.size())
    throw DataError("model state has " + std::to_string(state.size()) + " tensors, expected " +
                    std::to_string(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (state[i].name != slots[i].first)
      throw DataError("model state entry '" + state[i].name + "' where '" + slots[i].first + "' was expected");
    if (state[i].value.shape() != slots[i].second->shape())
      throw ShapeError("model state entry '" + state[i].name + "' has shape " + shape_str(state[i].value.shape()) +
                       ", expected " + shape_str(slots[i].second->shape()));
    *slots[i].second = state[i].value;
  }
}

template struct ForwardOutput<float>;
template struct ForwardOutput<double>;
template class Model<float>;
template class Model<double>;

}  // namespace osdg::model
