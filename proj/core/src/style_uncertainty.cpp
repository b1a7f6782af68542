// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/style_uncertainty.hpp"

#include <cmath>
#include <string>

#include "osdg/error.hpp"

namespace osdg::style {

GlobalUncertainty::GlobalUncertainty(int channels, double alpha_)
    : u_mu(static_cast<std::size_t>(channels), 0.0),
      u_sigma(static_cast<std::size_t>(channels), 0.0),
      alpha(alpha_) {}

template <typename T>
StyleStats<T> instance_stats(const FeatureMap<T>& z, T eps) {
  const int B = z.batch(), C = z.channels();
  const std::size_t hw = static_cast<std::size_t>(z.height()) * z.width();
  if (hw == 0) throw ShapeError("instance_stats: empty spatial extent");
  StyleStats<T> s{Tensor<T>({B, C}), Tensor<T>({B, C}), Tensor<T>({B, C})};
  const T* src = z.data.data();
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const T* p = src + (static_cast<std::size_t>(b) * C + c) * hw;
      // Welford accumulation in double.
      double mean = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double x = p[i];
        const double d = x - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (x - mean);
      }
      const double var = m2 / static_cast<double>(hw);
      s.mu.at(b, c) = static_cast<T>(mean);
      s.var.at(b, c) = static_cast<T>(var);
      s.sigma.at(b, c) = static_cast<T>(std::sqrt(var + static_cast<double>(eps)));
    }
  }
  return s;
}

template <typename T>
BatchStatVariance<T> batch_stat_variance(const StyleStats<T>& stats) {
  const int B = stats.mu.dim(0), C = stats.mu.dim(1);
  BatchStatVariance<T> out{Tensor<T>({C}), Tensor<T>({C})};
  for (int c = 0; c < C; ++c) {
    double sm = 0, ss = 0;
    for (int b = 0; b < B; ++b) {
      sm += stats.mu.at(b, c);
      ss += stats.sigma.at(b, c);
    }
    sm /= B;
    ss /= B;
    double vm = 0, vs = 0;
    for (int b = 0; b < B; ++b) {
      const double dm = stats.mu.at(b, c) - sm;
      const double ds = stats.sigma.at(b, c) - ss;
      vm += dm * dm;
      vs += ds * ds;
    }
    out.var_mu[static_cast<std::size_t>(c)] = static_cast<T>(vm / B);
    out.var_sigma[static_cast<std::size_t>(c)] = static_cast<T>(vs / B);
  }
  return out;
}

template <typename T>
void update_global(GlobalUncertainty& gu, const BatchStatVariance<T>& bsv) {
  const auto C = static_cast<std::size_t>(gu.channels());
  if (bsv.var_mu.size() != C || bsv.var_sigma.size() != C)
    throw ShapeError("update_global: uncertainty has " + std::to_string(C) + " channels, batch statistics have " +
                     std::to_string(bsv.var_mu.size()));
  const double a = gu.alpha;
  for (std::size_t c = 0; c < C; ++c) {
    gu.u_mu[c] = a * gu.u_mu[c] + (1.0 - a) * static_cast<double>(bsv.var_mu[c]);
    gu.u_sigma[c] = a * gu.u_sigma[c] + (1.0 - a) * static_cast<double>(bsv.var_sigma[c]);
  }
  ++gu.update_count;
}

template <typename T>
StylePerturbation<T> perturbation_from_noise(const StyleStats<T>& stats, const GlobalUncertainty& gu,
                                             Tensor<T> xi_mu, Tensor<T> xi_sigma) {
  const int B = stats.mu.dim(0), C = stats.mu.dim(1);
  if (C != gu.channels()) throw ShapeError("perturbation: channel mismatch with global uncertainty");
  if (xi_mu.shape() != stats.mu.shape() || xi_sigma.shape() != stats.mu.shape())
    throw ShapeError("perturbation: noise shape must be " + shape_str(stats.mu.shape()));
  StylePerturbation<T> p{Tensor<T>({B, C}), Tensor<T>({B, C}), std::move(xi_mu), std::move(xi_sigma)};
  for (int c = 0; c < C; ++c) {
    const T su = static_cast<T>(std::sqrt(gu.u_mu[static_cast<std::size_t>(c)]));
    const T ss = static_cast<T>(std::sqrt(gu.u_sigma[static_cast<std::size_t>(c)]));
    for (int b = 0; b < B; ++b) {
      p.beta.at(b, c) = stats.mu.at(b, c) + p.xi_mu.at(b, c) * su;
      p.gamma.at(b, c) = stats.sigma.at(b, c) + p.xi_sigma.at(b, c) * ss;
    }
  }
  return p;
}

template <typename T>
StylePerturbation<T> sample_perturbation(const StyleStats<T>& stats, const GlobalUncertainty& gu, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor<T> xi_mu(stats.mu.shape()), xi_sigma(stats.mu.shape());
  for (auto& v : xi_mu.values()) v = static_cast<T>(normal(rng));
  for (auto& v : xi_sigma.values()) v = static_cast<T>(normal(rng));
  return perturbation_from_noise(stats, gu, std::move(xi_mu), std::move(xi_sigma));
}

template <typename T>
FeatureMap<T> restyle(const FeatureMap<T>& z, const StyleStats<T>& stats, const StylePerturbation<T>& pert) {
  const int B = z.batch(), C = z.channels();
  const std::size_t hw = static_cast<std::size_t>(z.height()) * z.width();
  Tensor<T> out(z.data.shape());
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * C + c) * hw;
      const T mu = stats.mu.at(b, c);
      const T scale = pert.gamma.at(b, c) / stats.sigma.at(b, c);
      const T shift = pert.beta.at(b, c);
      for (std::size_t i = 0; i < hw; ++i) out[off + i] = scale * (z.data[off + i] - mu) + shift;
    }
  }
  return FeatureMap<T>(std::move(out), z.stage_tag);
}

template <typename T>
FeatureMap<T> gpsa_layer(const FeatureMap<T>& z, GlobalUncertainty& gu, Mode mode, double prob, Rng& rng) {
  if (mode == Mode::eval) return z;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool fire = coin(rng) < prob;
  const auto stats = instance_stats(z);
  update_global(gu, batch_stat_variance(stats));
  if (!fire) return z;
  return restyle(z, stats, sample_perturbation(stats, gu, rng));
}

#define OSDG_INSTANTIATE(T)                                                                                   \
  template StyleStats<T> instance_stats(const FeatureMap<T>&, T);                                             \
  template BatchStatVariance<T> batch_stat_variance(const StyleStats<T>&);                                    \
  template void update_global(GlobalUncertainty&, const BatchStatVariance<T>&);                               \
  template StylePerturbation<T> sample_perturbation(const StyleStats<T>&, const GlobalUncertainty&, Rng&);    \
  template StylePerturbation<T> perturbation_from_noise(const StyleStats<T>&, const GlobalUncertainty&,       \
                                                        Tensor<T>, Tensor<T>);                                \
  template FeatureMap<T> restyle(const FeatureMap<T>&, const StyleStats<T>&, const StylePerturbation<T>&);    \
  template FeatureMap<T> gpsa_layer(const FeatureMap<T>&, GlobalUncertainty&, Mode, double, Rng&);

OSDG_INSTANTIATE(float)
OSDG_INSTANTIATE(double)
#undef OSDG_INSTANTIATE

}  // namespace osdg::style
