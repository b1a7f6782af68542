// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

// Global probabilistic style augmentation: per-instance channel statistics,
// their batch-level spread, a moving-average global estimate of that spread,
// and AdaIN-style replacement of the statistics with sampled ones.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "osdg/tensor.hpp"
#include "osdg/types.hpp"

namespace osdg::style {

using Rng = std::mt19937_64;

/// Guard added to the spatial variance before taking its square root.
inline constexpr double kSigmaEps = 1e-6;

enum class Mode { train, eval };

/// Channel-wise spatial statistics, all B x C.
template <typename T>
struct StyleStats {
  Tensor<T> mu;
  Tensor<T> var;    // population variance over H*W
  Tensor<T> sigma;  // sqrt(var + eps)
};

/// Population variance of the statistics across the batch axis, each of length C.
template <typename T>
struct BatchStatVariance {
  Tensor<T> var_mu;
  Tensor<T> var_sigma;
};

/// Moving-average estimate of the statistic variances. Kept in double
/// regardless of the feature precision since it is long-lived state.
struct GlobalUncertainty {
  std::vector<double> u_mu;
  std::vector<double> u_sigma;
  double alpha = 0.8;
  std::int64_t update_count = 0;

  GlobalUncertainty() = default;
  /// Zero-initialised state for `channels` channels.
  GlobalUncertainty(int channels, double alpha);

  int channels() const noexcept { return static_cast<int>(u_mu.size()); }
  bool operator==(const GlobalUncertainty&) const = default;
};

/// New statistics drawn with the reparameterisation trick; the standard
/// normal draws are kept so beta/gamma can be reconstructed exactly.
template <typename T>
struct StylePerturbation {
  Tensor<T> beta;   // new mean, B x C
  Tensor<T> gamma;  // new standard deviation, B x C
  Tensor<T> xi_mu;
  Tensor<T> xi_sigma;
};

template <typename T>
StyleStats<T> instance_stats(const FeatureMap<T>& z, T eps = static_cast<T>(kSigmaEps));

template <typename T>
BatchStatVariance<T> batch_stat_variance(const StyleStats<T>& stats);

/// u <- alpha*u + (1-alpha)*Sigma^2 for both statistics. Throws ShapeError on
/// a channel mismatch.
template <typename T>
void update_global(GlobalUncertainty& gu, const BatchStatVariance<T>& bsv);

/// Draws xi_mu then xi_sigma, row-major over (instance, channel).
template <typename T>
StylePerturbation<T> sample_perturbation(const StyleStats<T>& stats, const GlobalUncertainty& gu, Rng& rng);

/// Rebuilds beta/gamma from stored draws; used to check the reconstruction invariant.
template <typename T>
StylePerturbation<T> perturbation_from_noise(const StyleStats<T>& stats, const GlobalUncertainty& gu,
                                             Tensor<T> xi_mu, Tensor<T> xi_sigma);

/// z* = gamma * (z - mu) / sigma + beta, broadcast over the spatial axes.
template <typename T>
FeatureMap<T> restyle(const FeatureMap<T>& z, const StyleStats<T>& stats, const StylePerturbation<T>& pert);

/// Full augmentation on a plain feature map. In train mode the global
/// estimate is updated from every batch; with probability `prob` the
/// statistics are then resampled from it and the map restyled. Eval mode is
/// the identity and leaves `gu` untouched. The coin is drawn first.
template <typename T>
FeatureMap<T> gpsa_layer(const FeatureMap<T>& z, GlobalUncertainty& gu, Mode mode, double prob, Rng& rng);

}  // namespace osdg::style
