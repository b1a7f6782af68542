// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "osdg/autograd.hpp"

namespace osdg::ag {

/// 2-D convolution, stride 1, square kernel, zero padding `pad`.
/// x: B x Cin x H x W, weight: Cout x Cin x k x k, bias: Cout.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int pad);

/// Per-channel batch normalisation over (B, H, W). In training mode the batch
/// statistics are used and, when `update_running`, folded into the running
/// buffers with the given momentum (unbiased variance for the running copy).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, bool update_running, double momentum = 0.1,
                  double eps = 1e-5);

template <typename T>
Var<T> relu(const Var<T>& x);

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
template <typename T>
Var<T> max_pool2(const Var<T>& x);

/// B x C x H x W -> B x C.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// x: B x In, weight: Out x In, bias: Out.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Replaces each instance's channel statistics: with mu/sigma the spatial
/// mean and sqrt(var + eps) of x, returns (sigma + d_sigma) * (x - mu) / sigma
/// + mu + d_mu. `d_mu` and `d_sigma` (B x C) are constants, so the
/// differentiable path runs through x and its own statistics.
template <typename T>
Var<T> restyle(const Var<T>& x, const Tensor<T>& d_mu, const Tensor<T>& d_sigma, double eps);

/// Same data viewed with a new shape of equal size.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Weighted sum of scalars: sum_i w_i * s_i.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<double>& weights);

}  // namespace osdg::ag
