// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "osdg/autograd.hpp"
#include "osdg/tensor.hpp"
#include "osdg/types.hpp"

namespace osdg::losses {

/// Added to every probability inside a one-vs-all -log term.
inline constexpr double kProbEps = 1e-8;

// Binary head tensors are B x K x 2 with index 0 the positive ("is class k")
// entry and index 1 the negative ("is another class") entry.

/// Per-head two-way softmax: B x K x 2 logits -> (p(y=1|x), p(y=0|x)) pairs.
template <typename T>
Tensor<T> binary_probs(const Tensor<T>& binary_logits);

/// Mean over the batch of -log softmax(logits)[label]. Throws DataError when a
/// label is outside [0, K).
template <typename T>
double ce_loss(const Tensor<T>& logits, std::span<const int> labels);

/// Channel-softmax KL(teacher || student) at temperature tau, summed over
/// channels, averaged over spatial locations and then over the batch.
template <typename T>
double kd_loss(const Tensor<T>& student, const Tensor<T>& teacher, double tau);

/// Per sample: -log p^y(1|x) - log p^k(0|x), with k the non-label head of
/// lowest p(0|x) (the hardest negative). Averaged over the batch.
template <typename T>
double ova_loss(const Tensor<T>& probs, std::span<const int> labels);

/// Edge-map variant: positive term on the edge view, and half-weighted hard
/// negative terms chosen independently on the edge view and the image.
template <typename T>
double eova_loss(const Tensor<T>& probs_edge, const Tensor<T>& probs_image, std::span<const int> labels);

/// Combines the components as ce + lambda1*eova + lambda2*kd. Throws
/// NumericError if any component is non-finite.
LossBreakdown total_loss(double ce, double eova, double kd, double lambda1, double lambda2);

// Differentiable counterparts; forward values agree with the functions above.

template <typename T>
ag::Var<T> ce_loss(const ag::Var<T>& logits, std::span<const int> labels);

/// `teacher` is a constant: no gradient is produced for it.
template <typename T>
ag::Var<T> kd_loss(const ag::Var<T>& student, const Tensor<T>& teacher, double tau);

template <typename T>
ag::Var<T> ova_loss(const ag::Var<T>& binary_logits, std::span<const int> labels);

template <typename T>
ag::Var<T> eova_loss(const ag::Var<T>& binary_logits_edge, const ag::Var<T>& binary_logits_image,
                     std::span<const int> labels);

}  // namespace osdg::losses
