// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/losses.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "osdg/error.hpp"

namespace osdg::losses {
namespace {

void check_labels(std::span<const int> labels, int batch, int classes) {
  if (static_cast<int>(labels.size()) != batch)
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(batch));
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw DataError("loss: label " + std::to_string(y) + " outside known classes [0, " + std::to_string(classes) +
                      ")");
}

void check_binary(const Shape& s) {
  if (s.size() != 3 || s[2] != 2) throw ShapeError("binary head tensor must be B x K x 2, got " + shape_str(s));
  if (s[1] < 2) throw ShapeError("one-vs-all losses need at least 2 heads");
}

// Row-wise log-softmax of a length-n vector into out (double).
template <typename T>
void log_softmax(const T* x, int n, double* out) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, static_cast<double>(x[i]));
  double s = 0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  const double lse = m + std::log(s);
  for (int i = 0; i < n; ++i) out[i] = x[i] - lse;
}

// Hard negative: non-label head with the smallest clamped log p(y=0).
template <typename T>
int hardest_negative(const Tensor<T>& probs, int b, int y) {
  const int K = probs.dim(1);
  int best = -1;
  double best_log = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    if (k == y) continue;
    const double lp = std::log(static_cast<double>(probs.at(b, k, 1)) + kProbEps);
    if (lp < best_log) {
      best_log = lp;
      best = k;
    }
  }
  return best;
}

double neg_log(double p) { return -std::log(p + kProbEps); }

// d/dl for l = (l_pos, l_neg) of -log(p_j + eps) where j = 0 picks p(y=1).
// Returns the gradient on l_pos; the gradient on l_neg is its negation.
double neg_log_grad_pos(double p_pos, bool positive_term) {
  const double p_neg = 1.0 - p_pos;
  if (positive_term) return -p_pos * p_neg / (p_pos + kProbEps);
  return p_pos * p_neg / (p_neg + kProbEps);
}

}  // namespace

template <typename T>
Tensor<T> binary_probs(const Tensor<T>& binary_logits) {
  check_binary(binary_logits.shape());
  Tensor<T> p(binary_logits.shape());
  for (std::size_t i = 0; i < p.size(); i += 2) {
    const double d = static_cast<double>(binary_logits[i]) - binary_logits[i + 1];
    // p(y=1) = sigmoid(l_pos - l_neg), evaluated without overflow.
    const double pos = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
    p[i] = static_cast<T>(pos);
    p[i + 1] = static_cast<T>(d >= 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d)));
  }
  return p;
}

template <typename T>
double ce_loss(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("ce_loss: logits must be B x K");
  const int B = logits.dim(0), K = logits.dim(1);
  check_labels(labels, B, K);
  std::vector<double> ls(static_cast<std::size_t>(K));
  double total = 0;
  for (int b = 0; b < B; ++b) {
    log_softmax(logits.data() + static_cast<std::size_t>(b) * K, K, ls.data());
    total -= ls[static_cast<std::size_t>(labels[static_cast<std::size_t>(b)])];
  }
  return total / B;
}

template <typename T>
double kd_loss(const Tensor<T>& student, const Tensor<T>& teacher, double tau) {
  if (student.shape() != teacher.shape())
    throw ShapeError("kd_loss: student " + shape_str(student.shape()) + " vs teacher " + shape_str(teacher.shape()));
  if (student.rank() != 4) throw ShapeError("kd_loss: expected B x C x H x W");
  const int B = student.dim(0), C = student.dim(1);
  const std::size_t HW = static_cast<std::size_t>(student.dim(2)) * student.dim(3);
  std::vector<double> ts(static_cast<std::size_t>(C)), ss(ts.size()), lt(ts.size()), ls(ts.size());
  double total = 0;
  for (int b = 0; b < B; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * C * HW;
    for (std::size_t i = 0; i < HW; ++i) {
      for (int c = 0; c < C; ++c) {
        ts[static_cast<std::size_t>(c)] = teacher[base + c * HW + i] / tau;
        ss[static_cast<std::size_t>(c)] = student[base + c * HW + i] / tau;
      }
      log_softmax(ts.data(), C, lt.data());
      log_softmax(ss.data(), C, ls.data());
      double kl = 0;
      for (std::size_t c = 0; c < ts.size(); ++c) kl += std::exp(lt[c]) * (lt[c] - ls[c]);
      total += kl;
    }
  }
  return std::max(0.0, total / (static_cast<double>(HW) * B));
}

template <typename T>
double ova_loss(const Tensor<T>& probs, std::span<const int> labels) {
  check_binary(probs.shape());
  const int B = probs.dim(0);
  check_labels(labels, B, probs.dim(1));
  double total = 0;
  for (int b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    const int k = hardest_negative(probs, b, y);
    total += neg_log(probs.at(b, y, 0)) + neg_log(probs.at(b, k, 1));
  }
  return total / B;
}

template <typename T>
double eova_loss(const Tensor<T>& probs_edge, const Tensor<T>& probs_image, std::span<const int> labels) {
  check_binary(probs_edge.shape());
  if (probs_edge.shape() != probs_image.shape()) throw ShapeError("eova_loss: edge and image heads differ in shape");
  const int B = probs_edge.dim(0);
  check_labels(labels, B, probs_edge.dim(1));
  double total = 0;
  for (int b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    const int ke = hardest_negative(probs_edge, b, y);
    const int ki = hardest_negative(probs_image, b, y);
    total += neg_log(probs_edge.at(b, y, 0)) + 0.5 * neg_log(probs_edge.at(b, ke, 1)) +
             0.5 * neg_log(probs_image.at(b, ki, 1));
  }
  return total / B;
}

LossBreakdown total_loss(double ce, double eova, double kd, double lambda1, double lambda2) {
  if (!std::isfinite(ce) || !std::isfinite(eova) || !std::isfinite(kd))
    throw NumericError("non-finite loss component: ce=" + std::to_string(ce) + " eova=" + std::to_string(eova) +
                       " kd=" + std::to_string(kd));
  return LossBreakdown{ce, kd, eova, ce + lambda1 * eova + lambda2 * kd};
}

template <typename T>
ag::Var<T> ce_loss(const ag::Var<T>& logits, std::span<const int> labels) {
  const double value = ce_loss(logits.value(), labels);
  std::vector<int> ys(labels.begin(), labels.end());
  return ag::make_op<T>(Tensor<T>({1}, static_cast<T>(value)), {logits}, [ys = std::move(ys)](ag::Node<T>& self) {
    auto& in = *self.inputs[0];
    const int B = in.value.dim(0), K = in.value.dim(1);
    auto& dx = in.grad_buffer();
    const double g = static_cast<double>(self.grad[0]) / B;
    std::vector<double> ls(static_cast<std::size_t>(K));
    for (int b = 0; b < B; ++b) {
      log_softmax(in.value.data() + static_cast<std::size_t>(b) * K, K, ls.data());
      for (int k = 0; k < K; ++k) {
        const double target = k == ys[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
        dx.at(b, k) += static_cast<T>(g * (std::exp(ls[static_cast<std::size_t>(k)]) - target));
      }
    }
  });
}

template <typename T>
ag::Var<T> kd_loss(const ag::Var<T>& student, const Tensor<T>& teacher, double tau) {
  const double value = kd_loss(student.value(), teacher, tau);
  return ag::make_op<T>(Tensor<T>({1}, static_cast<T>(value)), {student}, [teacher, tau](ag::Node<T>& self) {
    auto& in = *self.inputs[0];
    const int B = in.value.dim(0), C = in.value.dim(1);
    const std::size_t HW = static_cast<std::size_t>(in.value.dim(2)) * in.value.dim(3);
    auto& dx = in.grad_buffer();
    const double g = static_cast<double>(self.grad[0]) / (static_cast<double>(HW) * B * tau);
    std::vector<double> ts(static_cast<std::size_t>(C)), ss(ts.size()), lt(ts.size()), ls(ts.size());
    for (int b = 0; b < B; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * C * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        for (int c = 0; c < C; ++c) {
          ts[static_cast<std::size_t>(c)] = teacher[base + c * HW + i] / tau;
          ss[static_cast<std::size_t>(c)] = in.value[base + c * HW + i] / tau;
        }
        log_softmax(ts.data(), C, lt.data());
        log_softmax(ss.data(), C, ls.data());
        for (int c = 0; c < C; ++c) {
          const auto cc = static_cast<std::size_t>(c);
          dx[base + c * HW + i] += static_cast<T>(g * (std::exp(ls[cc]) - std::exp(lt[cc])));
        }
      }
    }
  });
}

template <typename T>
ag::Var<T> ova_loss(const ag::Var<T>& binary_logits, std::span<const int> labels) {
  Tensor<T> probs = binary_probs(binary_logits.value());
  const double value = ova_loss(probs, labels);
  std::vector<int> ys(labels.begin(), labels.end());
  return ag::make_op<T>(Tensor<T>({1}, static_cast<T>(value)), {binary_logits},
                        [probs = std::move(probs), ys = std::move(ys)](ag::Node<T>& self) {
                          auto& dx = self.inputs[0]->grad_buffer();
                          const int B = probs.dim(0);
                          const double g = static_cast<double>(self.grad[0]) / B;
                          for (int b = 0; b < B; ++b) {
                            const int y = ys[static_cast<std::size_t>(b)];
                            const int k = hardest_negative(probs, b, y);
                            const double gp = g * neg_log_grad_pos(probs.at(b, y, 0), true);
                            const double gn = g * neg_log_grad_pos(probs.at(b, k, 0), false);
                            dx.at(b, y, 0) += static_cast<T>(gp);
                            dx.at(b, y, 1) -= static_cast<T>(gp);
                            dx.at(b, k, 0) += static_cast<T>(gn);
                            dx.at(b, k, 1) -= static_cast<T>(gn);
                          }
                        });
}

template <typename T>
ag::Var<T> eova_loss(const ag::Var<T>& binary_logits_edge, const ag::Var<T>& binary_logits_image,
                     std::span<const int> labels) {
  Tensor<T> pe = binary_probs(binary_logits_edge.value());
  Tensor<T> pi = binary_probs(binary_logits_image.value());
  const double value = eova_loss(pe, pi, labels);
  std::vector<int> ys(labels.begin(), labels.end());
  return ag::make_op<T>(
      Tensor<T>({1}, static_cast<T>(value)), {binary_logits_edge, binary_logits_image},
      [pe = std::move(pe), pi = std::move(pi), ys = std::move(ys)](ag::Node<T>& self) {
        const int B = pe.dim(0);
        const double g = static_cast<double>(self.grad[0]) / B;
        auto& edge = *self.inputs[0];
        auto& image = *self.inputs[1];
        for (int b = 0; b < B; ++b) {
          const int y = ys[static_cast<std::size_t>(b)];
          if (edge.requires_grad) {
            auto& dx = edge.grad_buffer();
            const int k = hardest_negative(pe, b, y);
            const double gp = g * neg_log_grad_pos(pe.at(b, y, 0), true);
            const double gn = 0.5 * g * neg_log_grad_pos(pe.at(b, k, 0), false);
            dx.at(b, y, 0) += static_cast<T>(gp);
            dx.at(b, y, 1) -= static_cast<T>(gp);
            dx.at(b, k, 0) += static_cast<T>(gn);
            dx.at(b, k, 1) -= static_cast<T>(gn);
          }
          if (image.requires_grad) {
            auto& dx = image.grad_buffer();
            const int k = hardest_negative(pi, b, y);
            const double gn = 0.5 * g * neg_log_grad_pos(pi.at(b, k, 0), false);
            dx.at(b, k, 0) += static_cast<T>(gn);
            dx.at(b, k, 1) -= static_cast<T>(gn);
          }
        }
      });
}

#define OSDG_INSTANTIATE(T)                                                                               \
  template Tensor<T> binary_probs(const Tensor<T>&);                                                      \
  template double ce_loss(const Tensor<T>&, std::span<const int>);                                        \
  template double kd_loss(const Tensor<T>&, const Tensor<T>&, double);                                    \
  template double ova_loss(const Tensor<T>&, std::span<const int>);                                       \
  template double eova_loss(const Tensor<T>&, const Tensor<T>&, std::span<const int>);                    \
  template ag::Var<T> ce_loss(const ag::Var<T>&, std::span<const int>);                                   \
  template ag::Var<T> kd_loss(const ag::Var<T>&, const Tensor<T>&, double);                               \
  template ag::Var<T> ova_loss(const ag::Var<T>&, std::span<const int>);                                  \
  template ag::Var<T> eova_loss(const ag::Var<T>&, const ag::Var<T>&, std::span<const int>);

OSDG_INSTANTIATE(float)
OSDG_INSTANTIATE(double)
#undef OSDG_INSTANTIATE

}  // namespace osdg::losses
