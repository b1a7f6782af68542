// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>

#include "osdg/error.hpp"

namespace osdg::ag {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void expect_rank(const Shape& s, int rank, const char* op) {
  if (static_cast<int>(s.size()) != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
}

// col: (Cin*k*k) x (B*H*W), rows ordered (cin, kh, kw), columns (b, h, w).
template <typename T>
void im2col(const Tensor<T>& x, int k, int pad, Tensor<T>& col) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t cols = static_cast<std::size_t>(B) * H * W;
  col = Tensor<T>({C * k * k, static_cast<int>(cols)});
  T* out = col.data();
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        T* row = out + (static_cast<std::size_t>(c) * k * k + kh * k + kw) * cols;
        for (int b = 0; b < B; ++b) {
          const T* src = x.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
          T* dst = row + static_cast<std::size_t>(b) * H * W;
          for (int h = 0; h < H; ++h) {
            const int ih = h + kh - pad;
            if (ih < 0 || ih >= H) {
              std::fill(dst + h * W, dst + (h + 1) * W, T{0});
              continue;
            }
            for (int w = 0; w < W; ++w) {
              const int iw = w + kw - pad;
              dst[h * W + w] = (iw < 0 || iw >= W) ? T{0} : src[ih * W + iw];
            }
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, int k, int pad, Tensor<T>& dx) {
  const int B = dx.dim(0), C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const std::size_t cols = static_cast<std::size_t>(B) * H * W;
  for (int c = 0; c < C; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + (static_cast<std::size_t>(c) * k * k + kh * k + kw) * cols;
        for (int b = 0; b < B; ++b) {
          T* dst = dx.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
          const T* src = row + static_cast<std::size_t>(b) * H * W;
          for (int h = 0; h < H; ++h) {
            const int ih = h + kh - pad;
            if (ih < 0 || ih >= H) continue;
            for (int w = 0; w < W; ++w) {
              const int iw = w + kw - pad;
              if (iw >= 0 && iw < W) dst[ih * W + iw] += src[h * W + w];
            }
          }
        }
      }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int pad) {
  expect_rank(x.shape(), 4, "conv2d input");
  expect_rank(weight.shape(), 4, "conv2d weight");
  const int B = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int Cout = weight.shape()[0], k = weight.shape()[2];
  if (weight.shape()[1] != Cin || weight.shape()[3] != k || 2 * pad != k - 1)
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()) + " and pad " + std::to_string(pad));
  if (bias.value().size() != static_cast<std::size_t>(Cout)) throw ShapeError("conv2d: bias size mismatch");

  const int HW = H * W;
  const int N = B * HW;
  const int K = Cin * k * k;
  Tensor<T> col;
  im2col(x.value(), k, pad, col);

  RowMat<T> out_mat(Cout, N);
  out_mat.noalias() = ConstMatMap<T>(weight.value().data(), Cout, K) * ConstMatMap<T>(col.data(), K, N);
  Tensor<T> out({B, Cout, H, W});
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co) {
      const T bv = bias.value()[static_cast<std::size_t>(co)];
      const T* src = out_mat.data() + static_cast<std::size_t>(co) * N + static_cast<std::size_t>(b) * HW;
      T* dst = out.data() + (static_cast<std::size_t>(b) * Cout + co) * HW;
      for (int i = 0; i < HW; ++i) dst[i] = src[i] + bv;
    }

  return make_op<T>(std::move(out), {x, weight, bias},
                    [col = std::move(col), B, Cout, HW, N, K, k, pad](Node<T>& self) {
                      RowMat<T> g(Cout, N);
                      for (int b = 0; b < B; ++b)
                        for (int co = 0; co < Cout; ++co) {
                          const T* src = self.grad.data() + (static_cast<std::size_t>(b) * Cout + co) * HW;
                          std::copy(src, src + HW, g.data() + static_cast<std::size_t>(co) * N +
                                                       static_cast<std::size_t>(b) * HW);
                        }
                      auto& xin = *self.inputs[0];
                      auto& win = *self.inputs[1];
                      auto& bin = *self.inputs[2];
                      const ConstMatMap<T> colm(col.data(), K, N);
                      if (win.requires_grad) {
                        MatMap<T> dw(win.grad_buffer().data(), Cout, K);
                        dw.noalias() += g * colm.transpose();
                      }
                      if (bin.requires_grad) {
                        auto& db = bin.grad_buffer();
                        for (int co = 0; co < Cout; ++co) db[static_cast<std::size_t>(co)] += g.row(co).sum();
                      }
                      if (xin.requires_grad) {
                        RowMat<T> dcol(K, N);
                        dcol.noalias() = ConstMatMap<T>(win.value.data(), Cout, K).transpose() * g;
                        col2im_add(dcol.data(), k, pad, xin.grad_buffer());
                      }
                    });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, bool update_running, double momentum, double eps) {
  expect_rank(x.shape(), 4, "batch_norm");
  const int B = x.shape()[0], C = x.shape()[1];
  const std::size_t HW = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  const double count = static_cast<double>(B) * static_cast<double>(HW);
  const auto& xv = x.value();

  Tensor<T> mean({C}), invstd({C});
  for (int c = 0; c < C; ++c) {
    double m, v;
    if (training) {
      double s = 0;
      for (int b = 0; b < B; ++b) {
        const T* p = xv.data() + (static_cast<std::size_t>(b) * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      m = s / count;
      double ss = 0;
      for (int b = 0; b < B; ++b) {
        const T* p = xv.data() + (static_cast<std::size_t>(b) * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = p[i] - m;
          ss += d * d;
        }
      }
      v = ss / count;
      if (update_running) {
        const double unbiased = count > 1 ? ss / (count - 1) : v;
        running_mean[static_cast<std::size_t>(c)] =
            static_cast<T>((1 - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * m);
        running_var[static_cast<std::size_t>(c)] =
            static_cast<T>((1 - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * unbiased);
      }
    } else {
      m = running_mean[static_cast<std::size_t>(c)];
      v = running_var[static_cast<std::size_t>(c)];
    }
    mean[static_cast<std::size_t>(c)] = static_cast<T>(m);
    invstd[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(v + eps));
  }

  Tensor<T> xhat(x.shape()), out(x.shape());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
      const T m = mean[static_cast<std::size_t>(c)], is = invstd[static_cast<std::size_t>(c)];
      const T g = gamma.value()[static_cast<std::size_t>(c)], bt = beta.value()[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < HW; ++i) {
        const T xh = (xv[off + i] - m) * is;
        xhat[off + i] = xh;
        out[off + i] = g * xh + bt;
      }
    }

  return make_op<T>(std::move(out), {x, gamma, beta},
                    [xhat = std::move(xhat), invstd = std::move(invstd), B, C, HW, count, training](Node<T>& self) {
                      auto& xin = *self.inputs[0];
                      auto& gin = *self.inputs[1];
                      auto& bin = *self.inputs[2];
                      const auto& dy = self.grad;
                      for (int c = 0; c < C; ++c) {
                        double sdy = 0, sdyx = 0;
                        for (int b = 0; b < B; ++b) {
                          const std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
                          for (std::size_t i = 0; i < HW; ++i) {
                            sdy += dy[off + i];
                            sdyx += static_cast<double>(dy[off + i]) * xhat[off + i];
                          }
                        }
                        if (gin.requires_grad) gin.grad_buffer()[static_cast<std::size_t>(c)] += static_cast<T>(sdyx);
                        if (bin.requires_grad) bin.grad_buffer()[static_cast<std::size_t>(c)] += static_cast<T>(sdy);
                        if (!xin.requires_grad) continue;
                        auto& dx = xin.grad_buffer();
                        const double g = gin.value[static_cast<std::size_t>(c)];
                        const double is = invstd[static_cast<std::size_t>(c)];
                        for (int b = 0; b < B; ++b) {
                          const std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
                          for (std::size_t i = 0; i < HW; ++i) {
                            double d = dy[off + i];
                            if (training) d = d - sdy / count - xhat[off + i] * sdyx / count;
                            dx[off + i] += static_cast<T>(g * is * d);
                          }
                        }
                      }
                    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  // Written so that NaN passes through and reaches the loss check.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] < T{0} ? T{0} : xv[i];
  return make_op<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& dx = in.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (in.value[i] > T{0}) dx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> max_pool2(const Var<T>& x) {
  expect_rank(x.shape(), 4, "max_pool2");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int Ho = H / 2, Wo = W / 2;
  if (Ho < 1 || Wo < 1) throw ShapeError("max_pool2: input too small " + shape_str(x.shape()));
  Tensor<T> out({B, C, Ho, Wo});
  std::vector<std::uint32_t> argmax(out.size());
  const auto& xv = x.value();
  std::size_t o = 0;
  for (int bc = 0; bc < B * C; ++bc) {
    const std::size_t base = static_cast<std::size_t>(bc) * H * W;
    for (int h = 0; h < Ho; ++h)
      for (int w = 0; w < Wo; ++w, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * h) * W + 2 * w;
        for (int dh = 0; dh < 2; ++dh)
          for (int dw = 0; dw < 2; ++dw) {
            const std::size_t idx = base + static_cast<std::size_t>(2 * h + dh) * W + 2 * w + dw;
            if (xv[idx] > xv[best]) best = idx;
          }
        out[o] = xv[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
  }
  return make_op<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
    auto& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  expect_rank(x.shape(), 4, "global_avg_pool");
  const int B = x.shape()[0], C = x.shape()[1];
  const std::size_t HW = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  Tensor<T> out({B, C});
  const auto& xv = x.value();
  for (std::size_t bc = 0; bc < out.size(); ++bc) {
    double s = 0;
    for (std::size_t i = 0; i < HW; ++i) s += xv[bc * HW + i];
    out[bc] = static_cast<T>(s / static_cast<double>(HW));
  }
  return make_op<T>(std::move(out), {x}, [HW](Node<T>& self) {
    auto& dx = self.inputs[0]->grad_buffer();
    const T inv = T{1} / static_cast<T>(HW);
    for (std::size_t bc = 0; bc < self.grad.size(); ++bc) {
      const T g = self.grad[bc] * inv;
      for (std::size_t i = 0; i < HW; ++i) dx[bc * HW + i] += g;
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  expect_rank(x.shape(), 2, "linear input");
  expect_rank(weight.shape(), 2, "linear weight");
  const int B = x.shape()[0], In = x.shape()[1], Out = weight.shape()[0];
  if (weight.shape()[1] != In || bias.value().size() != static_cast<std::size_t>(Out))
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  Tensor<T> out({B, Out});
  MatMap<T> om(out.data(), B, Out);
  om.noalias() = ConstMatMap<T>(x.value().data(), B, In) * ConstMatMap<T>(weight.value().data(), Out, In).transpose();
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < Out; ++o) om(b, o) += bias.value()[static_cast<std::size_t>(o)];
  return make_op<T>(std::move(out), {x, weight, bias}, [B, In, Out](Node<T>& self) {
    auto& xin = *self.inputs[0];
    auto& win = *self.inputs[1];
    auto& bin = *self.inputs[2];
    const ConstMatMap<T> g(self.grad.data(), B, Out);
    if (xin.requires_grad) {
      MatMap<T> dx(xin.grad_buffer().data(), B, In);
      dx.noalias() += g * ConstMatMap<T>(win.value.data(), Out, In);
    }
    if (win.requires_grad) {
      MatMap<T> dw(win.grad_buffer().data(), Out, In);
      dw.noalias() += g.transpose() * ConstMatMap<T>(xin.value.data(), B, In);
    }
    if (bin.requires_grad) {
      auto& db = bin.grad_buffer();
      for (int o = 0; o < Out; ++o) db[static_cast<std::size_t>(o)] += g.col(o).sum();
    }
  });
}

template <typename T>
Var<T> restyle(const Var<T>& x, const Tensor<T>& d_mu, const Tensor<T>& d_sigma, double eps) {
  expect_rank(x.shape(), 4, "restyle");
  const int B = x.shape()[0], C = x.shape()[1];
  const std::size_t HW = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  if (d_mu.shape() != Shape{B, C} || d_sigma.shape() != Shape{B, C})
    throw ShapeError("restyle: perturbation must be " + shape_str({B, C}));
  const auto& xv = x.value();
  Tensor<T> normed(x.shape()), out(x.shape());
  Tensor<T> scale({B, C}), sigma({B, C});
  for (std::size_t bc = 0; bc < static_cast<std::size_t>(B) * C; ++bc) {
    const T* p = xv.data() + bc * HW;
    double s = 0;
    for (std::size_t i = 0; i < HW; ++i) s += p[i];
    const double mu = s / static_cast<double>(HW);
    double ss = 0;
    for (std::size_t i = 0; i < HW; ++i) ss += (p[i] - mu) * (p[i] - mu);
    const double sg = std::sqrt(ss / static_cast<double>(HW) + eps);
    const double gamma = sg + d_sigma[bc];
    const double beta = mu + d_mu[bc];
    sigma[bc] = static_cast<T>(sg);
    scale[bc] = static_cast<T>(gamma / sg);
    for (std::size_t i = 0; i < HW; ++i) {
      const double n = (p[i] - mu) / sg;
      normed[bc * HW + i] = static_cast<T>(n);
      out[bc * HW + i] = static_cast<T>(gamma * n + beta);
    }
  }
  return make_op<T>(std::move(out), {x},
                    [normed = std::move(normed), scale = std::move(scale), HW](Node<T>& self) {
                      auto& dx = self.inputs[0]->grad_buffer();
                      const double invN = 1.0 / static_cast<double>(HW);
                      for (std::size_t bc = 0; bc < scale.size(); ++bc) {
                        const T* g = self.grad.data() + bc * HW;
                        const T* n = normed.data() + bc * HW;
                        double s1 = 0, s2 = 0;
                        for (std::size_t i = 0; i < HW; ++i) {
                          s1 += g[i];
                          s2 += static_cast<double>(g[i]) * n[i];
                        }
                        const double r = scale[bc];
                        for (std::size_t i = 0; i < HW; ++i) {
                          const double centred = g[i] - s1 * invN - n[i] * s2 * invN;
                          dx[bc * HW + i] += static_cast<T>(r * centred + s1 * invN + n[i] * s2 * invN);
                        }
                      }
                    });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  return make_op<T>(x.value().reshaped(std::move(shape)), {x}, [](Node<T>& self) {
    auto& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) throw ShapeError("weighted_sum: arity mismatch");
  double total = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) throw ShapeError("weighted_sum: inputs must be scalars");
    total += weights[i] * static_cast<double>(scalars[i].value()[0]);
  }
  return make_op<T>(Tensor<T>({1}, static_cast<T>(total)), scalars, [weights](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (self.inputs[i]->requires_grad)
        self.inputs[i]->grad_buffer()[0] += static_cast<T>(weights[i]) * self.grad[0];
  });
}

#define OSDG_INSTANTIATE(T)                                                                                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int);                                        \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, bool,      \
                             double, double);                                                                       \
  template Var<T> relu(const Var<T>&);                                                                             \
  template Var<T> max_pool2(const Var<T>&);                                                                        \
  template Var<T> global_avg_pool(const Var<T>&);                                                                  \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                             \
  template Var<T> restyle(const Var<T>&, const Tensor<T>&, const Tensor<T>&, double);                              \
  template Var<T> reshape(const Var<T>&, Shape);                                                                   \
  template Var<T> weighted_sum(const std::vector<Var<T>>&, const std::vector<double>&);

OSDG_INSTANTIATE(float)
OSDG_INSTANTIATE(double)
#undef OSDG_INSTANTIATE

}  // namespace osdg::ag
