// Copyright 2026 The fna Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fna/ops.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fna/error.h"
#include "fna/parallel.h"

namespace fna::ops {
namespace {

template <class T>
using NodeT = detail::Node<T>;

template <class T>
using BackwardFn = std::function<void(NodeT<T>&)>;

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      BackwardFn<T> backward_fn) {
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->id = detail::next_node_id();
  bool track = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) {
      if (in->defined() && in->requires_grad()) track = true;
    }
  }
  if (track) {
    node->requires_grad = true;
    for (const auto* in : inputs) {
      if (in->defined()) node->inputs.push_back(in->node());
    }
    node->backward = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <class T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         shape_string(x.shape()));
  }
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Interpolation taps for one axis under the align-corners convention.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps make_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = out == 1 ? 0.0
                        : static_cast<double>(o) * static_cast<double>(in - 1) /
                              static_cast<double>(out - 1);
    auto lo = std::min(static_cast<std::size_t>(std::floor(s)), in - 1);
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = s - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return make_result<T>("add", a.shape(), std::move(y), {&a, &b},
                        [](NodeT<T>& self) {
                          for (auto& in : self.inputs) {
                            if (!in->requires_grad) continue;
                            auto& g = in->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i];
                          }
                        });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return make_result<T>("sub", a.shape(), std::move(y), {&a, &b},
                        [](NodeT<T>& self) {
                          for (std::size_t k = 0; k < 2; ++k) {
                            auto& in = self.inputs[k];
                            if (!in->requires_grad) continue;
                            auto& g = in->ensure_grad();
                            const T sign = k == 0 ? T(1) : T(-1);
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += sign * self.grad[i];
                          }
                        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return make_result<T>("mul", a.shape(), std::move(y), {&a, &b},
                        [](NodeT<T>& self) {
                          auto& na = *self.inputs[0];
                          auto& nb = *self.inputs[1];
                          if (na.requires_grad) {
                            auto& g = na.ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i] * nb.value[i];
                          }
                          if (nb.requires_grad) {
                            auto& g = nb.ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i] * na.value[i];
                          }
                        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> y(a.data().begin(), a.data().end());
  for (auto& v : y) v *= factor;
  return make_result<T>("scale", a.shape(), std::move(y), {&a},
                        [factor](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += factor * self.grad[i];
                        });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  return make_result<T>("sum", Shape{1}, {s}, {&a}, [](NodeT<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>("mean", Shape{1}, {s * inv}, {&a},
                        [inv](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (auto& v : g) v += self.grad[0] * inv;
                        });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " -> " +
                         shape_string(shape));
  }
  std::vector<T> y(a.data().begin(), a.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(y), {&a},
                        [](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += self.grad[i];
                        });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  require_rank(weight, 2, "linear weight");
  const std::size_t out = weight.dim(0);
  const std::size_t in = weight.dim(1);
  if (x.shape().back() != in) {
    throw DimensionError("linear: input " + shape_string(x.shape()) +
                         " vs weight " + shape_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out)) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) +
                         " for " + std::to_string(out) + " outputs");
  }
  const std::size_t rows = x.numel() / in;
  auto w = weight.data();
  std::vector<T> wt(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w[o * in + i];

  std::vector<T> y(rows * out, T(0));
  const T* xv = x.data().data();
  const T* bv = bias.defined() ? bias.data().data() : nullptr;
  parallel_for(static_cast<std::int64_t>(rows),
               static_cast<std::int64_t>(in * out), [&](std::int64_t n) {
                 T* yr = y.data() + n * out;
                 if (bv) std::copy(bv, bv + out, yr);
                 const T* xr = xv + n * in;
                 for (std::size_t i = 0; i < in; ++i) {
                   if (xr[i] != T(0)) axpy(xr[i], wt.data() + i * out, yr, out);
                 }
               });

  Shape shape = x.shape();
  shape.back() = out;
  return make_result<T>(
      "linear", std::move(shape), std::move(y), {&x, &weight, &bias},
      [rows, in, out](NodeT<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        const T* gy = self.grad.data();
        if (nx.requires_grad) {
          T* gx = nx.ensure_grad().data();
          const T* wv = nw.value.data();
          parallel_for(static_cast<std::int64_t>(rows),
                       static_cast<std::int64_t>(in * out), [&](std::int64_t n) {
                         for (std::size_t o = 0; o < out; ++o) {
                           const T g = gy[n * out + o];
                           if (g != T(0)) axpy(g, wv + o * in, gx + n * in, in);
                         }
                       });
        }
        if (nw.requires_grad) {
          T* gw = nw.ensure_grad().data();
          const T* xv2 = nx.value.data();
          parallel_for(static_cast<std::int64_t>(out),
                       static_cast<std::int64_t>(rows * in), [&](std::int64_t o) {
                         for (std::size_t n = 0; n < rows; ++n) {
                           const T g = gy[n * out + o];
                           if (g != T(0)) axpy(g, xv2 + n * in, gw + o * in, in);
                         }
                       });
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->ensure_grad();
          for (std::size_t n = 0; n < rows; ++n)
            for (std::size_t o = 0; o < out; ++o) gb[o] += gy[n * out + o];
        }
      });
}

template <class T>
Tensor<T> dwconv2d(const Tensor<T>& x, const Tensor<T>& kernels) {
  require_rank(x, 3, "dwconv2d input");
  require_rank(kernels, 3, "dwconv2d kernels");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t kh = kernels.dim(1), kw = kernels.dim(2);
  if (kernels.dim(0) != C) {
    throw DimensionError("dwconv2d: " + std::to_string(C) + " channels vs " +
                         std::to_string(kernels.dim(0)) + " kernels");
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("dwconv2d: kernel size must be odd, got " +
                      std::to_string(kh) + "x" + std::to_string(kw));
  }
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto Hs = static_cast<std::ptrdiff_t>(H);
  const auto Ws = static_cast<std::ptrdiff_t>(W);

  // Visits every (output cell, input cell, kernel tap) triple of one channel.
  // f(kernel_index, out_row_ptr_offset, in_offset, count).
  auto for_each_tap = [=](auto&& f) {
    for (std::size_t a = 0; a < kh; ++a) {
      const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(a) - ph;
      for (std::size_t b = 0; b < kw; ++b) {
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(b) - pw;
        const std::ptrdiff_t w0 = std::max<std::ptrdiff_t>(0, -ox);
        const std::ptrdiff_t w1 = std::min<std::ptrdiff_t>(Ws, Ws - ox);
        if (w1 <= w0) continue;
        for (std::ptrdiff_t h = std::max<std::ptrdiff_t>(0, -oy);
             h < std::min<std::ptrdiff_t>(Hs, Hs - oy); ++h) {
          f(a * kw + b, h * Ws + w0, (h + oy) * Ws + w0 + ox,
            static_cast<std::size_t>(w1 - w0));
        }
      }
    }
  };

  std::vector<T> y(C * H * W, T(0));
  const T* xv = x.data().data();
  const T* kv = kernels.data().data();
  parallel_for(static_cast<std::int64_t>(C),
               static_cast<std::int64_t>(H * W * kh * kw), [&](std::int64_t c) {
                 const T* xc = xv + c * H * W;
                 const T* kc = kv + c * kh * kw;
                 T* yc = y.data() + c * H * W;
                 for_each_tap([&](std::size_t k, std::ptrdiff_t yo,
                                  std::ptrdiff_t xo, std::size_t n) {
                   axpy(kc[k], xc + xo, yc + yo, n);
                 });
               });

  return make_result<T>(
      "dwconv2d", x.shape(), std::move(y), {&x, &kernels},
      [=](NodeT<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nk = *self.inputs[1];
        const T* gy = self.grad.data();
        T* gx = nx.requires_grad ? nx.ensure_grad().data() : nullptr;
        T* gk = nk.requires_grad ? nk.ensure_grad().data() : nullptr;
        parallel_for(static_cast<std::int64_t>(C),
                     static_cast<std::int64_t>(H * W * kh * kw),
                     [&](std::int64_t c) {
                       const T* xc = nx.value.data() + c * H * W;
                       const T* kc = nk.value.data() + c * kh * kw;
                       const T* gyc = gy + c * H * W;
                       for_each_tap([&](std::size_t k, std::ptrdiff_t yo,
                                        std::ptrdiff_t xo, std::size_t n) {
                         if (gx) axpy(kc[k], gyc + yo, gx + c * H * W + xo, n);
                         if (gk) {
                           T acc = 0;
                           for (std::size_t i = 0; i < n; ++i)
                             acc += gyc[yo + i] * xc[xo + i];
                           gk[c * kh * kw + k] += acc;
                         }
                       });
                     });
      });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto xv = x.data();
  std::vector<T> y(xv.size());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  return make_result<T>(
      "gelu", x.shape(), std::move(y), {&x}, [inv_sqrt2](NodeT<T>& self) {
        auto& nx = *self.inputs[0];
        auto& g = nx.ensure_grad();
        const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T v = nx.value[i];
          const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
          const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
          g[i] += self.grad[i] * (cdf + v * pdf);
        }
      });
}

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps) {
  const std::size_t C = x.shape().back();
  if (gamma.numel() != C || beta.numel() != C) {
    throw DimensionError("layernorm: affine size vs channels " +
                         std::to_string(C));
  }
  if (!(eps > T(0))) throw ConfigError("layernorm: eps must be positive");
  const std::size_t rows = x.numel() / C;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<T> y(x.numel()), xhat(x.numel()), rstd(rows);
  for (std::size_t n = 0; n < rows; ++n) {
    const T* xr = xv.data() + n * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += xr[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(C);
    const T r = T(1) / std::sqrt(var + eps);
    rstd[n] = r;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xr[c] - mu) * r;
      xhat[n * C + c] = h;
      y[n * C + c] = gv[c] * h + bv[c];
    }
  }
  return make_result<T>(
      "layernorm", x.shape(), std::move(y), {&x, &gamma, &beta},
      [rows, C, xhat = std::move(xhat), rstd = std::move(rstd)](NodeT<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const T* gy = self.grad.data();
        if (nx.requires_grad) {
          auto& gx = nx.ensure_grad();
          for (std::size_t n = 0; n < rows; ++n) {
            T mg = 0, mgx = 0;
            for (std::size_t c = 0; c < C; ++c) {
              const T g = gy[n * C + c] * ng.value[c];
              mg += g;
              mgx += g * xhat[n * C + c];
            }
            mg /= static_cast<T>(C);
            mgx /= static_cast<T>(C);
            for (std::size_t c = 0; c < C; ++c) {
              const T g = gy[n * C + c] * ng.value[c];
              gx[n * C + c] += rstd[n] * (g - mg - xhat[n * C + c] * mgx);
            }
          }
        }
        if (ng.requires_grad) {
          auto& gg = ng.ensure_grad();
          for (std::size_t n = 0; n < rows; ++n)
            for (std::size_t c = 0; c < C; ++c)
              gg[c] += gy[n * C + c] * xhat[n * C + c];
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          for (std::size_t n = 0; n < rows; ++n)
            for (std::size_t c = 0; c < C; ++c) gb[c] += gy[n * C + c];
        }
      });
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  auto xv = x.data();
  std::vector<T> y(C);
  for (std::size_t c = 0; c < C; ++c) {
    T s = 0;
    for (std::size_t i = 0; i < HW; ++i) s += xv[c * HW + i];
    y[c] = s / static_cast<T>(HW);
  }
  return make_result<T>("global_avg_pool", Shape{C}, std::move(y), {&x},
                        [C, HW](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          const T inv = T(1) / static_cast<T>(HW);
                          for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t i = 0; i < HW; ++i)
                              g[c * HW + i] += self.grad[c] * inv;
                        });
}

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h,
                          std::size_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: empty output");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  auto ty = std::make_shared<Taps>(make_taps(H, out_h));
  auto tx = std::make_shared<Taps>(make_taps(W, out_w));
  auto xv = x.data();
  std::vector<T> y(C * out_h * out_w);
  parallel_for(static_cast<std::int64_t>(C),
               static_cast<std::int64_t>(out_h * out_w * 4), [&](std::int64_t c) {
                 const T* xc = xv.data() + c * H * W;
                 T* yc = y.data() + c * out_h * out_w;
                 for (std::size_t i = 0; i < out_h; ++i) {
                   const T* r0 = xc + ty->lo[i] * W;
                   const T* r1 = xc + ty->hi[i] * W;
                   const T fy = static_cast<T>(ty->frac[i]);
                   for (std::size_t j = 0; j < out_w; ++j) {
                     const T fx = static_cast<T>(tx->frac[j]);
                     const std::size_t a = tx->lo[j], b = tx->hi[j];
                     const T top = r0[a] + fx * (r0[b] - r0[a]);
                     const T bot = r1[a] + fx * (r1[b] - r1[a]);
                     yc[i * out_w + j] = top + fy * (bot - top);
                   }
                 }
               });
  return make_result<T>(
      "bilinear_resize", Shape{C, out_h, out_w}, std::move(y), {&x},
      [=](NodeT<T>& self) {
        T* g = self.inputs[0]->ensure_grad().data();
        parallel_for(static_cast<std::int64_t>(C),
                     static_cast<std::int64_t>(out_h * out_w * 4),
                     [&](std::int64_t c) {
                       T* gc = g + c * H * W;
                       const T* gyc = self.grad.data() + c * out_h * out_w;
                       for (std::size_t i = 0; i < out_h; ++i) {
                         const T fy = static_cast<T>(ty->frac[i]);
                         T* r0 = gc + ty->lo[i] * W;
                         T* r1 = gc + ty->hi[i] * W;
                         for (std::size_t j = 0; j < out_w; ++j) {
                           const T fx = static_cast<T>(tx->frac[j]);
                           const T gv = gyc[i * out_w + j];
                           const std::size_t a = tx->lo[j], b = tx->hi[j];
                           r0[a] += gv * (T(1) - fy) * (T(1) - fx);
                           r0[b] += gv * (T(1) - fy) * fx;
                           r1[a] += gv * fy * (T(1) - fx);
                           r1[b] += gv * fy * fx;
                         }
                       }
                     });
      });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto xv = x.data();
  std::vector<T> y(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * n;
    T* yr = y.data() + r * n;
    const T mx = *std::max_element(xr, xr + n);
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= s;
  }
  auto saved = std::make_shared<std::vector<T>>(y);
  return make_result<T>(
      "softmax", x.shape(), std::move(y), {&x}, [rows, n, saved](NodeT<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const auto& p = *saved;
        for (std::size_t r = 0; r < rows; ++r) {
          T dot = 0;
          for (std::size_t i = 0; i < n; ++i)
            dot += self.grad[r * n + i] * p[r * n + i];
          for (std::size_t i = 0; i < n; ++i)
            g[r * n + i] += p[r * n + i] * (self.grad[r * n + i] - dot);
        }
      });
}

namespace {
// out[j * a + i] = in[i * b + j] for an a x b matrix.
template <class T>
void transpose2d(const T* in, T* out, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) out[j * a + i] = in[i * b + j];
}
template <class T>
void transpose2d_add(const T* in, T* out, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) out[j * a + i] += in[i * b + j];
}
}  // namespace

template <class T>
Tensor<T> chw_to_hwc(const Tensor<T>& x) {
  require_rank(x, 3, "chw_to_hwc");
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  std::vector<T> y(x.numel());
  transpose2d(x.data().data(), y.data(), C, HW);
  return make_result<T>("chw_to_hwc", Shape{x.dim(1), x.dim(2), C}, std::move(y),
                        {&x}, [C, HW](NodeT<T>& self) {
                          transpose2d_add(self.grad.data(),
                                          self.inputs[0]->ensure_grad().data(),
                                          HW, C);
                        });
}

template <class T>
Tensor<T> hwc_to_chw(const Tensor<T>& x) {
  require_rank(x, 3, "hwc_to_chw");
  const std::size_t C = x.dim(2), HW = x.dim(0) * x.dim(1);
  std::vector<T> y(x.numel());
  transpose2d(x.data().data(), y.data(), HW, C);
  return make_result<T>("hwc_to_chw", Shape{C, x.dim(0), x.dim(1)}, std::move(y),
                        {&x}, [C, HW](NodeT<T>& self) {
                          transpose2d_add(self.grad.data(),
                                          self.inputs[0]->ensure_grad().data(),
                                          C, HW);
                        });
}

template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t start, std::size_t count) {
  const std::size_t n = x.shape().back();
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_last: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " +
                         std::to_string(n));
  }
  const std::size_t rows = x.numel() / n;
  auto xv = x.data();
  std::vector<T> y(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data() + r * n + start, count, y.data() + r * count);
  Shape shape = x.shape();
  shape.back() = count;
  return make_result<T>("slice_last", std::move(shape), std::move(y), {&x},
                        [rows, n, start, count](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t i = 0; i < count; ++i)
                              g[r * n + start + i] += self.grad[r * count + i];
                        });
}

template <class T>
Tensor<T> mul_gate(const Tensor<T>& x, const Tensor<T>& g) {
  Shape expect = x.shape();
  expect.back() = 1;
  if (g.shape() != expect) {
    throw DimensionError("mul_gate: gate " + shape_string(g.shape()) +
                         " for input " + shape_string(x.shape()));
  }
  const std::size_t C = x.shape().back();
  const std::size_t rows = x.numel() / C;
  auto xv = x.data();
  auto gv = g.data();
  std::vector<T> y(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] = xv[r * C + c] * gv[r];
  return make_result<T>(
      "mul_gate", x.shape(), std::move(y), {&x, &g}, [rows, C](NodeT<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        if (nx.requires_grad) {
          auto& gx = nx.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < C; ++c)
              gx[r * C + c] += self.grad[r * C + c] * ng.value[r];
        }
        if (ng.requires_grad) {
          auto& gg = ng.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            T acc = 0;
            for (std::size_t c = 0; c < C; ++c)
              acc += self.grad[r * C + c] * nx.value[r * C + c];
            gg[r] += acc;
          }
        }
      });
}

template <class T>
Tensor<T> tile_tokens(const Tensor<T>& v, std::size_t h, std::size_t w) {
  require_rank(v, 1, "tile_tokens");
  const std::size_t C = v.dim(0), tokens = h * w;
  auto vv = v.data();
  std::vector<T> y(tokens * C);
  for (std::size_t t = 0; t < tokens; ++t)
    std::copy(vv.begin(), vv.end(), y.begin() + t * C);
  return make_result<T>("tile_tokens", Shape{h, w, C}, std::move(y), {&v},
                        [tokens, C](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t t = 0; t < tokens; ++t)
                            for (std::size_t c = 0; c < C; ++c)
                              g[c] += self.grad[t * C + c];
                        });
}

template <class T>
Tensor<T> patchify(const Tensor<T>& x, std::size_t patch) {
  require_rank(x, 3, "patchify");
  if (patch == 0) throw ConfigError("patchify: patch size must be positive");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const std::size_t Hp = (H + patch - 1) / patch, Wp = (W + patch - 1) / patch;
  const std::size_t D = patch * patch * C;
  // src[k] is the flat input offset feeding output k, or npos for padding.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  auto src = std::make_shared<std::vector<std::size_t>>(Hp * Wp * D, npos);
  for (std::size_t i = 0; i < Hp; ++i)
    for (std::size_t j = 0; j < Wp; ++j)
      for (std::size_t dy = 0; dy < patch; ++dy)
        for (std::size_t dx = 0; dx < patch; ++dx) {
          const std::size_t r = i * patch + dy, c = j * patch + dx;
          if (r >= H || c >= W) continue;
          for (std::size_t ch = 0; ch < C; ++ch)
            (*src)[((i * Wp + j) * patch * patch + dy * patch + dx) * C + ch] =
                (r * W + c) * C + ch;
        }
  auto xv = x.data();
  std::vector<T> y(src->size(), T(0));
  for (std::size_t k = 0; k < y.size(); ++k)
    if ((*src)[k] != npos) y[k] = xv[(*src)[k]];
  return make_result<T>("patchify", Shape{Hp, Wp, D}, std::move(y), {&x},
                        [src](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t k = 0; k < src->size(); ++k)
                            if ((*src)[k] != npos) g[(*src)[k]] += self.grad[k];
                        });
}

template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& rows) {
  if (rows.empty()) throw DimensionError("stack: no rows");
  const Shape& row_shape = rows.front().shape();
  const std::size_t D = rows.front().numel();
  std::vector<T> y;
  y.reserve(rows.size() * D);
  for (const auto& r : rows) {
    if (r.shape() != row_shape) {
      throw DimensionError("stack: row shape " + shape_string(r.shape()) +
                           " vs " + shape_string(row_shape));
    }
    y.insert(y.end(), r.data().begin(), r.data().end());
  }
  Shape shape{rows.size()};
  shape.insert(shape.end(), row_shape.begin(), row_shape.end());

  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->value = std::move(y);
  node->op = "stack";
  node->id = detail::next_node_id();
  const bool track =
      grad_enabled() &&
      std::any_of(rows.begin(), rows.end(),
                  [](const Tensor<T>& r) { return r.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    for (const auto& r : rows) node->inputs.push_back(r.node());
    node->backward = [D](NodeT<T>& self) {
      for (std::size_t b = 0; b < self.inputs.size(); ++b) {
        auto& in = *self.inputs[b];
        if (!in.requires_grad) continue;
        auto& g = in.ensure_grad();
        for (std::size_t i = 0; i < D; ++i) g[i] += self.grad[b * D + i];
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t B = x.dim(0), D = x.dim(1);
  auto xv = x.data();
  std::vector<T> y(x.numel()), norms(B);
  for (std::size_t b = 0; b < B; ++b) {
    T s = 0;
    for (std::size_t i = 0; i < D; ++i) s += xv[b * D + i] * xv[b * D + i];
    const T n = std::sqrt(s);
    if (!(n > T(0))) {
      throw NumericalError("l2_normalize_rows: zero-norm row " + std::to_string(b));
    }
    norms[b] = n;
    for (std::size_t i = 0; i < D; ++i) y[b * D + i] = xv[b * D + i] / n;
  }
  auto saved = std::make_shared<std::vector<T>>(y);
  return make_result<T>(
      "l2_normalize_rows", x.shape(), std::move(y), {&x},
      [B, D, saved, norms = std::move(norms)](NodeT<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const auto& yv = *saved;
        for (std::size_t b = 0; b < B; ++b) {
          T dot = 0;
          for (std::size_t i = 0; i < D; ++i)
            dot += yv[b * D + i] * self.grad[b * D + i];
          for (std::size_t i = 0; i < D; ++i)
            g[b * D + i] += (self.grad[b * D + i] - yv[b * D + i] * dot) / norms[b];
        }
      });
}

namespace {
template <class T>
void check_labels(const Tensor<T>& x, const std::vector<int>& labels,
                  const char* op) {
  if (x.rank() != 2 || x.dim(0) != labels.size()) {
    throw DimensionError(std::string(op) + ": " + shape_string(x.shape()) +
                         " with " + std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= x.dim(1)) {
      throw DimensionError(std::string(op) + ": label " + std::to_string(l) +
                           " out of range");
    }
  }
}
}  // namespace

template <class T>
Tensor<T> add_onehot(const Tensor<T>& x, const std::vector<int>& labels,
                     T value) {
  check_labels(x, labels, "add_onehot");
  const std::size_t K = x.dim(1);
  std::vector<T> y(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < labels.size(); ++b) y[b * K + labels[b]] += value;
  return make_result<T>("add_onehot", x.shape(), std::move(y), {&x},
                        [](NodeT<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += self.grad[i];
                        });
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  check_labels(logits, labels, "cross_entropy");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  auto zv = logits.data();
  auto probs = std::make_shared<std::vector<T>>(B * K);
  T total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = zv.data() + b * K;
    const T mx = *std::max_element(z, z + K);
    T s = 0;
    for (std::size_t k = 0; k < K; ++k) s += ((*probs)[b * K + k] = std::exp(z[k] - mx));
    for (std::size_t k = 0; k < K; ++k) (*probs)[b * K + k] /= s;
    total += (mx + std::log(s)) - z[labels[b]];
  }
  return make_result<T>(
      "cross_entropy", Shape{1}, {total / static_cast<T>(B)}, {&logits},
      [B, K, probs, labels](NodeT<T>& self) {
        auto& g = self.inputs[0]->ensure_grad();
        const T scale_b = self.grad[0] / static_cast<T>(B);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t k = 0; k < K; ++k) {
            const T target = static_cast<int>(k) == labels[b] ? T(1) : T(0);
            g[b * K + k] += scale_b * ((*probs)[b * K + k] - target);
          }
      });
}

#define FNA_INSTANTIATE(T)                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale(const Tensor<T>&, T);                               \
  template Tensor<T> sum(const Tensor<T>&);                                    \
  template Tensor<T> mean(const Tensor<T>&);                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>&);                                 \
  template Tensor<T> dwconv2d(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> gelu(const Tensor<T>&);                                   \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&, T);                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                        \
  template Tensor<T> bilinear_resize(const Tensor<T>&, std::size_t,            \
                                     std::size_t);                             \
  template Tensor<T> softmax(const Tensor<T>&);                                \
  template Tensor<T> chw_to_hwc(const Tensor<T>&);                             \
  template Tensor<T> hwc_to_chw(const Tensor<T>&);                             \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> mul_gate(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> tile_tokens(const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> patchify(const Tensor<T>&, std::size_t);                  \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                     \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&);                      \
  template Tensor<T> add_onehot(const Tensor<T>&, const std::vector<int>&, T); \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<int>&);

FNA_INSTANTIATE(float)
FNA_INSTANTIATE(double)
#undef FNA_INSTANTIATE

}  // namespace fna::ops
