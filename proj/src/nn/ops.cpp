// Copyright 2026 The previvor Authors
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

#include "previvor/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "previvor/errors.hpp"

namespace previvor::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Runs `fn(parent_grad)` when parent i wants a gradient.
template <class F>
void accumulate(Node& self, std::size_t i, F&& fn) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return;
  p.ensure_grad();
  fn(p.grad);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t r, const char* op) {
  if (a.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(a.shape()));
  }
}

// Elementwise unary op; `dfn(x, y)` is dy/dx.
template <class F, class D>
Tensor unary(const Tensor& a, F fn, D dfn) {
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i]);
  return make_result(a.shape(), std::move(y), {a}, [dfn](Node& self) {
    const auto& x = self.parents[0]->value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfn(x[i], self.value[i]);
    });
  });
}

void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k, int stride, int pad,
            std::size_t Ho, std::size_t Wo, double* cols) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ki);
          double* out = row + oy * Wo;
          if (iy < 0 || iy >= static_cast<long>(H)) {
            std::fill(out, out + Wo, 0.0);
            continue;
          }
          const double* in = x + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kj);
            out[ox] = (ix < 0 || ix >= static_cast<long>(W)) ? 0.0 : in[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k, int stride, int pad,
            std::size_t Ho, std::size_t Wo, double* dx) {
  const std::size_t P = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          double* out = dx + (c * H + static_cast<std::size_t>(iy)) * W;
          const double* in = row + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(W)) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      accumulate(self, p, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    });
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor add_broadcast(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("add_broadcast: second operand must hold one value");
  const double v = s.data()[0];
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + v;
  return make_result(a.shape(), std::move(out), {a, s}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      double total = 0.0;
      for (double v : self.grad) total += v;
      g[0] += total;
    });
  });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(std::max(x, 0.0)); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total}, {a}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (double& v : g) v += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result({1}, {total / n}, {a}, [n](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      const double d = self.grad[0] / n;
      for (double& v : g) v += d;
    });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
                     [](Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<double> out(M * N);
  MapMat(out.data(), static_cast<long>(M), static_cast<long>(N)).noalias() =
      CMapMat(a.data().data(), static_cast<long>(M), static_cast<long>(K)) *
      CMapMat(b.data().data(), static_cast<long>(K), static_cast<long>(N));
  return make_result({M, N}, std::move(out), {a, b}, [M, K, N](Node& self) {
    CMapMat G(self.grad.data(), static_cast<long>(M), static_cast<long>(N));
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      MapMat(g.data(), static_cast<long>(M), static_cast<long>(K)).noalias() +=
          G * CMapMat(B.data(), static_cast<long>(K), static_cast<long>(N)).transpose();
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      MapMat(g.data(), static_cast<long>(K), static_cast<long>(N)).noalias() +=
          CMapMat(A.data(), static_cast<long>(M), static_cast<long>(K)).transpose() * G;
    });
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto Bn = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  std::vector<double> out(Bn * M * N);
  for (std::size_t i = 0; i < Bn; ++i) {
    MapMat(out.data() + i * M * N, static_cast<long>(M), static_cast<long>(N)).noalias() =
        CMapMat(a.data().data() + i * M * K, static_cast<long>(M), static_cast<long>(K)) *
        CMapMat(b.data().data() + i * K * N, static_cast<long>(K), static_cast<long>(N));
  }
  return make_result({Bn, M, N}, std::move(out), {a, b}, [Bn, M, K, N](Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < Bn; ++i) {
        MapMat(g.data() + i * M * K, static_cast<long>(M), static_cast<long>(K)).noalias() +=
            CMapMat(self.grad.data() + i * M * N, static_cast<long>(M), static_cast<long>(N)) *
            CMapMat(B.data() + i * K * N, static_cast<long>(K), static_cast<long>(N)).transpose();
      }
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < Bn; ++i) {
        MapMat(g.data() + i * K * N, static_cast<long>(K), static_cast<long>(N)).noalias() +=
            CMapMat(A.data() + i * M * K, static_cast<long>(M), static_cast<long>(K)).transpose() *
            CMapMat(self.grad.data() + i * M * N, static_cast<long>(M), static_cast<long>(N));
      }
    });
  });
}

Tensor transpose_last2(const Tensor& a) {
  require_rank(a, 3, "transpose_last2");
  const auto Bn = a.dim(0), M = a.dim(1), N = a.dim(2);
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t b = 0; b < Bn; ++b)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) out[b * M * N + j * M + i] = x[b * M * N + i * N + j];
  return make_result({Bn, N, M}, std::move(out), {a}, [Bn, M, N](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t b = 0; b < Bn; ++b)
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t j = 0; j < N; ++j) g[b * M * N + i * N + j] += self.grad[b * M * N + j * M + i];
    });
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(w, 2, "linear");
  const auto in = w.dim(0), outd = w.dim(1);
  if (x.rank() < 1 || x.shape().back() != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && (b.numel() != outd)) throw ShapeError("linear: bias size mismatch");
  const auto R = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = outd;
  std::vector<double> out(R * outd);
  MapMat Y(out.data(), static_cast<long>(R), static_cast<long>(outd));
  Y.noalias() = CMapMat(x.data().data(), static_cast<long>(R), static_cast<long>(in)) *
                CMapMat(w.data().data(), static_cast<long>(in), static_cast<long>(outd));
  std::vector<Tensor> parents{x, w};
  if (b.defined()) {
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), static_cast<long>(outd));
    parents.push_back(b);
  }
  return make_result(std::move(shape), std::move(out), std::move(parents), [R, in, outd](Node& self) {
    CMapMat G(self.grad.data(), static_cast<long>(R), static_cast<long>(outd));
    const auto& X = self.parents[0]->value;
    const auto& W = self.parents[1]->value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      MapMat(g.data(), static_cast<long>(R), static_cast<long>(in)).noalias() +=
          G * CMapMat(W.data(), static_cast<long>(in), static_cast<long>(outd)).transpose();
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      MapMat(g.data(), static_cast<long>(in), static_cast<long>(outd)).noalias() +=
          CMapMat(X.data(), static_cast<long>(R), static_cast<long>(in)).transpose() * G;
    });
    if (self.parents.size() > 2) {
      // Plain loop: Eigen's vectorised reductions round differently depending
      // on buffer alignment, which would make training address-dependent.
      accumulate(self, 2, [&](std::vector<double>& g) {
        for (std::size_t r = 0; r < R; ++r) {
          const double* row = self.grad.data() + r * outd;
          for (std::size_t j = 0; j < outd; ++j) g[j] += row[j];
        }
      });
    }
  });
}

Tensor softmax_last(const Tensor& a) {
  const auto n = a.shape().back();
  const auto rows = a.numel() / n;
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data() + r * n;
    double* yi = y.data() + r * n;
    const double mx = *std::max_element(xi, xi + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (yi[j] = std::exp(xi[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yi[j] /= total;
  }
  return make_result(a.shape(), std::move(y), {a}, [rows, n](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yi = self.value.data() + r * n;
        const double* gi = self.grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gi[j] * yi[j];
        for (std::size_t j = 0; j < n; ++j) g[r * n + j] += yi[j] * (gi[j] - dot);
      }
    });
  });
}

Tensor layer_norm_last(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto n = x.shape().back();
  if (gamma.numel() != n || beta.numel() != n) throw ShapeError("layer_norm_last: affine size mismatch");
  const auto rows = x.numel() / n;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> xhat(x.numel()), rstd(rows), y(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (xi[j] - mu) * rstd[r];
      y[r * n + j] = xhat[r * n + j] * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(y), {x, gamma, beta},
                     [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
    const auto& gam = self.parents[1]->value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dxh = self.grad[r * n + j] * gam[j];
          m1 += dxh;
          m2 += dxh * xhat[r * n + j];
        }
        m1 *= inv_n;
        m2 *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double dxh = self.grad[r * n + j] * gam[j];
          g[r * n + j] += rstd[r] * (dxh - m1 - xhat[r * n + j] * m2);
        }
      }
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < rows * n; ++i) g[i % n] += self.grad[i] * xhat[i];
    });
    accumulate(self, 2, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < rows * n; ++i) g[i % n] += self.grad[i];
    });
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), k = w.dim(2);
  if (w.dim(1) != C || w.dim(3) != k) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && b.numel() != O) throw ShapeError("conv2d: bias size mismatch");
  const long ho = (static_cast<long>(H) + 2 * pad - static_cast<long>(k)) / stride + 1;
  const long wo = (static_cast<long>(W) + 2 * pad - static_cast<long>(k)) / stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: kernel larger than padded input");
  const auto Ho = static_cast<std::size_t>(ho), Wo = static_cast<std::size_t>(wo);
  const auto P = Ho * Wo, CKK = C * k * k;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  std::vector<double> out(N * O * P);
  std::vector<double> cols(pointwise ? 0 : CKK * P);
  CMapMat Wm(w.data().data(), static_cast<long>(O), static_cast<long>(CKK));
  for (std::size_t n = 0; n < N; ++n) {
    const double* xn = x.data().data() + n * C * H * W;
    const double* src = xn;
    if (!pointwise) {
      im2col(xn, C, H, W, k, stride, pad, Ho, Wo, cols.data());
      src = cols.data();
    }
    MapMat Y(out.data() + n * O * P, static_cast<long>(O), static_cast<long>(P));
    Y.noalias() = Wm * CMapMat(src, static_cast<long>(CKK), static_cast<long>(P));
    if (b.defined()) Y.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data().data(), static_cast<long>(O));
  }

  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result({N, O, Ho, Wo}, std::move(out), std::move(parents),
                     [=](Node& self) {
    const auto& X = self.parents[0]->value;
    const auto& Wv = self.parents[1]->value;
    Node& xp = *self.parents[0];
    Node& wp = *self.parents[1];
    if (xp.requires_grad) xp.ensure_grad();
    if (wp.requires_grad) wp.ensure_grad();
    std::vector<double> colbuf(pointwise ? 0 : CKK * P);
    std::vector<double> dcols(xp.requires_grad && !pointwise ? CKK * P : 0);
    CMapMat Wm(Wv.data(), static_cast<long>(O), static_cast<long>(CKK));
    for (std::size_t n = 0; n < N; ++n) {
      CMapMat G(self.grad.data() + n * O * P, static_cast<long>(O), static_cast<long>(P));
      const double* xn = X.data() + n * C * H * W;
      if (wp.requires_grad) {
        const double* src = xn;
        if (!pointwise) {
          im2col(xn, C, H, W, k, stride, pad, Ho, Wo, colbuf.data());
          src = colbuf.data();
        }
        MapMat(wp.grad.data(), static_cast<long>(O), static_cast<long>(CKK)).noalias() +=
            G * CMapMat(src, static_cast<long>(CKK), static_cast<long>(P)).transpose();
      }
      if (xp.requires_grad) {
        if (pointwise) {
          MapMat(xp.grad.data() + n * C * H * W, static_cast<long>(CKK), static_cast<long>(P)).noalias() +=
              Wm.transpose() * G;
        } else {
          MapMat(dcols.data(), static_cast<long>(CKK), static_cast<long>(P)).noalias() = Wm.transpose() * G;
          col2im(dcols.data(), C, H, W, k, stride, pad, Ho, Wo, xp.grad.data() + n * C * H * W);
        }
      }
    }
    if (self.parents.size() > 2) {
      accumulate(self, 2, [&](std::vector<double>& g) {
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < O; ++o) {
            const double* gi = self.grad.data() + (n * O + o) * P;
            double s = 0.0;
            for (std::size_t p = 0; p < P; ++p) s += gi[p];
            g[o] += s;
          }
      });
    }
  });
}

Tensor upsample2x(const Tensor& x) {
  require_rank(x, 4, "upsample2x");
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto H2 = 2 * H, W2 = 2 * W;
  std::vector<double> out(N * C * H2 * W2);
  auto xv = x.data();
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t i = 0; i < H2; ++i)
      for (std::size_t j = 0; j < W2; ++j) out[(nc * H2 + i) * W2 + j] = xv[(nc * H + i / 2) * W + j / 2];
  return make_result({N, C, H2, W2}, std::move(out), {x}, [N, C, H, W, H2, W2](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t i = 0; i < H2; ++i)
          for (std::size_t j = 0; j < W2; ++j) g[(nc * H + i / 2) * W + j / 2] += self.grad[(nc * H2 + i) * W2 + j];
    });
  });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const auto N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  std::size_t C = 0;
  std::vector<std::size_t> offs;
  for (const auto& t : xs) {
    require_rank(t, 4, "concat_channels");
    if (t.dim(0) != N || t.dim(2) != H || t.dim(3) != W) throw ShapeError("concat_channels: shape mismatch");
    offs.push_back(C);
    C += t.dim(1);
  }
  const auto HW = H * W;
  std::vector<double> out(N * C * HW);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto Ct = xs[t].dim(1);
    auto v = xs[t].data();
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(v.data() + n * Ct * HW, Ct * HW, out.data() + (n * C + offs[t]) * HW);
  }
  return make_result({N, C, H, W}, std::move(out), xs, [N, C, HW, offs](Node& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      const auto Ct = self.parents[t]->shape[1];
      accumulate(self, t, [&](std::vector<double>& g) {
        for (std::size_t n = 0; n < N; ++n) {
          const double* src = self.grad.data() + (n * C + offs[t]) * HW;
          double* dst = g.data() + n * Ct * HW;
          for (std::size_t i = 0; i < Ct * HW; ++i) dst[i] += src[i];
        }
      });
    }
  });
}

Tensor select_channels(const Tensor& x, std::size_t first, std::size_t count) {
  require_rank(x, 4, "select_channels");
  const auto N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (first + count > C || count == 0) throw ShapeError("select_channels: range outside tensor");
  std::vector<double> out(N * count * HW);
  auto v = x.data();
  for (std::size_t n = 0; n < N; ++n)
    std::copy_n(v.data() + (n * C + first) * HW, count * HW, out.data() + n * count * HW);
  return make_result({N, count, x.dim(2), x.dim(3)}, std::move(out), {x}, [=](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < count * HW; ++i) g[(n * C + first) * HW + i] += self.grad[n * count * HW + i];
    });
  });
}

Tensor concat_batch(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("concat_batch: no inputs");
  Shape rest(xs[0].shape().begin() + 1, xs[0].shape().end());
  std::size_t total = 0;
  std::vector<std::size_t> offs;
  for (const auto& t : xs) {
    if (Shape(t.shape().begin() + 1, t.shape().end()) != rest) throw ShapeError("concat_batch: shape mismatch");
    offs.push_back(total);
    total += t.numel();
  }
  std::vector<double> out(total);
  for (std::size_t t = 0; t < xs.size(); ++t) std::copy(xs[t].data().begin(), xs[t].data().end(), out.begin() + static_cast<long>(offs[t]));
  Shape shape = xs[0].shape();
  shape[0] = 0;
  for (const auto& t : xs) shape[0] += t.dim(0);
  return make_result(std::move(shape), std::move(out), xs, [offs](Node& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      accumulate(self, t, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offs[t] + i];
      });
    }
  });
}

Tensor slice_batch(const Tensor& x, std::size_t i) {
  if (i >= x.dim(0)) throw ShapeError("slice_batch: index out of range");
  const auto item = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = 1;
  std::vector<double> out(x.data().begin() + static_cast<long>(i * item), x.data().begin() + static_cast<long>((i + 1) * item));
  return make_result(std::move(shape), std::move(out), {x}, [i, item](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t j = 0; j < item; ++j) g[i * item + j] += self.grad[j];
    });
  });
}

Tensor repeat_batch(const Tensor& t, std::size_t n) {
  require_rank(t, 2, "repeat_batch");
  const auto item = t.numel();
  std::vector<double> out(n * item);
  for (std::size_t b = 0; b < n; ++b) std::copy(t.data().begin(), t.data().end(), out.begin() + static_cast<long>(b * item));
  return make_result({n, t.dim(0), t.dim(1)}, std::move(out), {t}, [n, item](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < item; ++j) g[j] += self.grad[b * item + j];
    });
  });
}

Tensor nchw_to_tokens(const Tensor& x) {
  require_rank(x, 4, "nchw_to_tokens");
  const auto N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  std::vector<double> out(x.numel());
  auto v = x.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) out[(n * P + p) * C + c] = v[(n * C + c) * P + p];
  return make_result({N, P, C}, std::move(out), {x}, [N, C, P](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < P; ++p) g[(n * C + c) * P + p] += self.grad[(n * P + p) * C + c];
    });
  });
}

Tensor tokens_to_nchw(const Tensor& t, std::size_t h, std::size_t w) {
  require_rank(t, 3, "tokens_to_nchw");
  const auto N = t.dim(0), P = t.dim(1), C = t.dim(2);
  if (P != h * w) throw ShapeError("tokens_to_nchw: token count does not match h*w");
  std::vector<double> out(t.numel());
  auto v = t.data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t c = 0; c < C; ++c) out[(n * C + c) * P + p] = v[(n * P + p) * C + c];
  return make_result({N, C, h, w}, std::move(out), {t}, [N, C, P](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t c = 0; c < C; ++c) g[(n * P + p) * C + c] += self.grad[(n * C + c) * P + p];
    });
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const auto N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  std::vector<double> out(N * C, 0.0);
  auto v = x.data();
  for (std::size_t i = 0; i < N * C; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < P; ++p) s += v[i * P + p];
    out[i] = s / static_cast<double>(P);
  }
  return make_result({N, C}, std::move(out), {x}, [N, C, P](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < N * C; ++i)
        for (std::size_t p = 0; p < P; ++p) g[i * P + p] += self.grad[i] / static_cast<double>(P);
    });
  });
}

}  // namespace previvor::nn
