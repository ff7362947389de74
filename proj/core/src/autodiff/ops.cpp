#include "polydeform/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "polydeform/error.hpp"

namespace polydeform::autodiff::ops {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
MapR<T> as_matrix(std::span<T> s, std::size_t rows, std::size_t cols) {
  return MapR<T>(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
CMapR<T> as_matrix(std::span<const T> s, std::size_t rows, std::size_t cols) {
  return CMapR<T>(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    shape_fail(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_string(t.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T> target, std::span<const T> delta) {
  if (!target.requires_grad()) return;
  auto g = target.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  const bool track = g.tracks({&a, &b});
  auto out = Tensor<T>::zeros(a.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] + b.data()[i];
  g.verify_finite("add", out);
  if (track) {
    g.record("add", [a = a, b = b, out = out]() {
      if (!out.has_grad()) return;
      accumulate(a, out.grad());
      accumulate(b, out.grad());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  const bool track = g.tracks({&a, &b});
  auto out = Tensor<T>::zeros(a.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] - b.data()[i];
  g.verify_finite("sub", out);
  if (track) {
    g.record("sub", [a = a, b = b, out = out]() mutable {
      if (!out.has_grad()) return;
      accumulate(a, std::as_const(out).grad());
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto go = std::as_const(out).grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  const bool track = g.tracks({&a, &b});
  auto out = Tensor<T>::zeros(a.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * b.data()[i];
  g.verify_finite("mul", out);
  if (track) {
    g.record("mul", [a = a, b = b, out = out]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * b.data()[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * a.data()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& a, T factor) {
  const bool track = g.tracks({&a});
  auto out = Tensor<T>::zeros(a.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.data()[i] * factor;
  g.verify_finite("scale", out);
  if (track) {
    g.record("scale", [a = a, out = out, factor = factor]() mutable {
      if (!out.has_grad() || !a.requires_grad()) return;
      auto ga = a.grad();
      auto go = std::as_const(out).grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) shape_fail("add_scalar", "scalar operand has shape " + shape_string(s.shape()));
  const bool track = g.tracks({&x, &s});
  auto out = Tensor<T>::zeros(x.shape(), track);
  const T sv = s.data()[0];
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x.data()[i] + sv;
  g.verify_finite("add_scalar", out);
  if (track) {
    g.record("add_scalar", [x = x, s = s, out = out]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      accumulate(x, go);
      if (s.requires_grad()) {
        T acc = 0;
        for (T v : go) acc += v;
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& x) {
  const bool track = g.tracks({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  // Written so NaN passes through instead of becoming 0.
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x.data()[i] < T{0} ? T{0} : x.data()[i];
  g.verify_finite("relu", out);
  if (track) {
    g.record("relu", [x = x, out = out]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto gx = x.grad();
      auto go = std::as_const(out).grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (x.data()[i] > T{0}) gx[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sqrt_eps(Graph<T>& g, const Tensor<T>& x, T eps) {
  const bool track = g.tracks({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const T v = x.data()[i] + eps;
    if (v < T{0}) shape_fail("sqrt_eps", "negative argument");
    o[i] = std::sqrt(v);
  }
  g.verify_finite("sqrt_eps", out);
  if (track) {
    g.record("sqrt_eps", [x = x, out = out]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto gx = x.grad();
      auto go = std::as_const(out).grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * T(0.5) / out.data()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> clamp(Graph<T>& g, const Tensor<T>& x, T lo, T hi) {
  const bool track = g.tracks({&x});
  auto out = Tensor<T>::zeros(x.shape(), track);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(x.data()[i], lo, hi);
  g.verify_finite("clamp", out);
  if (track) {
    g.record("clamp", [x = x, out = out, lo = lo, hi = hi]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto gx = x.grad();
      auto go = std::as_const(out).grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const T v = x.data()[i];
        if (v >= lo && v <= hi) gx[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x) {
  const bool track = g.tracks({&x});
  T acc = 0;
  for (T v : x.data()) acc += v;
  auto out = Tensor<T>::scalar(acc, track);
  g.verify_finite("sum", out);
  if (track) {
    g.record("sum", [x = x, out = out]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T go = std::as_const(out).grad()[0];
      for (auto& v : x.grad()) v += go;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& x) {
  if (x.numel() == 0) shape_fail("mean", "empty tensor");
  const bool track = g.tracks({&x});
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T inv = T{1} / static_cast<T>(x.numel());
  auto out = Tensor<T>::scalar(acc * inv, track);
  g.verify_finite("mean", out);
  if (track) {
    g.record("mean", [x = x, out = out, inv = inv]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      const T go = std::as_const(out).grad()[0] * inv;
      for (auto& v : x.grad()) v += go;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix ops

template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  if (a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "inner dims " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  const bool track = g.tracks({&a, &b});
  auto out = Tensor<T>::zeros({n, m}, track);
  as_matrix(out.data(), n, m).noalias() = as_matrix(a.data(), n, k) * as_matrix(b.data(), k, m);
  g.verify_finite("matmul", out);
  if (track) {
    g.record("matmul", [a = a, b = b, out = out, n = n, k = k, m = m]() mutable {
      if (!out.has_grad()) return;
      auto go = as_matrix(std::as_const(out).grad(), n, m);
      if (a.requires_grad()) {
        as_matrix(a.grad(), n, k).noalias() += go * as_matrix(std::as_const(b).data(), k, m).transpose();
      }
      if (b.requires_grad()) {
        as_matrix(b.grad(), k, m).noalias() += as_matrix(std::as_const(a).data(), n, k).transpose() * go;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nt(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul_nt", a, 2, "lhs");
  require_rank("matmul_nt", b, 2, "rhs");
  if (a.dim(1) != b.dim(1)) {
    shape_fail("matmul_nt", "inner dims " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  const bool track = g.tracks({&a, &b});
  auto out = Tensor<T>::zeros({n, m}, track);
  as_matrix(out.data(), n, m).noalias() =
      as_matrix(a.data(), n, k) * as_matrix(b.data(), m, k).transpose();
  g.verify_finite("matmul_nt", out);
  if (track) {
    g.record("matmul_nt", [a = a, b = b, out = out, n = n, k = k, m = m]() mutable {
      if (!out.has_grad()) return;
      auto go = as_matrix(std::as_const(out).grad(), n, m);
      if (a.requires_grad()) {
        as_matrix(a.grad(), n, k).noalias() += go * as_matrix(std::as_const(b).data(), m, k);
      }
      if (b.requires_grad()) {
        as_matrix(b.grad(), m, k).noalias() += go.transpose() * as_matrix(std::as_const(a).data(), n, k);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(Graph<T>& g, const Tensor<T>& a) {
  require_rank("transpose", a, 2, "input");
  const std::size_t n = a.dim(0), m = a.dim(1);
  const bool track = g.tracks({&a});
  auto out = Tensor<T>::zeros({m, n}, track);
  as_matrix(out.data(), m, n) = as_matrix(a.data(), n, m).transpose();
  if (track) {
    g.record("transpose", [a = a, out = out, n = n, m = m]() mutable {
      if (!out.has_grad() || !a.requires_grad()) return;
      as_matrix(a.grad(), n, m) += as_matrix(std::as_const(out).grad(), m, n).transpose();
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  const std::size_t n = x.dim(0), in = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != in) {
    shape_fail("linear", "input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != o)) {
    shape_fail("linear", "bias " + shape_string(bias.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  const bool track = g.tracks({&x, &weight, &bias});
  auto out = Tensor<T>::zeros({n, o}, track);
  auto om = as_matrix(out.data(), n, o);
  om.noalias() = as_matrix(x.data(), n, in) * as_matrix(weight.data(), o, in).transpose();
  if (has_bias) {
    om.rowwise() += as_matrix(bias.data(), 1, o).row(0);
  }
  g.verify_finite("linear", out);
  if (track) {
    g.record("linear", [x = x, weight = weight, bias = bias, out = out, n = n, in = in, o = o, has_bias = has_bias]() mutable {
      if (!out.has_grad()) return;
      auto go = as_matrix(std::as_const(out).grad(), n, o);
      if (x.requires_grad()) {
        as_matrix(x.grad(), n, in).noalias() += go * as_matrix(std::as_const(weight).data(), o, in);
      }
      if (weight.requires_grad()) {
        as_matrix(weight.grad(), o, in).noalias() += go.transpose() * as_matrix(std::as_const(x).data(), n, in);
      }
      if (has_bias && bias.requires_grad()) {
        as_matrix(bias.grad(), 1, o) += go.colwise().sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_rows(Graph<T>& g, const Tensor<T>& x) {
  require_rank("softmax_rows", x, 2, "input");
  const std::size_t n = x.dim(0), m = x.dim(1);
  const bool track = g.tracks({&x});
  auto out = Tensor<T>::zeros({n, m}, track);
  for (std::size_t r = 0; r < n; ++r) {
    const T* in = x.data().data() + r * m;
    T* y = out.data().data() + r * m;
    T mx = in[0];
    for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, in[c]);
    T z = 0;
    for (std::size_t c = 0; c < m; ++c) {
      y[c] = std::exp(in[c] - mx);
      z += y[c];
    }
    for (std::size_t c = 0; c < m; ++c) y[c] /= z;
  }
  g.verify_finite("softmax_rows", out);
  if (track) {
    g.record("softmax_rows", [x = x, out = out, n = n, m = m]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto gx = x.grad();
      auto go = std::as_const(out).grad();
      for (std::size_t r = 0; r < n; ++r) {
        const T* y = out.data().data() + r * m;
        T dot = 0;
        for (std::size_t c = 0; c < m; ++c) dot += go[r * m + c] * y[c];
        for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += y[c] * (go[r * m + c] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  require_rank("layer_norm", x, 2, "input");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) {
    shape_fail("layer_norm", "gamma/beta " + shape_string(gamma.shape()) + "/" +
                                 shape_string(beta.shape()) + " vs row width " + std::to_string(d));
  }
  const bool track = g.tracks({&x, &gamma, &beta});
  auto out = Tensor<T>::zeros({n, d}, track);
  std::vector<T> xhat(n * d), rstd(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* in = x.data().data() + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (in[c] - mu) * rstd[r];
      out.data()[r * d + c] = gamma.data()[c] * xhat[r * d + c] + beta.data()[c];
    }
  }
  g.verify_finite("layer_norm", out);
  if (track) {
    g.record("layer_norm", [x = x, gamma = gamma, beta = beta, out = out, n = n, d = d, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      if (gamma.requires_grad()) {
        auto gg = gamma.grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) gg[c] += go[r * d + c] * xhat[r * d + c];
      }
      if (beta.requires_grad()) {
        auto gb = beta.grad();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) gb[c] += go[r * d + c];
      }
      if (x.requires_grad()) {
        auto gx = x.grad();
        std::vector<T> dxhat(d);
        for (std::size_t r = 0; r < n; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t c = 0; c < d; ++c) {
            dxhat[c] = go[r * d + c] * gamma.data()[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xhat[r * d + c];
          }
          mean_d /= static_cast<T>(d);
          mean_dx /= static_cast<T>(d);
          for (std::size_t c = 0; c < d; ++c) {
            gx[r * d + c] += rstd[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
  std::size_t c, h, w, o, k, ho, wo;
  int stride, pad;
  std::size_t patch() const { return c * k * k; }
  std::size_t pixels() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& cg, T* cols) {
  const std::size_t p = cg.pixels();
  for (std::size_t ch = 0; ch < cg.c; ++ch) {
    for (std::size_t ki = 0; ki < cg.k; ++ki) {
      for (std::size_t kj = 0; kj < cg.k; ++kj) {
        T* row = cols + ((ch * cg.k + ki) * cg.k + kj) * p;
        for (std::size_t oh = 0; oh < cg.ho; ++oh) {
          const long ih = static_cast<long>(oh) * cg.stride - cg.pad + static_cast<long>(ki);
          T* dst = row + oh * cg.wo;
          if (ih < 0 || ih >= static_cast<long>(cg.h)) {
            std::fill(dst, dst + cg.wo, T{0});
            continue;
          }
          const T* src = x + (ch * cg.h + static_cast<std::size_t>(ih)) * cg.w;
          for (std::size_t ow = 0; ow < cg.wo; ++ow) {
            const long iw = static_cast<long>(ow) * cg.stride - cg.pad + static_cast<long>(kj);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(cg.w)) ? T{0} : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& cg, T* dx) {
  const std::size_t p = cg.pixels();
  for (std::size_t ch = 0; ch < cg.c; ++ch) {
    for (std::size_t ki = 0; ki < cg.k; ++ki) {
      for (std::size_t kj = 0; kj < cg.k; ++kj) {
        const T* row = cols + ((ch * cg.k + ki) * cg.k + kj) * p;
        for (std::size_t oh = 0; oh < cg.ho; ++oh) {
          const long ih = static_cast<long>(oh) * cg.stride - cg.pad + static_cast<long>(ki);
          if (ih < 0 || ih >= static_cast<long>(cg.h)) continue;
          T* dst = dx + (ch * cg.h + static_cast<std::size_t>(ih)) * cg.w;
          const T* src = row + oh * cg.wo;
          for (std::size_t ow = 0; ow < cg.wo; ++ow) {
            const long iw = static_cast<long>(ow) * cg.stride - cg.pad + static_cast<long>(kj);
            if (iw >= 0 && iw < static_cast<long>(cg.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  require_rank("conv2d", x, 3, "input");
  require_rank("conv2d", weight, 4, "weight");
  if (stride < 1 || padding < 0) shape_fail("conv2d", "stride must be >= 1 and padding >= 0");
  ConvGeometry cg{};
  cg.c = x.dim(0);
  cg.h = x.dim(1);
  cg.w = x.dim(2);
  cg.o = weight.dim(0);
  cg.k = weight.dim(2);
  cg.stride = stride;
  cg.pad = padding;
  if (weight.dim(1) != cg.c || weight.dim(3) != cg.k) {
    shape_fail("conv2d", "input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  if (cg.h + 2 * padding < cg.k || cg.w + 2 * padding < cg.k) {
    shape_fail("conv2d", "kernel larger than padded input " + shape_string(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != cg.o) {
    shape_fail("conv2d", "bias " + shape_string(bias.shape()) + " vs " + std::to_string(cg.o) + " outputs");
  }
  cg.ho = (cg.h + 2 * padding - cg.k) / stride + 1;
  cg.wo = (cg.w + 2 * padding - cg.k) / stride + 1;

  const bool track = g.tracks({&x, &weight, &bias});
  auto out = Tensor<T>::zeros({cg.o, cg.ho, cg.wo}, track);

  Buffer<T> cols;
  const T* cols_ptr = x.data().data();
  if (!cg.pointwise()) {
    cols.resize(cg.patch() * cg.pixels());
    im2col(x.data().data(), cg, cols.data());
    cols_ptr = cols.data();
  }
  auto om = as_matrix(out.data(), cg.o, cg.pixels());
  om.noalias() = as_matrix(weight.data(), cg.o, cg.patch()) *
                 CMapR<T>(cols_ptr, static_cast<Eigen::Index>(cg.patch()),
                          static_cast<Eigen::Index>(cg.pixels()));
  if (has_bias) {
    om.colwise() += as_matrix(bias.data(), cg.o, 1).col(0);
  }
  g.verify_finite("conv2d", out);

  if (track) {
    g.record("conv2d", [x = x, weight = weight, bias = bias, out = out, cg = cg, has_bias = has_bias, cols = std::move(cols)]() mutable {
      if (!out.has_grad()) return;
      auto go = as_matrix(std::as_const(out).grad(), cg.o, cg.pixels());
      const T* cp = cg.pointwise() ? x.data().data() : cols.data();
      CMapR<T> cm(cp, static_cast<Eigen::Index>(cg.patch()), static_cast<Eigen::Index>(cg.pixels()));
      if (weight.requires_grad()) {
        as_matrix(weight.grad(), cg.o, cg.patch()).noalias() += go * cm.transpose();
      }
      if (has_bias && bias.requires_grad()) {
        as_matrix(bias.grad(), cg.o, 1) += go.rowwise().sum();
      }
      if (x.requires_grad()) {
        auto wm = as_matrix(std::as_const(weight).data(), cg.o, cg.patch());
        if (cg.pointwise()) {
          as_matrix(x.grad(), cg.patch(), cg.pixels()).noalias() += wm.transpose() * go;
        } else {
          MatR<T> dcols = wm.transpose() * go;
          col2im_add(dcols.data(), cg, x.grad().data());
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
  std::size_t i0, i1;
  double f;
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear(Graph<T>& g, const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank("upsample_bilinear", x, 3, "input");
  if (out_h == 0 || out_w == 0) shape_fail("upsample_bilinear", "target size must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto rows = resize_taps(h, out_h);
  const auto colt = resize_taps(w, out_w);
  const bool track = g.tracks({&x});
  auto out = Tensor<T>::zeros({c, out_h, out_w}, track);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = x.data().data() + ch * h * w;
    T* dst = out.data().data() + ch * out_h * out_w;
    for (std::size_t r = 0; r < out_h; ++r) {
      const Tap& tr = rows[r];
      const T fr = static_cast<T>(tr.f);
      const T* a = src + tr.i0 * w;
      const T* b = src + tr.i1 * w;
      for (std::size_t q = 0; q < out_w; ++q) {
        const Tap& tc = colt[q];
        const T fc = static_cast<T>(tc.f);
        const T top = (T{1} - fc) * a[tc.i0] + fc * a[tc.i1];
        const T bot = (T{1} - fc) * b[tc.i0] + fc * b[tc.i1];
        dst[r * out_w + q] = (T{1} - fr) * top + fr * bot;
      }
    }
  }
  g.verify_finite("upsample_bilinear", out);
  if (track) {
    g.record("upsample_bilinear", [x = x, out = out, c = c, h = h, w = w, out_h = out_h, out_w = out_w, rows = rows, colt = colt]() mutable {
      if (!out.has_grad() || !x.requires_grad()) return;
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = go.data() + ch * out_h * out_w;
        T* dst = gx.data() + ch * h * w;
        for (std::size_t r = 0; r < out_h; ++r) {
          const Tap& tr = rows[r];
          const T fr = static_cast<T>(tr.f);
          T* a = dst + tr.i0 * w;
          T* b = dst + tr.i1 * w;
          for (std::size_t q = 0; q < out_w; ++q) {
            const Tap& tc = colt[q];
            const T fc = static_cast<T>(tc.f);
            const T v = src[r * out_w + q];
            const T vt = (T{1} - fr) * v, vb = fr * v;
            a[tc.i0] += (T{1} - fc) * vt;
            a[tc.i1] += fc * vt;
            b[tc.i0] += (T{1} - fc) * vb;
            b[tc.i1] += fc * vb;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(Graph<T>& g, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) shape_fail("concat", "rank-0 input");
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      shape_fail("concat", "trailing dims " + shape_string(p.shape()) + " vs " + shape_string(shape));
    }
    lead += p.dim(0);
  }
  shape[0] = lead;
  const bool track = g.tracks(parts);
  auto out = Tensor<T>::zeros(shape, track);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
  }
  if (track) {
    g.record("concat", [parts = parts, out = out]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto gp = p.grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
        }
        off += p.numel();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> grid_sample(Graph<T>& g, const Tensor<T>& fmap, const Tensor<T>& points) {
  require_rank("grid_sample", fmap, 3, "feature map");
  if (points.rank() != 2 || points.dim(1) != 2) {
    shape_fail("grid_sample", "points must be [N,2], got " + shape_string(points.shape()));
  }
  const std::size_t c = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2), n = points.dim(0);

  struct Cell {
    std::size_t r0, r1, c0, c1;
    T fr, fc;
    bool x_clamped, y_clamped;
  };
  auto locate = [](T coord, std::size_t extent, std::size_t& i0, std::size_t& i1, T& frac,
                   bool& clamped) {
    T u = coord - T(0.5);
    const T hi = static_cast<T>(extent - 1);
    clamped = u < T{0} || u > hi;
    u = std::clamp(u, T{0}, hi);
    if (std::isnan(u)) {
      // Sample the first cell with NaN weights so the output is NaN.
      i0 = 0;
      i1 = extent == 1 ? 0 : 1;
      frac = u;
      return;
    }
    if (extent == 1) {
      i0 = i1 = 0;
      frac = 0;
      return;
    }
    i0 = std::min(static_cast<std::size_t>(std::floor(u)), extent - 2);
    i1 = i0 + 1;
    frac = u - static_cast<T>(i0);
  };

  std::vector<Cell> cells(n);
  for (std::size_t k = 0; k < n; ++k) {
    Cell& cell = cells[k];
    locate(points.data()[2 * k], w, cell.c0, cell.c1, cell.fc, cell.x_clamped);
    locate(points.data()[2 * k + 1], h, cell.r0, cell.r1, cell.fr, cell.y_clamped);
  }

  const bool track = g.tracks({&fmap, &points});
  auto out = Tensor<T>::zeros({n, c}, track);
  const T* f = fmap.data().data();
  const std::size_t plane = h * w;
  for (std::size_t k = 0; k < n; ++k) {
    const Cell& cell = cells[k];
    const T w00 = (T{1} - cell.fr) * (T{1} - cell.fc), w01 = (T{1} - cell.fr) * cell.fc;
    const T w10 = cell.fr * (T{1} - cell.fc), w11 = cell.fr * cell.fc;
    const std::size_t i00 = cell.r0 * w + cell.c0, i01 = cell.r0 * w + cell.c1;
    const std::size_t i10 = cell.r1 * w + cell.c0, i11 = cell.r1 * w + cell.c1;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = f + ch * plane;
      out.data()[k * c + ch] = w00 * p[i00] + w01 * p[i01] + w10 * p[i10] + w11 * p[i11];
    }
  }
  g.verify_finite("grid_sample", out);

  if (track) {
    g.record("grid_sample", [fmap = fmap, points = points, out = out, cells = std::move(cells), c = c, w = w, n = n, plane = plane]() mutable {
      if (!out.has_grad()) return;
      auto go = std::as_const(out).grad();
      const T* f = fmap.data().data();
      T* gf = fmap.requires_grad() ? fmap.grad().data() : nullptr;
      T* gp = points.requires_grad() ? points.grad().data() : nullptr;
      for (std::size_t k = 0; k < n; ++k) {
        const Cell& cell = cells[k];
        const T w00 = (T{1} - cell.fr) * (T{1} - cell.fc), w01 = (T{1} - cell.fr) * cell.fc;
        const T w10 = cell.fr * (T{1} - cell.fc), w11 = cell.fr * cell.fc;
        const std::size_t i00 = cell.r0 * w + cell.c0, i01 = cell.r0 * w + cell.c1;
        const std::size_t i10 = cell.r1 * w + cell.c0, i11 = cell.r1 * w + cell.c1;
        T dx = 0, dy = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T v = go[k * c + ch];
          if (v == T{0}) continue;
          if (gf) {
            T* q = gf + ch * plane;
            q[i00] += w00 * v;
            q[i01] += w01 * v;
            q[i10] += w10 * v;
            q[i11] += w11 * v;
          }
          if (gp) {
            const T* p = f + ch * plane;
            dx += v * ((T{1} - cell.fr) * (p[i01] - p[i00]) + cell.fr * (p[i11] - p[i10]));
            dy += v * ((T{1} - cell.fc) * (p[i10] - p[i00]) + cell.fc * (p[i11] - p[i01]));
          }
        }
        if (gp) {
          // Degenerate single-column/row maps have no spatial derivative.
          if (!cell.x_clamped && cell.c0 != cell.c1) gp[2 * k] += dx;
          if (!cell.y_clamped && cell.r0 != cell.r1) gp[2 * k + 1] += dy;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> edge_lengths(Graph<T>& g, const Tensor<T>& vertices) {
  if (vertices.rank() != 2 || vertices.dim(1) != 2) {
    shape_fail("edge_lengths", "vertices must be [N,2], got " + shape_string(vertices.shape()));
  }
  const std::size_t n = vertices.dim(0);
  const bool track = g.tracks({&vertices});
  auto out = Tensor<T>::zeros({n}, track);
  const T* v = vertices.data().data();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = (k + 1) % n;
    out.data()[k] = std::hypot(v[2 * j] - v[2 * k], v[2 * j + 1] - v[2 * k + 1]);
  }
  g.verify_finite("edge_lengths", out);
  if (track) {
    g.record("edge_lengths", [vertices = vertices, out = out, n = n]() mutable {
      if (!out.has_grad() || !vertices.requires_grad()) return;
      auto go = std::as_const(out).grad();
      auto gv = vertices.grad();
      const T* v = vertices.data().data();
      for (std::size_t k = 0; k < n; ++k) {
        const T len = out.data()[k];
        if (len == T{0}) continue;
        const std::size_t j = (k + 1) % n;
        const T ux = (v[2 * j] - v[2 * k]) / len, uy = (v[2 * j + 1] - v[2 * k + 1]) / len;
        gv[2 * j] += go[k] * ux;
        gv[2 * j + 1] += go[k] * uy;
        gv[2 * k] -= go[k] * ux;
        gv[2 * k + 1] -= go[k] * uy;
      }
    });
  }
  return out;
}

#define POLYDEFORM_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sub(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                      \
  template Tensor<T> add_scalar(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> relu(Graph<T>&, const Tensor<T>&);                                          \
  template Tensor<T> sqrt_eps(Graph<T>&, const Tensor<T>&, T);                                   \
  template Tensor<T> clamp(Graph<T>&, const Tensor<T>&, T, T);                                   \
  template Tensor<T> sum(Graph<T>&, const Tensor<T>&);                                           \
  template Tensor<T> mean(Graph<T>&, const Tensor<T>&);                                          \
  template Tensor<T> matmul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> matmul_nt(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> transpose(Graph<T>&, const Tensor<T>&);                                     \
  template Tensor<T> linear(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> softmax_rows(Graph<T>&, const Tensor<T>&);                                  \
  template Tensor<T> layer_norm(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                T);                                                              \
  template Tensor<T> conv2d(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                            int);                                                                \
  template Tensor<T> upsample_bilinear(Graph<T>&, const Tensor<T>&, std::size_t, std::size_t);   \
  template Tensor<T> concat(Graph<T>&, const std::vector<Tensor<T>>&);                           \
  template Tensor<T> grid_sample(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> edge_lengths(Graph<T>&, const Tensor<T>&);

POLYDEFORM_INSTANTIATE_OPS(float)
POLYDEFORM_INSTANTIATE_OPS(double)

#undef POLYDEFORM_INSTANTIATE_OPS

}  // namespace polydeform::autodiff::ops
