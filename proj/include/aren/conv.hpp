#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aren/tensor.hpp"

// Spatial kernels over NHWC tensors. Weights are (kh, kw, f_in, f_out) with
// f_out contiguous, so the hot inner loops are unit-stride accumulations.

namespace aren {

enum class Padding { Same, Valid };

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, Padding pad) {
  if (pad == Padding::Same) return (in + stride - 1) / stride;
  if (in < k) throw ContractError("conv2d: valid padding needs input >= kernel");
  return (in - k) / stride + 1;
}

// Leading pad for same-padding; trailing pad gets the odd leftover.
inline int64_t pad_before(int64_t in, int64_t out, int64_t k, int64_t stride, Padding pad) {
  if (pad == Padding::Valid) return 0;
  int64_t total = (out - 1) * stride + k - in;
  if (total < 0) total = 0;
  return total / 2;
}

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* op, const char* which) {
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(static_cast<double>(v[i])))
      throw NumericError(std::string(op) + ": non-finite " + which + " at flat index " + std::to_string(i));
}

// Register-blocked matrix kernels. The accumulator tile lives in registers
// across the whole contraction, which is what the straightforward
// accumulate-in-place loop can't do (its loop-carried store/load chain caps
// throughput at one row per cycle regardless of vector width). The tile is
// spelled with compiler vector types because the dimensions only exist at
// run time, and without constant trip counts the autovectorizer refuses to
// build this shape on its own.
#if defined(__GNUC__) || defined(__clang__)
#define AREN_GEMM_VECTOR 1
#endif

template <typename T>
struct GemmTile {
#if AREN_GEMM_VECTOR
  // 64-byte lanes lower to whatever the target has; aligned(1) keeps loads
  // legal on arbitrary row offsets, may_alias because the rows are plain T.
  typedef T Vec __attribute__((vector_size(64), aligned(1), may_alias));
  static constexpr int64_t kLanes = 64 / sizeof(T);
#else
  static constexpr int64_t kLanes = 8;
#endif
  static constexpr int64_t kRows = 4;     // A rows per tile
  static constexpr int64_t kCols = 2;     // vector columns per tile
  static constexpr int64_t kWidth = kCols * kLanes;
};

// Shared inner loop: C(rows i0..i0+4, cols j0..j0+width) += A' * B where the
// contraction index runs over `steps` and the two operands advance by their
// row strides. `a_step`/`a_idx` abstract over the normal and transposed A
// walks so both public kernels use the one register tile.
template <typename T>
inline void gemm_tile_panel(int64_t i0, int64_t j0, int64_t steps, const T* a, int64_t a_row_stride,
                            int64_t a_col_stride, const T* b, int64_t ldb, T* c, int64_t ldc) {
#if AREN_GEMM_VECTOR
  using Vec = typename GemmTile<T>::Vec;
  constexpr int64_t L = GemmTile<T>::kLanes;
  Vec acc[GemmTile<T>::kRows][GemmTile<T>::kCols] = {};
  const T* ap = a + i0 * a_row_stride;
  for (int64_t p = 0; p < steps; ++p) {
    const T* brow = b + p * ldb + j0;
    const Vec b0 = *reinterpret_cast<const Vec*>(brow);
    const Vec b1 = *reinterpret_cast<const Vec*>(brow + L);
    for (int64_t i = 0; i < GemmTile<T>::kRows; ++i) {
      const T av = ap[i * a_row_stride + p * a_col_stride];
      acc[i][0] += av * b0;
      acc[i][1] += av * b1;
    }
  }
  for (int64_t i = 0; i < GemmTile<T>::kRows; ++i) {
    T* crow = c + (i0 + i) * ldc + j0;
    Vec c0 = *reinterpret_cast<const Vec*>(crow);
    Vec c1 = *reinterpret_cast<const Vec*>(crow + L);
    c0 += acc[i][0];
    c1 += acc[i][1];
    *reinterpret_cast<Vec*>(crow) = c0;
    *reinterpret_cast<Vec*>(crow + L) = c1;
  }
#else
  constexpr int64_t W = GemmTile<T>::kWidth;
  T acc[GemmTile<T>::kRows][W] = {};
  const T* ap = a + i0 * a_row_stride;
  for (int64_t p = 0; p < steps; ++p) {
    const T* brow = b + p * ldb + j0;
    for (int64_t i = 0; i < GemmTile<T>::kRows; ++i) {
      const T av = ap[i * a_row_stride + p * a_col_stride];
      for (int64_t j = 0; j < W; ++j) acc[i][j] += av * brow[j];
    }
  }
  for (int64_t i = 0; i < GemmTile<T>::kRows; ++i) {
    T* crow = c + (i0 + i) * ldc + j0;
    for (int64_t j = 0; j < W; ++j) crow[j] += acc[i][j];
  }
#endif
}

template <typename T>
inline T vdot(const T* x, const T* y, int64_t nn) {
  int64_t p = 0;
  T s = T(0);
#if AREN_GEMM_VECTOR
  using Vec = typename GemmTile<T>::Vec;
  constexpr int64_t L = GemmTile<T>::kLanes;
  if (nn >= 2 * L) {
    Vec acc0{}, acc1{};
    for (; p + 2 * L <= nn; p += 2 * L) {
      acc0 += *reinterpret_cast<const Vec*>(x + p) * *reinterpret_cast<const Vec*>(y + p);
      acc1 += *reinterpret_cast<const Vec*>(x + p + L) * *reinterpret_cast<const Vec*>(y + p + L);
    }
    acc0 += acc1;
    for (int64_t l = 0; l < L; ++l) s += acc0[l];
  }
#endif
  for (; p < nn; ++p) s += x[p] * y[p];
  return s;
}

template <typename T>
inline void vaxpy(T a, const T* x, T* y, int64_t nn) {
  int64_t p = 0;
#if AREN_GEMM_VECTOR
  using Vec = typename GemmTile<T>::Vec;
  constexpr int64_t L = GemmTile<T>::kLanes;
  for (; p + L <= nn; p += L)
    *reinterpret_cast<Vec*>(y + p) += a * *reinterpret_cast<const Vec*>(x + p);
#endif
  for (; p < nn; ++p) y[p] += a * x[p];
}

template <typename T>
inline std::vector<T>& gemm_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

// Narrow C (fewer output columns than one tile): the register tile never
// engages, so reshape the work into long contiguous streams instead.
// Row-contiguous A turns each output into a packed dot product;
// column-contiguous A turns each contraction step into an axpy.
template <typename T>
inline void gemm_narrow_dot(int64_t m, int64_t n, int64_t steps, const T* a, int64_t ars,
                            const T* b, int64_t ldb, T* c, int64_t ldc) {
  auto& bt = gemm_scratch<T>();
  bt.resize(static_cast<size_t>(n * steps));
  for (int64_t p = 0; p < steps; ++p)
    for (int64_t j = 0; j < n; ++j) bt[j * steps + p] = b[p * ldb + j];
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      c[i * ldc + j] += vdot(a + i * ars, bt.data() + j * steps, steps);
}

template <typename T>
inline void gemm_narrow_axpy(int64_t m, int64_t n, int64_t steps, const T* a, int64_t acs,
                             const T* b, int64_t ldb, T* c, int64_t ldc) {
  auto& ct = gemm_scratch<T>();
  ct.assign(static_cast<size_t>(n * m), T(0));
  for (int64_t p = 0; p < steps; ++p) {
    const T* acol = a + p * acs;
    const T* brow = b + p * ldb;
    for (int64_t j = 0; j < n; ++j) vaxpy(brow[j], acol, ct.data() + j * m, m);
  }
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) c[i * ldc + j] += ct[j * m + i];
}

// Scalar edge: C(i,j) regions too small for a full tile. The contraction
// stays outermost per row so B is still walked row-contiguously.
template <typename T>
inline void gemm_edge(int64_t i0, int64_t i1, int64_t j0, int64_t j1, int64_t steps, const T* a,
                      int64_t a_row_stride, int64_t a_col_stride, const T* b, int64_t ldb, T* c,
                      int64_t ldc) {
  constexpr int64_t W = GemmTile<T>::kWidth;
  T acc[W];
  for (int64_t i = i0; i < i1; ++i) {
    const T* arow = a + i * a_row_stride;
    for (int64_t jb = j0; jb < j1; jb += W) {
      const int64_t w = std::min(W, j1 - jb);
      for (int64_t j = 0; j < w; ++j) acc[j] = T(0);
      for (int64_t p = 0; p < steps; ++p) {
        const T av = arow[p * a_col_stride];
        const T* brow = b + p * ldb + jb;
        for (int64_t j = 0; j < w; ++j) acc[j] += av * brow[j];
      }
      T* crow = c + i * ldc + jb;
      for (int64_t j = 0; j < w; ++j) crow[j] += acc[j];
    }
  }
}

template <typename T>
void gemm_panels(int64_t m, int64_t n, int64_t k, const T* a, int64_t a_row_stride,
                 int64_t a_col_stride, const T* b, T* c) {
  constexpr int64_t MR = GemmTile<T>::kRows;
  constexpr int64_t NR = GemmTile<T>::kWidth;
  if (n < NR) {
    if (a_col_stride == 1) return gemm_narrow_dot(m, n, k, a, a_row_stride, b, n, c, n);
    if (a_row_stride == 1) return gemm_narrow_axpy(m, n, k, a, a_col_stride, b, n, c, n);
  }
  const int64_t m_full = m - m % MR;
  const int64_t n_full = n - n % NR;
  for (int64_t i0 = 0; i0 < m_full; i0 += MR)
    for (int64_t j0 = 0; j0 < n_full; j0 += NR)
      gemm_tile_panel(i0, j0, k, a, a_row_stride, a_col_stride, b, n, c, n);
  if (n_full < n) gemm_edge(int64_t(0), m_full, n_full, n, k, a, a_row_stride, a_col_stride, b, n, c, n);
  if (m_full < m) gemm_edge(m_full, m, int64_t(0), n, k, a, a_row_stride, a_col_stride, b, n, c, n);
}

// C(M,N) += A(M,K) * B(K,N), all row-major and dense.
template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c) {
  gemm_panels(m, n, k, a, /*a_row_stride=*/k, /*a_col_stride=*/int64_t(1), b, c);
}

// C(K,N) += A(M,K)^T * B(M,N); the transposed walk is just the other stride
// pairing, so the same register tile serves both kernels.
template <typename T>
void gemm_tn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c) {
  gemm_panels(k, n, m, a, /*a_row_stride=*/int64_t(1), /*a_col_stride=*/k, b, c);
}

// Patch rows for one image: row p = (oy,ox) holds the (kh,kw,fin) window with
// zeros where the window hangs off the edge.
template <typename T>
void im2col(const T* px, int64_t h, int64_t w, int64_t fin, int64_t kh, int64_t kw,
            int64_t oh, int64_t ow, int64_t stride, int64_t pt, int64_t pl, T* col) {
  for (int64_t oy = 0; oy < oh; ++oy) {
    const int64_t iy0 = oy * stride - pt;
    for (int64_t ox = 0; ox < ow; ++ox) {
      const int64_t ix0 = ox * stride - pl;
      T* row = col + (oy * ow + ox) * kh * kw * fin;
      for (int64_t ky = 0; ky < kh; ++ky) {
        const int64_t iy = iy0 + ky;
        T* dst = row + ky * kw * fin;
        if (iy < 0 || iy >= h) {
          std::fill(dst, dst + kw * fin, T(0));
          continue;
        }
        for (int64_t kx = 0; kx < kw; ++kx) {
          const int64_t ix = ix0 + kx;
          if (ix < 0 || ix >= w) {
            std::fill(dst + kx * fin, dst + (kx + 1) * fin, T(0));
          } else {
            const T* src = px + ((iy * w) + ix) * fin;
            std::copy(src, src + fin, dst + kx * fin);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch rows back into the image gradient.
template <typename T>
void col2im_add(const T* col, int64_t h, int64_t w, int64_t fin, int64_t kh, int64_t kw,
                int64_t oh, int64_t ow, int64_t stride, int64_t pt, int64_t pl, T* gx) {
  for (int64_t oy = 0; oy < oh; ++oy) {
    const int64_t iy0 = oy * stride - pt;
    for (int64_t ox = 0; ox < ow; ++ox) {
      const int64_t ix0 = ox * stride - pl;
      const T* row = col + (oy * ow + ox) * kh * kw * fin;
      for (int64_t ky = 0; ky < kh; ++ky) {
        const int64_t iy = iy0 + ky;
        if (iy < 0 || iy >= h) continue;
        for (int64_t kx = 0; kx < kw; ++kx) {
          const int64_t ix = ix0 + kx;
          if (ix < 0 || ix >= w) continue;
          const T* src = row + (ky * kw + kx) * fin;
          T* dst = gx + ((iy * w) + ix) * fin;
          for (int64_t ci = 0; ci < fin; ++ci) dst[ci] += src[ci];
        }
      }
    }
  }
}

// Per-type scratch for patch matrices; grows to the largest conv seen and is
// reused across calls so the hot path never touches the allocator.
template <typename T>
std::vector<T>& conv_scratch(int which) {
  thread_local std::vector<T> bufs[2];
  return bufs[which];
}

}  // namespace detail

// x: (b,h,w,f_in), w: (kh,kw,f_in,f_out), bias: (f_out).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int64_t stride = 1, Padding pad = Padding::Same) {
  if (x.shape().rank() != 4) throw ContractError("conv2d: input must be rank 4 NHWC, got " + x.shape().str());
  if (w.shape().rank() != 4) throw ContractError("conv2d: weights must be rank 4 (kh,kw,f_in,f_out), got " + w.shape().str());
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  const int64_t nb = x.shape()[0], h = x.shape()[1], wid = x.shape()[2], fin = x.shape()[3];
  const int64_t kh = w.shape()[0], kw = w.shape()[1], fout = w.shape()[3];
  if (w.shape()[2] != fin)
    throw ContractError("conv2d: weight f_in " + std::to_string(w.shape()[2]) + " != input channels " + std::to_string(fin));
  if (bias.shape().rank() != 1 || bias.shape()[0] != fout)
    throw ContractError("conv2d: bias must be (f_out)=" + std::to_string(fout) + ", got " + bias.shape().str());
  detail::check_finite(x.vec(), "conv2d", "input");
  detail::check_finite(w.vec(), "conv2d", "weight");

  const int64_t oh = detail::conv_out_dim(h, kh, stride, pad);
  const int64_t ow = detail::conv_out_dim(wid, kw, stride, pad);
  const int64_t pt = detail::pad_before(h, oh, kh, stride, pad);
  const int64_t pl = detail::pad_before(wid, ow, kw, stride, pad);

  auto out = Tensor<T>::op_result("conv2d", Shape{nb, oh, ow, fout}, {x.node(), w.node(), bias.node()});
  const T* px = x.data();
  const T* pw = w.data();
  const T* pbias = bias.data();
  T* po = out.data();

  // The weight block is already the (kh*kw*fin, fout) matrix of a patch
  // product; each image becomes patch rows and one register-tiled multiply.
  // A pointwise kernel needs no patch copy: the input rows are the patches.
  const int64_t kk = kh * kw * fin;
  const int64_t mm = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pt == 0 && pl == 0;
  for (int64_t r = 0; r < nb * mm; ++r) std::copy(pbias, pbias + fout, po + r * fout);
  if (pointwise) {
    detail::gemm_nn(nb * mm, fout, fin, px, pw, po);
  } else {
    auto& col = detail::conv_scratch<T>(0);
    col.resize(static_cast<size_t>(mm * kk));
    for (int64_t b = 0; b < nb; ++b) {
      detail::im2col(px + b * h * wid * fin, h, wid, fin, kh, kw, oh, ow, stride, pt, pl, col.data());
      detail::gemm_nn(mm, fout, kk, col.data(), pw, po + b * mm * fout);
    }
  }

  if (out.requires_grad()) {
    auto xn = x.node(), wn = w.node(), bn = bias.node();
    out.node()->backward = [xn, wn, bn, nb, h, wid, fin, kh, kw, fout, oh, ow, stride, pt, pl,
                            kk, mm, pointwise](detail::Node<T>& self) {
      const T* g = self.grad.data();
      const T* px = xn->data.data();
      const T* pw = wn->data.data();
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        const int64_t n = nb * oh * ow;
        for (int64_t r = 0; r < n; ++r) {
          const T* grow = g + r * fout;
          for (int64_t co = 0; co < fout; ++co) gb[co] += grow[co];
        }
      }
      if (xn->requires_grad) xn->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      T* gx = xn->requires_grad ? xn->grad.data() : nullptr;
      T* gw = wn->requires_grad ? wn->grad.data() : nullptr;

      if (pointwise) {
        if (gw) detail::gemm_tn(nb * mm, fout, fin, px, g, gw);
        if (gx) {
          std::vector<T> wt(static_cast<size_t>(fin * fout));
          for (int64_t ci = 0; ci < fin; ++ci)
            for (int64_t co = 0; co < fout; ++co) wt[co * fin + ci] = pw[ci * fout + co];
          detail::gemm_nn(nb * mm, fin, fout, g, wt.data(), gx);
        }
        return;
      }

      std::vector<T> wt;
      if (gx) {
        // (fout, kh*kw*fin) layout turns the patch gradient into one multiply.
        wt.resize(static_cast<size_t>(kk * fout));
        for (int64_t kr = 0; kr < kk; ++kr)
          for (int64_t co = 0; co < fout; ++co) wt[co * kk + kr] = pw[kr * fout + co];
      }
      auto& col = detail::conv_scratch<T>(0);
      auto& dcol = detail::conv_scratch<T>(1);
      if (gw) col.resize(static_cast<size_t>(mm * kk));
      if (gx) dcol.resize(static_cast<size_t>(mm * kk));
      for (int64_t b = 0; b < nb; ++b) {
        const T* gb_rows = g + b * mm * fout;
        if (gw) {
          detail::im2col(px + b * h * wid * fin, h, wid, fin, kh, kw, oh, ow, stride, pt, pl, col.data());
          detail::gemm_tn(mm, fout, kk, col.data(), gb_rows, gw);
        }
        if (gx) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          detail::gemm_nn(mm, kk, fout, gb_rows, wt.data(), dcol.data());
          detail::col2im_add(dcol.data(), h, wid, fin, kh, kw, oh, ow, stride, pt, pl,
                             gx + b * h * wid * fin);
        }
      }
    };
  }
  return out;
}

// Batch statistics over (b,h,w) per channel. In train mode the running
// stats tensors are updated in place (EMA, biased batch variance); they are
// module state, not tape values, so the mutation is outside the graph.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var,
                     bool training, T momentum = T(0.9), T eps = T(1e-5)) {
  if (x.shape().rank() != 4) throw ContractError("batch_norm: input must be rank 4 NHWC, got " + x.shape().str());
  const int64_t f = x.shape()[3];
  auto check_param = [f](const Tensor<T>& p, const char* name) {
    if (p.shape().rank() != 1 || p.shape()[0] != f)
      throw ContractError(std::string("batch_norm: ") + name + " must be (" + std::to_string(f) + "), got " + p.shape().str());
  };
  check_param(gamma, "gamma");
  check_param(beta, "beta");
  check_param(running_mean, "running_mean");
  check_param(running_var, "running_var");

  const int64_t rows = x.numel() / f;
  auto out = Tensor<T>::op_result("batch_norm", x.shape(), {x.node(), gamma.node(), beta.node()});
  const T* px = x.data();
  T* po = out.data();

  std::vector<T> mean_v(static_cast<size_t>(f)), inv_v(static_cast<size_t>(f));
  if (training) {
    if (rows < 1) throw ContractError("batch_norm: empty batch");
    // Serial per-channel statistics keep results independent of threading.
    for (int64_t c = 0; c < f; ++c) {
      double s = 0.0;
      for (int64_t r = 0; r < rows; ++r) s += static_cast<double>(px[r * f + c]);
      const double mu = s / static_cast<double>(rows);
      double sq = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        const double d = static_cast<double>(px[r * f + c]) - mu;
        sq += d * d;
      }
      const double var = sq / static_cast<double>(rows);
      mean_v[static_cast<size_t>(c)] = static_cast<T>(mu);
      inv_v[static_cast<size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      running_mean.data()[c] = momentum * running_mean.data()[c] + (T(1) - momentum) * static_cast<T>(mu);
      running_var.data()[c] = momentum * running_var.data()[c] + (T(1) - momentum) * static_cast<T>(var);
    }
  } else {
    for (int64_t c = 0; c < f; ++c) {
      mean_v[static_cast<size_t>(c)] = running_mean.data()[c];
      inv_v[static_cast<size_t>(c)] = T(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }

  // Normalized activations are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
  const T* pg = gamma.data();
  const T* pb = beta.data();
  T* ph = xhat->data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = px + r * f;
    T* hrow = ph + r * f;
    T* orow = po + r * f;
    for (int64_t c = 0; c < f; ++c) {
      const T hv = (xrow[c] - mean_v[static_cast<size_t>(c)]) * inv_v[static_cast<size_t>(c)];
      hrow[c] = hv;
      orow[c] = pg[c] * hv + pb[c];
    }
  }

  if (out.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto inv = std::make_shared<std::vector<T>>(std::move(inv_v));
    out.node()->backward = [xn, gn, bn, xhat, inv, rows, f, training](detail::Node<T>& self) {
      const T* g = self.grad.data();
      const T* ph = xhat->data();
      // dgamma[c] = sum g*xhat, dbeta[c] = sum g.
      std::vector<double> sg(static_cast<size_t>(f), 0.0), sgh(static_cast<size_t>(f), 0.0);
      for (int64_t r = 0; r < rows; ++r) {
        const T* grow = g + r * f;
        const T* hrow = ph + r * f;
        for (int64_t c = 0; c < f; ++c) {
          sg[static_cast<size_t>(c)] += static_cast<double>(grow[c]);
          sgh[static_cast<size_t>(c)] += static_cast<double>(grow[c]) * static_cast<double>(hrow[c]);
        }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int64_t c = 0; c < f; ++c) gn->grad[c] += static_cast<T>(sgh[static_cast<size_t>(c)]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t c = 0; c < f; ++c) bn->grad[c] += static_cast<T>(sg[static_cast<size_t>(c)]);
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        T* gx = xn->grad.data();
        const T invn = T(1) / static_cast<T>(rows);
        for (int64_t r = 0; r < rows; ++r) {
          const T* grow = g + r * f;
          const T* hrow = ph + r * f;
          T* gxrow = gx + r * f;
          for (int64_t c = 0; c < f; ++c) {
            const T ge = gn->data[c] * (*inv)[static_cast<size_t>(c)];
            if (training) {
              // Batch statistics depend on x: subtract the mean-path and
              // variance-path contributions.
              gxrow[c] += ge * (grow[c] - static_cast<T>(sg[static_cast<size_t>(c)]) * invn -
                                hrow[c] * static_cast<T>(sgh[static_cast<size_t>(c)]) * invn);
            } else {
              gxrow[c] += ge * grow[c];
            }
          }
        }
      }
    };
  }
  return out;
}

// Nearest-neighbour upsample by an integer factor.
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, int64_t factor) {
  if (x.shape().rank() != 4) throw ContractError("resize_nearest: input must be rank 4 NHWC, got " + x.shape().str());
  if (factor < 1) throw ContractError("resize_nearest: factor must be >= 1, got " + std::to_string(factor));
  const int64_t nb = x.shape()[0], h = x.shape()[1], w = x.shape()[2], f = x.shape()[3];
  auto out = Tensor<T>::op_result("resize_nearest", Shape{nb, h * factor, w * factor, f}, {x.node()});
  const T* px = x.data();
  T* po = out.data();
  const int64_t oh = h * factor, ow = w * factor;
  for (int64_t b = 0; b < nb; ++b)
    for (int64_t oy = 0; oy < oh; ++oy) {
      const int64_t iy = oy / factor;
      for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t ix = ox / factor;
        const T* src = px + ((b * h + iy) * w + ix) * f;
        T* dst = po + ((b * oh + oy) * ow + ox) * f;
        for (int64_t c = 0; c < f; ++c) dst[c] = src[c];
      }
    }
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward = [xn, nb, h, w, f, factor, oh, ow](detail::Node<T>& self) {
      xn->ensure_grad();
      const T* g = self.grad.data();
      T* gx = xn->grad.data();
      for (int64_t b = 0; b < nb; ++b)
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy / factor;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox / factor;
            const T* src = g + ((b * oh + oy) * ow + ox) * f;
            T* dst = gx + ((b * h + iy) * w + ix) * f;
            for (int64_t c = 0; c < f; ++c) dst[c] += src[c];
          }
        }
    };
  }
  return out;
}

}  // namespace aren
