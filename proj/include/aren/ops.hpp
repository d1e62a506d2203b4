#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aren/tensor.hpp"

// Elementwise ops, reductions, batched matmul, activations and losses.
// Every op allocates a fresh output node; inputs are never mutated.
// Backward closures accumulate (+=) so shared subgraphs sum naturally.

namespace aren {

namespace detail {

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = Tensor<T>::op_result("add", a.shape(), {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward = [an, bn](detail::Node<T>& self) {
      const size_t n = self.grad.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = Tensor<T>::op_result("sub", a.shape(), {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward = [an, bn](detail::Node<T>& self) {
      const size_t n = self.grad.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  auto out = Tensor<T>::op_result("mul", a.shape(), {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward = [an, bn](detail::Node<T>& self) {
      const size_t n = self.grad.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->data[i];
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T k) {
  auto out = Tensor<T>::op_result("scale", a.shape(), {a.node()});
  const T* pa = a.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * k;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward = [an, k](detail::Node<T>& self) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * k;
    };
  }
  return out;
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  auto out = Tensor<T>::op_result("square", a.shape(), {a.node()});
  const T* pa = a.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pa[i];
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward = [an](detail::Node<T>& self) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * T(2) * an->data[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto out = Tensor<T>::op_result("sum", Shape{1}, {a.node()});
  const T* pa = a.data();
  const int64_t n = a.numel();
  // Serial accumulation: result independent of thread count by construction.
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(pa[i]);
  out.data()[0] = static_cast<T>(acc);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward = [an](detail::Node<T>& self) {
      an->ensure_grad();
      const T g = self.grad[0];
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    };
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  auto out = Tensor<T>::op_result("mean", Shape{1}, {a.node()});
  const T* pa = a.data();
  const int64_t n = a.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(pa[i]);
  out.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  if (out.requires_grad()) {
    auto an = a.node();
    const T inv_n = T(1) / static_cast<T>(n);
    out.node()->backward = [an, inv_n](detail::Node<T>& self) {
      an->ensure_grad();
      const T g = self.grad[0] * inv_n;
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    };
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& s) {
  if (s.numel() != a.numel())
    throw ContractError("reshape: numel mismatch " + a.shape().str() + " -> " + s.str());
  auto out = Tensor<T>::op_result("reshape", s, {a.node()});
  out.vec() = a.vec();
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backward = [an](detail::Node<T>& self) {
      an->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    };
  }
  return out;
}

// C[b,i,j] = sum_k A[b,i,k] * B[b,k,j]. Inner loops are axpy-shaped so the
// compiler can vectorize without reassociating reductions.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() != 3 || b.shape().rank() != 3)
    throw ContractError("bmm: expects rank-3 tensors, got " + a.shape().str() + " and " + b.shape().str());
  const int64_t nb = a.shape()[0], ni = a.shape()[1], nk = a.shape()[2];
  if (b.shape()[0] != nb || b.shape()[1] != nk)
    throw ContractError("bmm: inner dims mismatch " + a.shape().str() + " x " + b.shape().str());
  const int64_t nj = b.shape()[2];
  auto out = Tensor<T>::op_result("bmm", Shape{nb, ni, nj}, {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t ib = 0; ib < nb; ++ib) {
    for (int64_t i = 0; i < ni; ++i) {
      T* crow = po + (ib * ni + i) * nj;
      for (int64_t j = 0; j < nj; ++j) crow[j] = T(0);
      const T* arow = pa + (ib * ni + i) * nk;
      for (int64_t k = 0; k < nk; ++k) {
        const T av = arow[k];
        const T* brow = pb + (ib * nk + k) * nj;
        for (int64_t j = 0; j < nj; ++j) crow[j] += av * brow[j];
      }
    }
  }
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward = [an, bn, nb, ni, nk, nj](detail::Node<T>& self) {
      const T* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        const T* pb = bn->data.data();
        // dA[b,i,k] = sum_j g[b,i,j] * B[b,k,j]
        for (int64_t ib = 0; ib < nb; ++ib)
          for (int64_t i = 0; i < ni; ++i) {
            const T* grow = g + (ib * ni + i) * nj;
            T* garow = ga + (ib * ni + i) * nk;
            for (int64_t j = 0; j < nj; ++j) {
              const T gv = grow[j];
              const T* bcol = pb + ib * nk * nj + j;
              for (int64_t k = 0; k < nk; ++k) garow[k] += gv * bcol[k * nj];
            }
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        const T* pa = an->data.data();
        // dB[b,k,j] = sum_i A[b,i,k] * g[b,i,j]
        for (int64_t ib = 0; ib < nb; ++ib)
          for (int64_t i = 0; i < ni; ++i) {
            const T* arow = pa + (ib * ni + i) * nk;
            const T* grow = g + (ib * ni + i) * nj;
            for (int64_t k = 0; k < nk; ++k) {
              const T av = arow[k];
              T* gbrow = gb + (ib * nk + k) * nj;
              for (int64_t j = 0; j < nj; ++j) gbrow[j] += av * grow[j];
            }
          }
      }
    };
  }
  return out;
}

// C[b,i,j] = sum_c A[b,i,c] * B[b,j,c]  (second operand transposed).
template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() != 3 || b.shape().rank() != 3)
    throw ContractError("bmm_nt: expects rank-3 tensors, got " + a.shape().str() + " and " + b.shape().str());
  const int64_t nb = a.shape()[0], ni = a.shape()[1], nc = a.shape()[2];
  if (b.shape()[0] != nb || b.shape()[2] != nc)
    throw ContractError("bmm_nt: inner dims mismatch " + a.shape().str() + " x " + b.shape().str());
  const int64_t nj = b.shape()[1];
  auto out = Tensor<T>::op_result("bmm_nt", Shape{nb, ni, nj}, {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t ib = 0; ib < nb; ++ib)
    for (int64_t i = 0; i < ni; ++i) {
      const T* arow = pa + (ib * ni + i) * nc;
      T* crow = po + (ib * ni + i) * nj;
      for (int64_t j = 0; j < nj; ++j) {
        const T* brow = pb + (ib * nj + j) * nc;
        // Four independent partial sums; vectorizes without -ffast-math.
        T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        int64_t c = 0;
        for (; c + 4 <= nc; c += 4) {
          s0 += arow[c] * brow[c];
          s1 += arow[c + 1] * brow[c + 1];
          s2 += arow[c + 2] * brow[c + 2];
          s3 += arow[c + 3] * brow[c + 3];
        }
        for (; c < nc; ++c) s0 += arow[c] * brow[c];
        crow[j] = (s0 + s1) + (s2 + s3);
      }
    }
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward = [an, bn, nb, ni, nc, nj](detail::Node<T>& self) {
      const T* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        const T* pb = bn->data.data();
        // dA[b,i,c] = sum_j g[b,i,j] * B[b,j,c]
        for (int64_t ib = 0; ib < nb; ++ib)
          for (int64_t i = 0; i < ni; ++i) {
            const T* grow = g + (ib * ni + i) * nj;
            T* garow = ga + (ib * ni + i) * nc;
            for (int64_t j = 0; j < nj; ++j) {
              const T gv = grow[j];
              const T* brow = pb + (ib * nj + j) * nc;
              for (int64_t c = 0; c < nc; ++c) garow[c] += gv * brow[c];
            }
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        const T* pa = an->data.data();
        // dB[b,j,c] = sum_i g[b,i,j] * A[b,i,c]
        for (int64_t ib = 0; ib < nb; ++ib)
          for (int64_t i = 0; i < ni; ++i) {
            const T* arow = pa + (ib * ni + i) * nc;
            const T* grow = g + (ib * ni + i) * nj;
            for (int64_t j = 0; j < nj; ++j) {
              const T gv = grow[j];
              T* gbrow = gb + (ib * nj + j) * nc;
              for (int64_t c = 0; c < nc; ++c) gbrow[c] += gv * arow[c];
            }
          }
      }
    };
  }
  return out;
}

// Slope alpha for x < 0. The tie at exactly x == 0 takes the alpha branch;
// the gradient checker avoids sampling at the kink.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha) {
  if (!(alpha >= T(0) && alpha < T(1)))
    throw ContractError("leaky_relu: alpha must be in [0,1), got " + std::to_string(static_cast<double>(alpha)));
  auto out = Tensor<T>::op_result("leaky_relu", x.shape(), {x.node()});
  const T* px = x.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : alpha * px[i];
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward = [xn, alpha](detail::Node<T>& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        xn->grad[i] += self.grad[i] * (xn->data[i] > T(0) ? T(1) : alpha);
    };
  }
  return out;
}

template <typename T>
inline T sigmoid_stable(T x) {
  // Branch on sign so exp never overflows.
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto out = Tensor<T>::op_result("sigmoid", x.shape(), {x.node()});
  const T* px = x.data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = sigmoid_stable(px[i]);
  if (out.requires_grad()) {
    auto xn = x.node();
    // The saved activations are read off `self`; capturing the output node
    // here would make the node own itself through the closure.
    out.node()->backward = [xn](detail::Node<T>& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const T s = self.data[i];
        xn->grad[i] += self.grad[i] * s * (T(1) - s);
      }
    };
  }
  return out;
}

// mean(|a - b|); subgradient 0 at exact ties.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "l1_loss");
  auto out = Tensor<T>::op_result("l1_loss", Shape{1}, {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  const int64_t n = a.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(pa[i]) - static_cast<double>(pb[i]));
  out.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    const T inv_n = T(1) / static_cast<T>(n);
    out.node()->backward = [an, bn, inv_n](detail::Node<T>& self) {
      const T g = self.grad[0] * inv_n;
      const size_t n = an->data.size();
      for (size_t i = 0; i < n; ++i) {
        const T d = an->data[i] - bn->data[i];
        const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += s;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] -= s;
        }
      }
    };
  }
  return out;
}

// mean((a - b)^2).
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mse_loss");
  auto out = Tensor<T>::op_result("mse_loss", Shape{1}, {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  const int64_t n = a.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  out.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    const T inv_n = T(2) / static_cast<T>(n);
    out.node()->backward = [an, bn, inv_n](detail::Node<T>& self) {
      const T g = self.grad[0] * inv_n;
      const size_t n = an->data.size();
      for (size_t i = 0; i < n; ++i) {
        const T d = (an->data[i] - bn->data[i]) * g;
        if (an->requires_grad) {
          an->ensure_grad();
          an->grad[i] += d;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          bn->grad[i] -= d;
        }
      }
    };
  }
  return out;
}

// mean over elements of max(x,0) - x*t + log(1 + exp(-|x|)).
// Algebraically BCE(sigmoid(x), t) but never forms exp(x) for large |x|.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  detail::require_same_shape(logits, targets, "bce_with_logits");
  auto out = Tensor<T>::op_result("bce_with_logits", Shape{1}, {logits.node(), targets.node()});
  const T* px = logits.data();
  const T* pt = targets.data();
  const int64_t n = logits.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(px[i]);
    const double t = static_cast<double>(pt[i]);
    acc += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  out.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  if (out.requires_grad()) {
    auto xn = logits.node(), tn = targets.node();
    const T inv_n = T(1) / static_cast<T>(n);
    out.node()->backward = [xn, tn, inv_n](detail::Node<T>& self) {
      const T g = self.grad[0] * inv_n;
      const size_t n = xn->data.size();
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (size_t i = 0; i < n; ++i)
          xn->grad[i] += g * (sigmoid_stable(xn->data[i]) - tn->data[i]);
      }
      if (tn->requires_grad) {
        tn->ensure_grad();
        for (size_t i = 0; i < n; ++i) tn->grad[i] += g * (-xn->data[i]);
      }
    };
  }
  return out;
}

// Forward emits q's values bit-for-bit; backward routes the incoming gradient
// to z untouched and sends nothing to q.
template <typename T>
Tensor<T> straight_through(const Tensor<T>& z, const Tensor<T>& q) {
  detail::require_same_shape(z, q, "straight_through");
  auto out = Tensor<T>::op_result("straight_through", z.shape(), {z.node(), q.node()});
  out.vec() = q.vec();
  if (out.requires_grad()) {
    auto zn = z.node();
    out.node()->backward = [zn](detail::Node<T>& self) {
      if (!zn->requires_grad) return;
      zn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) zn->grad[i] += self.grad[i];
    };
  }
  return out;
}

// out[p, :] = table[indices[p], :], reshaped to grid x row dim. Backward
// scatter-adds rows in index order, so repeated indices accumulate
// deterministically.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int32_t>& indices, const Shape& out_shape) {
  if (table.shape().rank() != 2)
    throw ContractError("gather_rows: table must be rank 2, got " + table.shape().str());
  const int64_t k = table.shape()[0];
  const int64_t c = table.shape()[1];
  if (out_shape[out_shape.rank() - 1] != c)
    throw ContractError("gather_rows: output last dim must equal table row dim " + std::to_string(c));
  const int64_t rows = out_shape.numel() / c;
  if (static_cast<int64_t>(indices.size()) != rows)
    throw ContractError("gather_rows: " + std::to_string(indices.size()) + " indices for " + std::to_string(rows) + " output rows");
  for (int32_t idx : indices)
    if (idx < 0 || idx >= k)
      throw ContractError("gather_rows: index " + std::to_string(idx) + " outside table of " + std::to_string(k) + " rows");
  auto out = Tensor<T>::op_result("gather_rows", out_shape, {table.node()});
  const T* pt = table.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = pt + static_cast<int64_t>(indices[static_cast<size_t>(r)]) * c;
    T* dst = po + r * c;
    for (int64_t j = 0; j < c; ++j) dst[j] = src[j];
  }
  if (out.requires_grad()) {
    auto tn = table.node();
    auto idx = indices;  // own a copy; caller may discard theirs
    out.node()->backward = [tn, idx, rows, c](detail::Node<T>& self) {
      tn->ensure_grad();
      const T* g = self.grad.data();
      T* gt = tn->grad.data();
      for (int64_t r = 0; r < rows; ++r) {
        T* dst = gt + static_cast<int64_t>(idx[static_cast<size_t>(r)]) * c;
        const T* src = g + r * c;
        for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

// Concatenate along the trailing (channel) axis of NHWC tensors.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() != 4 || b.shape().rank() != 4)
    throw ContractError("concat_channels: expects rank-4 tensors, got " + a.shape().str() + " and " + b.shape().str());
  for (int i = 0; i < 3; ++i)
    if (a.shape()[i] != b.shape()[i])
      throw ContractError("concat_channels: leading dims differ " + a.shape().str() + " vs " + b.shape().str());
  const int64_t fa = a.shape()[3], fb = b.shape()[3];
  const int64_t rows = a.numel() / fa;
  Shape os{a.shape()[0], a.shape()[1], a.shape()[2], fa + fb};
  auto out = Tensor<T>::op_result("concat_channels", os, {a.node(), b.node()});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    T* dst = po + r * (fa + fb);
    const T* sa = pa + r * fa;
    const T* sb = pb + r * fb;
    for (int64_t j = 0; j < fa; ++j) dst[j] = sa[j];
    for (int64_t j = 0; j < fb; ++j) dst[fa + j] = sb[j];
  }
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backward = [an, bn, rows, fa, fb](detail::Node<T>& self) {
      const T* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        T* ga = an->grad.data();
        for (int64_t r = 0; r < rows; ++r) {
          const T* src = g + r * (fa + fb);
          T* dst = ga + r * fa;
          for (int64_t j = 0; j < fa; ++j) dst[j] += src[j];
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* gb = bn->grad.data();
        for (int64_t r = 0; r < rows; ++r) {
          const T* src = g + r * (fa + fb) + fa;
          T* dst = gb + r * fb;
          for (int64_t j = 0; j < fb; ++j) dst[j] += src[j];
        }
      }
    };
  }
  return out;
}

}  // namespace aren
