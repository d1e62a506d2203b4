#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "aren/ops.hpp"
#include "aren/rng.hpp"
#include "aren/tensor.hpp"

namespace aren {

// Codebook of K embedding rows plus assignment counters. The embeddings
// tensor is owned by a ParamStore when training; this wraps a handle.
template <typename T>
struct Codebook {
  Tensor<T> embeddings;        // (K, dim)
  std::vector<int64_t> usage;  // hits per row since the last reset

  explicit Codebook(Tensor<T> emb) : embeddings(std::move(emb)) {
    if (embeddings.shape().rank() != 2)
      throw ContractError("Codebook: embeddings must be (K,dim), got " + embeddings.shape().str());
    usage.assign(static_cast<size_t>(size()), 0);
  }

  int64_t size() const { return embeddings.shape()[0]; }
  int64_t dim() const { return embeddings.shape()[1]; }
  void reset_usage() { usage.assign(usage.size(), 0); }
};

// Encoder latents alongside their quantized assignment.
template <typename T>
struct LatentGrid {
  Tensor<T> z;                   // (b,h,w,c) pre-quantization
  Tensor<T> quantized;           // (b,h,w,c) selected rows; differentiable to embeddings
  std::vector<int32_t> indices;  // row-major over (b,h,w)
};

// Nearest row by squared distance, expanded as |z|^2 - 2 z.e + |e|^2 with
// double accumulation. Rows within a whisker of the winner are re-scored with
// the direct difference sum; exact ties resolve to the lowest index.
template <typename T>
std::vector<int32_t> nearest_rows(const Tensor<T>& z, const Codebook<T>& cb) {
  const Shape& zs = z.shape();
  const int64_t c = zs[zs.rank() - 1];
  if (c != cb.dim())
    throw ContractError("quantize: latent dim " + std::to_string(c) + " != codebook dim " + std::to_string(cb.dim()));
  const int64_t rows = z.numel() / c;
  const int64_t k = cb.size();
  const T* pz = z.data();
  const T* pe = cb.embeddings.data();

  std::vector<double> enorm(static_cast<size_t>(k));
  for (int64_t r = 0; r < k; ++r) {
    double s = 0;
    const T* e = pe + r * c;
    for (int64_t j = 0; j < c; ++j) s += static_cast<double>(e[j]) * static_cast<double>(e[j]);
    enorm[static_cast<size_t>(r)] = s;
  }

  std::vector<int32_t> out(static_cast<size_t>(rows));
  std::vector<double> score(static_cast<size_t>(k));
  for (int64_t p = 0; p < rows; ++p) {
    const T* zp = pz + p * c;
    double znorm = 0;
    for (int64_t j = 0; j < c; ++j) znorm += static_cast<double>(zp[j]) * static_cast<double>(zp[j]);
    double best_s = 0;
    for (int64_t r = 0; r < k; ++r) {
      const T* e = pe + r * c;
      double dot = 0;
      for (int64_t j = 0; j < c; ++j) dot += static_cast<double>(zp[j]) * static_cast<double>(e[j]);
      const double s = znorm - 2.0 * dot + enorm[static_cast<size_t>(r)];
      score[static_cast<size_t>(r)] = s;
      if (r == 0 || s < best_s) best_s = s;
    }
    // Cancellation guard: re-score near ties by the direct formula.
    const double tol = 1e-6 * std::max(1.0, std::abs(best_s));
    double best_exact = -1.0;
    int64_t best_r = -1;
    for (int64_t r = 0; r < k; ++r) {
      if (score[static_cast<size_t>(r)] > best_s + tol) continue;
      const T* e = pe + r * c;
      double s = 0;
      for (int64_t j = 0; j < c; ++j) {
        const double d = static_cast<double>(zp[j]) - static_cast<double>(e[j]);
        s += d * d;
      }
      if (best_r < 0 || s < best_exact) {  // strict <: first (lowest) index wins ties
        best_exact = s;
        best_r = r;
      }
    }
    out[static_cast<size_t>(p)] = static_cast<int32_t>(best_r);
  }
  return out;
}

template <typename T>
LatentGrid<T> quantize(const Tensor<T>& z, Codebook<T>& cb, bool count_usage = false) {
  if (z.shape().rank() != 4)
    throw ContractError("quantize: latents must be rank 4 NHWC, got " + z.shape().str());
  LatentGrid<T> grid;
  grid.z = z;
  grid.indices = nearest_rows(z, cb);
  if (count_usage)
    for (int32_t idx : grid.indices) ++cb.usage[static_cast<size_t>(idx)];
  grid.quantized = gather_rows(cb.embeddings, grid.indices, z.shape());
  return grid;
}

// Codebook loss pulls the selected rows toward the (frozen) encoder output;
// the commitment loss pulls the encoder toward its (frozen) assignment,
// weighted by beta.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> vq_losses(const LatentGrid<T>& grid, T beta) {
  auto codebook_loss = mse_loss(grid.quantized, grid.z.detach());
  auto commitment_loss = scale(mse_loss(grid.z, grid.quantized.detach()), beta);
  return {codebook_loss, commitment_loss};
}

template <typename T>
int64_t active_count(const Codebook<T>& cb) {
  int64_t n = 0;
  for (int64_t hits : cb.usage)
    if (hits > 0) ++n;
  return n;
}

// First-batch initialization: rows are drawn from the encoder's own outputs
// (seeded sample without replacement; cycles with a small jitter when the
// batch has fewer positions than the codebook).
template <typename T>
void init_codebook_from_batch(Codebook<T>& cb, const Tensor<T>& z, Rng& rng) {
  const Shape& zs = z.shape();
  const int64_t c = zs[zs.rank() - 1];
  if (c != cb.dim())
    throw ContractError("init_codebook_from_batch: latent dim " + std::to_string(c) + " != codebook dim " + std::to_string(cb.dim()));
  const int64_t rows = z.numel() / c;
  std::vector<int64_t> order(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  const T* pz = z.data();
  T* pe = cb.embeddings.data();
  for (int64_t r = 0; r < cb.size(); ++r) {
    const int64_t src = order[static_cast<size_t>(r % rows)];
    const bool repeat = r >= rows;
    for (int64_t j = 0; j < c; ++j) {
      T v = pz[src * c + j];
      if (repeat) v += static_cast<T>(rng.normal() * 1e-3);
      pe[r * c + j] = v;
    }
  }
}

}  // namespace aren
