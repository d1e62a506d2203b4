#pragma once

#include <cstdint>
#include <string>

#include "aren/conv.hpp"
#include "aren/ops.hpp"
#include "aren/params.hpp"

namespace aren {

// Residual pixel attention. Both inputs are projected to a common channel
// width by 1x1 convs, flattened to pixel sequences, and mixed by a sigmoid
// affinity matrix:
//
//   xp = g1(x), yp = g2(y)            (b,n,c), n = h*w
//   W  = sigmoid(xp . yp^T)           (b,n,n), entries in (0,1)
//   out = xp + W . yp                 residual on the projected x
//
// The sigmoid acts per entry; rows are not normalized and there is no
// 1/sqrt(c) temperature, so W is an affinity map rather than a distribution.
template <typename T>
struct AttentionParams {
  Tensor<T> g1_w, g1_b;  // x projection (1,1,f_x,c), (c)
  Tensor<T> g2_w, g2_b;  // y projection (1,1,f_y,c), (c)

  int64_t out_channels() const { return g1_w.shape()[3]; }
};

template <typename T>
AttentionParams<T> make_attention(ParamStore<T>& store, const std::string& prefix,
                                  int64_t f_x, int64_t f_y, int64_t c, Rng& rng) {
  AttentionParams<T> p;
  p.g1_w = store.add(prefix + ".g1.w", he_normal<T>(Shape{1, 1, f_x, c}, f_x, rng));
  p.g1_b = store.add(prefix + ".g1.b", Tensor<T>::zeros(Shape{c}));
  p.g2_w = store.add(prefix + ".g2.w", he_normal<T>(Shape{1, 1, f_y, c}, f_y, rng));
  p.g2_b = store.add(prefix + ".g2.b", Tensor<T>::zeros(Shape{c}));
  return p;
}

namespace detail {

template <typename T>
void attention_check(const Tensor<T>& x, const Tensor<T>& y, const AttentionParams<T>& p,
                     int64_t max_pixels) {
  if (x.shape().rank() != 4 || y.shape().rank() != 4)
    throw ContractError("pixel_attention: inputs must be rank 4 NHWC, got " + x.shape().str() + " and " + y.shape().str());
  for (int i = 0; i < 3; ++i)
    if (x.shape()[i] != y.shape()[i])
      throw ContractError("pixel_attention: spatial dims differ " + x.shape().str() + " vs " + y.shape().str());
  if (x.shape()[3] != p.g1_w.shape()[2])
    throw ContractError("pixel_attention: x has " + std::to_string(x.shape()[3]) + " channels, projection expects " + std::to_string(p.g1_w.shape()[2]));
  if (y.shape()[3] != p.g2_w.shape()[2])
    throw ContractError("pixel_attention: y has " + std::to_string(y.shape()[3]) + " channels, projection expects " + std::to_string(p.g2_w.shape()[2]));
  const int64_t n = x.shape()[1] * x.shape()[2];
  if (n > max_pixels)
    throw ResourceError("pixel_attention: " + std::to_string(n) + " pixels would build a " +
                        std::to_string(n) + "x" + std::to_string(n) +
                        " affinity matrix; limit is " + std::to_string(max_pixels) +
                        " (raise attention_max_pixels to override)");
}

}  // namespace detail

// The affinity matrix alone, mainly for inspection and tests.
template <typename T>
Tensor<T> attention_matrix(const Tensor<T>& x, const Tensor<T>& y, const AttentionParams<T>& p,
                           int64_t max_pixels = 4096) {
  detail::attention_check(x, y, p, max_pixels);
  const int64_t b = x.shape()[0], n = x.shape()[1] * x.shape()[2], c = p.out_channels();
  auto xp = reshape(conv2d(x, p.g1_w, p.g1_b), Shape{b, n, c});
  auto yp = reshape(conv2d(y, p.g2_w, p.g2_b), Shape{b, n, c});
  return sigmoid(bmm_nt(xp, yp));
}

template <typename T>
Tensor<T> pixel_attention(const Tensor<T>& x, const Tensor<T>& y, const AttentionParams<T>& p,
                          int64_t max_pixels = 4096) {
  detail::attention_check(x, y, p, max_pixels);
  const int64_t b = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = p.out_channels();
  const int64_t n = h * w;
  auto xp = reshape(conv2d(x, p.g1_w, p.g1_b), Shape{b, n, c});
  auto yp = reshape(conv2d(y, p.g2_w, p.g2_b), Shape{b, n, c});
  auto aff = sigmoid(bmm_nt(xp, yp));
  auto out = add(xp, bmm(aff, yp));
  return reshape(out, Shape{b, h, w, c});
}

}  // namespace aren
