#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aren/conv.hpp"
#include "aren/ops.hpp"
#include "aren/params.hpp"

namespace aren {

// Residual building blocks. Both follow BN -> LeakyReLU(alpha) -> Conv3x3;
// the identity block adds its raw input back, the strided block adds a
// strided 3x3 shortcut conv of the raw input instead.

struct BlockConfig {
  int64_t filters = 0;
  double alpha = 0.1;
  int64_t stride = 1;  // 1 for identity blocks, 2 for downsampling blocks
  int64_t kernel = 3;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int64_t stride = 1;
  Padding pad = Padding::Same;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
  int64_t param_count() const { return w.numel() + b.numel(); }
};

template <typename T>
Conv2dLayer<T> make_conv(ParamStore<T>& store, const std::string& prefix, int64_t kh, int64_t kw,
                         int64_t fin, int64_t fout, int64_t stride, Rng& rng) {
  Conv2dLayer<T> layer;
  layer.w = store.add(prefix + ".w", he_normal<T>(Shape{kh, kw, fin, fout}, kh * kw * fin, rng));
  layer.b = store.add(prefix + ".b", Tensor<T>::zeros(Shape{fout}));
  layer.stride = stride;
  return layer;
}

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
};

template <typename T>
BatchNormLayer<T> make_batch_norm(ParamStore<T>& store, const std::string& prefix, int64_t f) {
  BatchNormLayer<T> layer;
  layer.gamma = store.add(prefix + ".gamma", Tensor<T>::filled(Shape{f}, T(1)));
  layer.beta = store.add(prefix + ".beta", Tensor<T>::zeros(Shape{f}));
  layer.running_mean = store.add(prefix + ".running_mean", Tensor<T>::zeros(Shape{f}), /*trainable=*/false);
  layer.running_var = store.add(prefix + ".running_var", Tensor<T>::filled(Shape{f}, T(1)), /*trainable=*/false);
  return layer;
}

// Shape-preserving block: x + Conv(LeakyReLU(BN(x))).
template <typename T>
struct IdResBlock {
  BatchNormLayer<T> bn;
  Conv2dLayer<T> conv;
  T alpha = T(0.1);

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    if (x.shape()[3] != conv.w.shape()[2])
      throw ContractError("id_resblock: filters " + std::to_string(conv.w.shape()[2]) +
                          " != input channels " + std::to_string(x.shape()[3]));
    return add(x, conv(leaky_relu(bn(x, training), alpha)));
  }
};

template <typename T>
IdResBlock<T> make_id_res(ParamStore<T>& store, const std::string& prefix, const BlockConfig& cfg, Rng& rng) {
  if (cfg.stride != 1) throw ContractError("id_resblock: stride must be 1");
  IdResBlock<T> blk;
  blk.bn = make_batch_norm(store, prefix + ".bn", cfg.filters);
  blk.conv = make_conv(store, prefix + ".conv", cfg.kernel, cfg.kernel, cfg.filters, cfg.filters, 1, rng);
  blk.alpha = static_cast<T>(cfg.alpha);
  return blk;
}

// Downsampling block: Conv_s2(LeakyReLU(BN(x))) + Conv_s2(x).
// The shortcut conv sees the raw input, so channel changes are free.
template <typename T>
struct ConvResBlock {
  BatchNormLayer<T> bn;
  Conv2dLayer<T> conv, shortcut;
  T alpha = T(0.1);

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return add(conv(leaky_relu(bn(x, training), alpha)), shortcut(x));
  }
};

template <typename T>
ConvResBlock<T> make_conv_res(ParamStore<T>& store, const std::string& prefix, int64_t fin,
                              const BlockConfig& cfg, Rng& rng) {
  if (cfg.stride != 2) throw ContractError("conv_resblock: stride must be 2");
  ConvResBlock<T> blk;
  blk.bn = make_batch_norm(store, prefix + ".bn", fin);
  blk.conv = make_conv(store, prefix + ".conv", cfg.kernel, cfg.kernel, fin, cfg.filters, 2, rng);
  blk.shortcut = make_conv(store, prefix + ".shortcut", cfg.kernel, cfg.kernel, fin, cfg.filters, 2, rng);
  blk.alpha = static_cast<T>(cfg.alpha);
  return blk;
}

// Shared stem: two stride-2 residual blocks, one identity block, then a 1x1
// projection to the latent width. Downsamples x4 at any input resolution.
template <typename T>
struct BaseEncoder {
  ConvResBlock<T> down1, down2;
  IdResBlock<T> res;
  Conv2dLayer<T> to_latent;

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    if (x.shape()[1] % 4 != 0 || x.shape()[2] % 4 != 0)
      throw ContractError("base_encoder: input " + x.shape().str() + " not divisible by 4");
    return to_latent(res.forward(down2.forward(down1.forward(x, training), training), training));
  }
};

template <typename T>
BaseEncoder<T> make_base_encoder(ParamStore<T>& store, const std::string& prefix, int64_t in_channels,
                                 int64_t width, int64_t latent_dim, Rng& rng) {
  BaseEncoder<T> enc;
  BlockConfig down{width, 0.1, 2, 3};
  BlockConfig keep{width, 0.1, 1, 3};
  enc.down1 = make_conv_res(store, prefix + ".block1", in_channels, down, rng);
  enc.down2 = make_conv_res(store, prefix + ".block2", width, down, rng);
  enc.res = make_id_res(store, prefix + ".block3", keep, rng);
  enc.to_latent = make_conv(store, prefix + ".proj", 1, 1, width, latent_dim, 1, rng);
  return enc;
}

// Closed-form parameter counts, used by tests as an independent oracle and
// by inspect for per-module summaries.
inline int64_t conv_param_count(int64_t kh, int64_t kw, int64_t fin, int64_t fout) {
  return kh * kw * fin * fout + fout;
}
inline int64_t bn_param_count() { return 2; }  // per channel: gamma + beta

inline int64_t id_res_param_count(int64_t filters, int64_t kernel = 3) {
  return conv_param_count(kernel, kernel, filters, filters) + 2 * filters;
}
inline int64_t conv_res_param_count(int64_t fin, int64_t filters, int64_t kernel = 3) {
  return 2 * conv_param_count(kernel, kernel, fin, filters) + 2 * fin;
}
inline int64_t base_encoder_param_count(int64_t in_channels, int64_t width, int64_t latent_dim) {
  return conv_res_param_count(in_channels, width) + conv_res_param_count(width, width) +
         id_res_param_count(width) + conv_param_count(1, 1, width, latent_dim);
}

}  // namespace aren
