#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aren/blocks.hpp"

namespace aren {

// Patch discriminator: six 3x3 conv stages, the first three strided, emitting
// one logit per 8x8 input patch. BatchNorm and the leaky activation sit on
// every stage except the last, which stays raw so the loss sees logits.
struct DiscriminatorSpec {
  static constexpr std::array<int64_t, 6> filters{128, 128, 128, 64, 64, 1};
  static constexpr std::array<int64_t, 6> strides{2, 2, 2, 1, 1, 1};
  static constexpr int64_t kernel = 3;
  static constexpr double leaky_slope = 0.1;
};

// Generator-side weight on the adversarial term, next to recon + VQ losses.
inline constexpr double kDefaultAdversarialWeight = 0.1;

template <typename T>
struct Discriminator {
  std::vector<Conv2dLayer<T>> convs;
  std::vector<BatchNormLayer<T>> bns;  // one per stage except the last

  // (b,h,w,c) -> (b,h/8,w/8,1) raw patch logits.
  Tensor<T> forward(const Tensor<T>& img, bool training) {
    Tensor<T> t = img;
    for (size_t i = 0; i < convs.size(); ++i) {
      t = convs[i](t);
      if (i + 1 < convs.size()) t = leaky_relu(bns[i](t, training), T(DiscriminatorSpec::leaky_slope));
    }
    return t;
  }
};

template <typename T>
Discriminator<T> make_discriminator(ParamStore<T>& store, const std::string& prefix,
                                    int64_t in_channels, Rng& rng) {
  Discriminator<T> d;
  int64_t fin = in_channels;
  for (size_t i = 0; i < DiscriminatorSpec::filters.size(); ++i) {
    const int64_t fout = DiscriminatorSpec::filters[i];
    const std::string n = std::to_string(i + 1);
    d.convs.push_back(make_conv(store, prefix + ".conv" + n, DiscriminatorSpec::kernel,
                                DiscriminatorSpec::kernel, fin, fout,
                                DiscriminatorSpec::strides[i], rng));
    if (i + 1 < DiscriminatorSpec::filters.size())
      d.bns.push_back(make_batch_norm(store, prefix + ".bn" + n, fout));
    fin = fout;
  }
  return d;
}

inline int64_t discriminator_param_count(int64_t in_channels) {
  int64_t n = 0;
  int64_t fin = in_channels;
  for (size_t i = 0; i < DiscriminatorSpec::filters.size(); ++i) {
    const int64_t fout = DiscriminatorSpec::filters[i];
    n += conv_param_count(DiscriminatorSpec::kernel, DiscriminatorSpec::kernel, fin, fout);
    if (i + 1 < DiscriminatorSpec::filters.size()) n += 2 * fout;  // gamma + beta
    fin = fout;
  }
  return n;
}

// Patch BCE objectives. The discriminator drives real logits toward 1 and
// fake toward 0; the generator drives fake toward 1. Detaching the fake
// image before the discriminator pass is the training loop's job.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> gan_losses(const Tensor<T>& real_logits,
                                           const Tensor<T>& fake_logits) {
  if (!(real_logits.shape() == fake_logits.shape()))
    throw ContractError("gan_losses: logit shapes differ, " + real_logits.shape().str() +
                        " vs " + fake_logits.shape().str());
  auto ones_r = Tensor<T>::filled(real_logits.shape(), T(1));
  auto zeros_f = Tensor<T>::zeros(fake_logits.shape());
  auto ones_f = Tensor<T>::filled(fake_logits.shape(), T(1));
  auto d_loss = add(bce_with_logits(real_logits, ones_r), bce_with_logits(fake_logits, zeros_f));
  auto g_loss = bce_with_logits(fake_logits, ones_f);
  return {d_loss, g_loss};
}

}  // namespace aren
