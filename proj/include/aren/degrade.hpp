#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "aren/rng.hpp"
#include "aren/tensor.hpp"

namespace aren {

// Corruption pipelines for the restoration tasks. These are data transforms:
// they run outside the tape, deterministically for a given (spec, seed), with
// per-image streams derived as mix(seed, image_index) so batches can be
// processed in any order or in parallel without changing results.

enum class DegradeKind { Mask, Noise, Blur };

struct DegradeSpec {
  DegradeKind kind = DegradeKind::Mask;
  double mask_fraction = 0.5;
  double noise_sigma_frac = 0.3;
  double blur_sigma_x = 1.0;
  double blur_sigma_y = 5.0;
  int64_t blur_kx = 3;
  int64_t blur_ky = 15;
  uint64_t seed = 0;

  void validate() const {
    if (mask_fraction < 0.0 || mask_fraction > 1.0)
      throw ContractError("degrade: mask_fraction must be in [0,1]");
    if (noise_sigma_frac < 0.0 || noise_sigma_frac > 1.0)
      throw ContractError("degrade: noise_sigma_frac must be in [0,1]");
    if (blur_kx % 2 == 0 || blur_ky % 2 == 0)
      throw ContractError("degrade: blur kernel sizes must be odd");
    if (blur_kx < 1 || blur_ky < 1) throw ContractError("degrade: blur kernel sizes must be >= 1");
    if (blur_sigma_x <= 0.0 || blur_sigma_y <= 0.0)
      throw ContractError("degrade: blur sigmas must be > 0");
  }
};

// Image range is fixed after loading; "30% of the dynamic range" means 0.3.
inline constexpr double kRangeMin = 0.0;
inline constexpr double kRangeMax = 1.0;

namespace detail {
inline void check_image4(const Shape& s, const char* where) {
  if (s.rank() != 4) throw ContractError(std::string(where) + ": expected rank-4 NHWC input, got " + s.str());
}
}  // namespace detail

// Exactly floor(fraction * h * w) positions per image, chosen by seeded
// shuffle without replacement, zeroed across all channels. The mask plane is
// 1 at kept pixels and 0 at masked ones.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> blind_mask(const Tensor<T>& img, double fraction, uint64_t seed) {
  detail::check_image4(img.shape(), "blind_mask");
  if (fraction < 0.0 || fraction > 1.0) throw ContractError("blind_mask: fraction must be in [0,1]");
  const int64_t b = img.shape()[0], h = img.shape()[1], w = img.shape()[2], c = img.shape()[3];
  const int64_t pixels = h * w;
  const int64_t n_masked = static_cast<int64_t>(std::floor(fraction * static_cast<double>(pixels)));

  auto masked = Tensor<T>::from_data(img.shape(), img.vec());
  auto mask = Tensor<T>::filled(Shape{b, h, w, 1}, T(1));
  std::vector<int64_t> order(static_cast<size_t>(pixels));
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t i = 0; i < pixels; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(bi)));
    rng.shuffle(order);
    T* pm = masked.data() + bi * pixels * c;
    T* pk = mask.data() + bi * pixels;
    for (int64_t i = 0; i < n_masked; ++i) {
      const int64_t pos = order[static_cast<size_t>(i)];
      for (int64_t j = 0; j < c; ++j) pm[pos * c + j] = T(0);
      pk[pos] = T(0);
    }
  }
  return {masked, mask};
}

// The additive noise itself, pre-clamp, std = sigma in absolute units.
// Row-major draws per image from the image's derived stream.
template <typename T>
Tensor<T> gaussian_noise_field(const Shape& s, double sigma, uint64_t seed) {
  detail::check_image4(s, "gaussian_noise_field");
  auto field = Tensor<T>::zeros(s);
  const int64_t b = s[0], per_image = s.numel() / s[0];
  for (int64_t bi = 0; bi < b; ++bi) {
    Rng rng(Rng::mix(seed, static_cast<uint64_t>(bi)));
    T* p = field.data() + bi * per_image;
    for (int64_t i = 0; i < per_image; ++i) p[i] = static_cast<T>(rng.normal() * sigma);
  }
  return field;
}

template <typename T>
Tensor<T> gaussian_noise(const Tensor<T>& img, double sigma_frac, uint64_t seed) {
  detail::check_image4(img.shape(), "gaussian_noise");
  if (sigma_frac < 0.0) throw ContractError("gaussian_noise: sigma_frac must be >= 0");
  if (sigma_frac == 0.0) return Tensor<T>::from_data(img.shape(), img.vec());
  const double sigma = sigma_frac * (kRangeMax - kRangeMin);
  auto field = gaussian_noise_field<T>(img.shape(), sigma, seed);
  auto out = Tensor<T>::zeros(img.shape());
  const int64_t n = img.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(img.data()[i]) + static_cast<double>(field.data()[i]);
    out.data()[i] = static_cast<T>(std::clamp(v, kRangeMin, kRangeMax));
  }
  return out;
}

// Normalized 1-D Gaussian taps, center-anchored. Size must be odd.
inline std::vector<double> gaussian_kernel1d(int64_t size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ContractError("gaussian_kernel1d: size must be odd and >= 1");
  if (sigma <= 0.0) throw ContractError("gaussian_kernel1d: sigma must be > 0");
  std::vector<double> k(static_cast<size_t>(size));
  const int64_t c = size / 2;
  double sum = 0.0;
  for (int64_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i - c);
    k[static_cast<size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace detail {
// Reflection with edge repeat: -1 -> 0, n -> n-1. Valid for any overhang.
inline int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}
}  // namespace detail

// Separable Gaussian: kx taps with sigma sx along width, ky taps with sigma
// sy along height, reflect padding, accumulation in double.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, double sx, double sy, int64_t kx, int64_t ky) {
  detail::check_image4(img.shape(), "gaussian_blur");
  const auto kh = gaussian_kernel1d(kx, sx);
  const auto kv = gaussian_kernel1d(ky, sy);
  const int64_t b = img.shape()[0], h = img.shape()[1], w = img.shape()[2], c = img.shape()[3];

  auto tmp = Tensor<T>::zeros(img.shape());
  const int64_t cx = kx / 2;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int64_t t = 0; t < kx; ++t) {
            const int64_t sxi = detail::reflect_index(x + t - cx, w);
            acc += kh[static_cast<size_t>(t)] *
                   static_cast<double>(img.data()[((bi * h + y) * w + sxi) * c + ch]);
          }
          tmp.data()[((bi * h + y) * w + x) * c + ch] = static_cast<T>(acc);
        }

  auto out = Tensor<T>::zeros(img.shape());
  const int64_t cy = ky / 2;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        for (int64_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int64_t t = 0; t < ky; ++t) {
            const int64_t syi = detail::reflect_index(y + t - cy, h);
            acc += kv[static_cast<size_t>(t)] *
                   static_cast<double>(tmp.data()[((bi * h + syi) * w + x) * c + ch]);
          }
          out.data()[((bi * h + y) * w + x) * c + ch] = static_cast<T>(acc);
        }
  return out;
}

// One corrupted view of a batch. The mask plane is present only for masking;
// model input wiring (4th channel) happens at the training layer.
template <typename T>
struct Degraded {
  Tensor<T> img;
  std::optional<Tensor<T>> mask;
};

template <typename T>
Degraded<T> apply_degrade(const DegradeSpec& spec, const Tensor<T>& img) {
  spec.validate();
  switch (spec.kind) {
    case DegradeKind::Mask: {
      auto [masked, mask] = blind_mask(img, spec.mask_fraction, spec.seed);
      return {masked, mask};
    }
    case DegradeKind::Noise:
      return {gaussian_noise(img, spec.noise_sigma_frac, spec.seed), std::nullopt};
    case DegradeKind::Blur:
      return {gaussian_blur(img, spec.blur_sigma_x, spec.blur_sigma_y, spec.blur_kx, spec.blur_ky),
              std::nullopt};
  }
  throw ContractError("degrade: unknown kind");
}

}  // namespace aren
