#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aren/tensor.hpp"

namespace aren {

// Quality metrics over [0,1] images, accumulated in double. These read tensor
// data directly; nothing here touches the tape.

inline constexpr double kPsnrCap = 99.0;  // reported for bit-identical inputs

struct MetricReport {
  double mae_over_sigma = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  int64_t n_images = 0;
  std::string task;
};

namespace detail {
inline void check_same_shape(const Shape& a, const Shape& b, const char* where) {
  if (!(a == b))
    throw ContractError(std::string(where) + ": shape mismatch, " + a.str() + " vs " + b.str());
}
}  // namespace detail

// Mean absolute error over every pixel and channel, divided by the recorded
// pixel std of the training data.
template <typename T>
double mae_over_sigma(const Tensor<T>& recon, const Tensor<T>& ref, double sigma) {
  detail::check_same_shape(recon.shape(), ref.shape(), "mae_over_sigma");
  if (sigma <= 0.0) throw ContractError("mae_over_sigma: sigma must be > 0");
  double sum = 0.0;
  const int64_t n = recon.numel();
  for (int64_t i = 0; i < n; ++i)
    sum += std::abs(static_cast<double>(recon.data()[i]) - static_cast<double>(ref.data()[i]));
  return sum / static_cast<double>(n) / sigma;
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "mse");
  double sum = 0.0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(n);
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val = 1.0) {
  if (max_val <= 0.0) throw ContractError("psnr: max_val must be > 0");
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m));
}

// Luminance plane of an image batch: (b,h,w,3) -> (b,h,w,1) with the
// broadcast-standard weights; single-channel input passes through.
template <typename T>
Tensor<T> to_luma(const Tensor<T>& img) {
  if (img.shape().rank() != 4) throw ContractError("to_luma: expected rank-4 NHWC, got " + img.shape().str());
  const int64_t c = img.shape()[3];
  if (c == 1) return Tensor<T>::from_data(img.shape(), img.vec());
  if (c != 3) throw ContractError("to_luma: expected 1 or 3 channels, got " + std::to_string(c));
  const int64_t pixels = img.numel() / 3;
  auto out = Tensor<T>::zeros(Shape{img.shape()[0], img.shape()[1], img.shape()[2], 1});
  for (int64_t p = 0; p < pixels; ++p) {
    const double r = img.data()[p * 3 + 0], g = img.data()[p * 3 + 1], bch = img.data()[p * 3 + 2];
    out.data()[p] = static_cast<T>(0.299 * r + 0.587 * g + 0.114 * bch);
  }
  return out;
}

namespace detail {
// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> k(121);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        const double dy = i - 5, dx = j - 5;
        k[static_cast<size_t>(i * 11 + j)] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
        sum += k[static_cast<size_t>(i * 11 + j)];
      }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}
}  // namespace detail

// Mean local SSIM on the luminance plane: 11x11 Gaussian window (sigma 1.5),
// K1=0.01, K2=0.03, L=1, averaged over windows that fit entirely inside the
// image, then over the batch.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a.shape(), b.shape(), "ssim");
  auto la = to_luma(a);
  auto lb = to_luma(b);
  const int64_t bn = la.shape()[0], h = la.shape()[1], w = la.shape()[2];
  if (h < 11 || w < 11)
    throw ContractError("ssim: images must be at least 11x11, got " + a.shape().str());
  const auto& win = detail::ssim_window();
  constexpr double c1 = 0.01 * 0.01;  // (K1*L)^2
  constexpr double c2 = 0.03 * 0.03;  // (K2*L)^2

  double batch_sum = 0.0;
  for (int64_t bi = 0; bi < bn; ++bi) {
    const T* pa = la.data() + bi * h * w;
    const T* pb = lb.data() + bi * h * w;
    double img_sum = 0.0;
    int64_t windows = 0;
    for (int64_t y = 0; y + 11 <= h; ++y)
      for (int64_t x = 0; x + 11 <= w; ++x) {
        double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
        for (int64_t i = 0; i < 11; ++i)
          for (int64_t j = 0; j < 11; ++j) {
            const double wv = win[static_cast<size_t>(i * 11 + j)];
            const double va = pa[(y + i) * w + (x + j)];
            const double vb = pb[(y + i) * w + (x + j)];
            ma += wv * va;
            mb += wv * vb;
            maa += wv * va * va;
            mbb += wv * vb * vb;
            mab += wv * va * vb;
          }
        const double var_a = maa - ma * ma;
        const double var_b = mbb - mb * mb;
        const double cov = mab - ma * mb;
        img_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++windows;
      }
    batch_sum += img_sum / static_cast<double>(windows);
  }
  return batch_sum / static_cast<double>(bn);
}

}  // namespace aren
