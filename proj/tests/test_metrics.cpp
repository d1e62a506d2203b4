#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "aren/metrics.hpp"
#include "aren/rng.hpp"

using namespace aren;

namespace {

Tensor<float> random_image(const Shape& s, uint64_t seed) {
  Rng rng(seed);
  auto t = Tensor<float>::zeros(s);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.uniform(0, 1));
  return t;
}

// Oracle: textbook PSNR straight from its definition.
double psnr_reference(const Tensor<float>& a, const Tensor<float>& b, double max_val) {
  long double acc = 0.0L;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const long double d = (long double)a.data()[i] - (long double)b.data()[i];
    acc += d * d;
  }
  const double m = static_cast<double>(acc / a.numel());
  return 10.0 * std::log10(max_val * max_val / m);
}

// Oracle: mean absolute difference with long-double accumulation.
double mae_reference(const Tensor<float>& a, const Tensor<float>& b) {
  long double acc = 0.0L;
  for (int64_t i = 0; i < a.numel(); ++i)
    acc += std::abs((long double)a.data()[i] - (long double)b.data()[i]);
  return static_cast<double>(acc / a.numel());
}

// Oracle: canonical SSIM evaluated window by window on the luminance plane,
// with its own 2-D Gaussian window construction.
double ssim_reference(const Tensor<float>& a, const Tensor<float>& b) {
  const int64_t bn = a.shape()[0], h = a.shape()[1], w = a.shape()[2], c = a.shape()[3];
  std::vector<double> la(static_cast<size_t>(bn * h * w)), lb(la.size());
  for (int64_t p = 0; p < bn * h * w; ++p) {
    if (c == 3) {
      la[static_cast<size_t>(p)] =
          0.299 * a.data()[p * 3] + 0.587 * a.data()[p * 3 + 1] + 0.114 * a.data()[p * 3 + 2];
      lb[static_cast<size_t>(p)] =
          0.299 * b.data()[p * 3] + 0.587 * b.data()[p * 3 + 1] + 0.114 * b.data()[p * 3 + 2];
    } else {
      la[static_cast<size_t>(p)] = a.data()[p];
      lb[static_cast<size_t>(p)] = b.data()[p];
    }
  }
  double window[11][11];
  double wsum = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      window[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
      wsum += window[i][j];
    }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int64_t bi = 0; bi < bn; ++bi) {
    double s = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + 11 <= h; ++y)
      for (int64_t x = 0; x + 11 <= w; ++x) {
        double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wt = window[i][j] / wsum;
            ma += wt * la[static_cast<size_t>((bi * h + y + i) * w + x + j)];
            mb += wt * lb[static_cast<size_t>((bi * h + y + i) * w + x + j)];
          }
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double wt = window[i][j] / wsum;
            const double da = la[static_cast<size_t>((bi * h + y + i) * w + x + j)] - ma;
            const double db = lb[static_cast<size_t>((bi * h + y + i) * w + x + j)] - mb;
            va += wt * da * da;
            vb += wt * db * db;
            cov += wt * da * db;
          }
        s += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += s / count;
  }
  return total / bn;
}

}  // namespace

TEST_CASE("mae over sigma: closed-form points and the summation oracle") {
  auto ref = random_image(Shape{1, 16, 16, 3}, 1);
  CHECK(mae_over_sigma(ref, ref, 0.31) == 0.0);

  // Constant offset 0.031 at sigma 0.31 reads exactly 0.1.
  auto shifted = Tensor<float>::zeros(ref.shape());
  for (int64_t i = 0; i < ref.numel(); ++i) shifted.data()[i] = ref.data()[i] + 0.031f;
  CHECK(mae_over_sigma(shifted, ref, 0.31) == doctest::Approx(0.1).epsilon(1e-5));

  for (uint64_t s = 0; s < 10; ++s) {
    auto a = random_image(Shape{2, 24, 24, 3}, 100 + s);
    auto b = random_image(Shape{2, 24, 24, 3}, 200 + s);
    CHECK(std::abs(mae_over_sigma(a, b, 1.0) - mae_reference(a, b)) < 1e-7);
  }
  CHECK_THROWS_AS(mae_over_sigma(ref, ref, 0.0), ContractError);
  CHECK_THROWS_AS(mae_over_sigma(ref, random_image(Shape{1, 8, 8, 3}, 2), 1.0), ContractError);
}

TEST_CASE("psnr: sentinel, closed form, oracle, monotonicity, symmetry") {
  auto img = random_image(Shape{1, 32, 32, 3}, 3);
  CHECK(psnr(img, img) == 99.0);

  // Uniform |difference| 0.1 -> MSE 0.01 -> 20 dB.
  auto off = Tensor<float>::zeros(img.shape());
  for (int64_t i = 0; i < img.numel(); ++i) off.data()[i] = img.data()[i] - 0.1f;
  CHECK(psnr(off, img) == doctest::Approx(20.0).epsilon(1e-6));

  for (uint64_t s = 0; s < 10; ++s) {
    auto a = random_image(Shape{1, 20, 20, 3}, 300 + s);
    auto b = random_image(Shape{1, 20, 20, 3}, 400 + s);
    CHECK(psnr(a, b) == doctest::Approx(psnr_reference(a, b, 1.0)).epsilon(1e-9));
    CHECK(psnr(a, b) == psnr(b, a));
  }

  // Strictly decreasing as the error grows.
  double prev = 1e9;
  for (float eps : {0.01f, 0.02f, 0.05f, 0.1f, 0.2f}) {
    auto worse = Tensor<float>::zeros(img.shape());
    for (int64_t i = 0; i < img.numel(); ++i) worse.data()[i] = img.data()[i] + eps;
    const double v = psnr(worse, img);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(psnr(img, img, 0.0), ContractError);
}

TEST_CASE("ssim: exact self-similarity and the zero-variance closed form") {
  auto img = random_image(Shape{2, 16, 16, 3}, 5);
  CHECK(ssim(img, img) == 1.0);

  const double p = 0.3, q = 0.6, c1 = 1e-4;
  auto a = Tensor<float>::filled(Shape{1, 12, 12, 1}, static_cast<float>(p));
  auto b = Tensor<float>::filled(Shape{1, 12, 12, 1}, static_cast<float>(q));
  const double expect = (2 * p * q + c1) / (p * p + q * q + c1);
  CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("ssim agrees with the per-window oracle on random pairs") {
  for (uint64_t s = 0; s < 5; ++s) {
    auto a = random_image(Shape{1, 18, 22, 3}, 500 + s);
    auto b = random_image(Shape{1, 18, 22, 3}, 600 + s);
    CHECK(std::abs(ssim(a, b) - ssim_reference(a, b)) < 1e-6);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(ssim(a, b) >= -1.0);
    CHECK(ssim(a, b) <= 1.0);
  }
  auto tiny = random_image(Shape{1, 8, 8, 3}, 7);
  CHECK_THROWS_AS(ssim(tiny, tiny), ContractError);
}

TEST_CASE("luminance conversion uses the broadcast weights") {
  auto img = Tensor<float>::zeros(Shape{1, 1, 3, 3});
  float vals[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // pure R, G, B pixels
  for (int i = 0; i < 9; ++i) img.data()[i] = vals[i];
  auto luma = to_luma(img);
  REQUIRE(luma.shape() == Shape{1, 1, 3, 1});
  CHECK(luma.data()[0] == doctest::Approx(0.299).epsilon(1e-6));
  CHECK(luma.data()[1] == doctest::Approx(0.587).epsilon(1e-6));
  CHECK(luma.data()[2] == doctest::Approx(0.114).epsilon(1e-6));
}
