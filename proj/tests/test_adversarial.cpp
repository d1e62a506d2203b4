#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "aren/adversarial.hpp"
#include "aren/grad_check.hpp"

using namespace aren;

namespace {

template <typename T>
Tensor<T> random_image(const Shape& s, uint64_t seed) {
  Rng rng(seed);
  auto t = Tensor<T>::zeros(s);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.uniform(0, 1));
  return t;
}

int count_ops(const std::vector<std::string>& ops, const std::string& name) {
  return static_cast<int>(std::count(ops.begin(), ops.end(), name));
}

}  // namespace

TEST_CASE("trainable parameter count is the exact architecture constant") {
  ParamStore<float> store;
  Rng rng(3);
  make_discriminator(store, "disc", 3, rng);
  CHECK(store.count(true) == 411073);
  CHECK(discriminator_param_count(3) == 411073);
  // Affine BatchNorm terms on five stages; everything else is conv kernels.
  const int64_t bn_affine = 2 * (128 + 128 + 128 + 64 + 64);
  CHECK(bn_affine == 1024);
  CHECK(store.count(true) - bn_affine == 410049);
  // Running statistics ride along untrained.
  CHECK(store.count(false) - store.count(true) == bn_affine);
}

TEST_CASE("fully convolutional: patch grid scales with input, parameters fixed") {
  ParamStore<float> store;
  Rng rng(5);
  auto disc = make_discriminator(store, "disc", 3, rng);
  const int64_t params_before = store.count(true);

  auto a = disc.forward(random_image<float>(Shape{1, 32, 32, 3}, 1), false);
  CHECK(a.shape() == Shape{1, 4, 4, 1});
  auto b = disc.forward(random_image<float>(Shape{2, 64, 64, 3}, 2), false);
  CHECK(b.shape() == Shape{2, 8, 8, 1});
  CHECK(store.count(true) == params_before);

  for (int64_t i = 0; i < b.numel(); ++i) CHECK(std::isfinite(b.data()[i]));
}

TEST_CASE("logits stay raw: six convs, activations and norms on five") {
  ParamStore<float> store;
  Rng rng(7);
  auto disc = make_discriminator(store, "disc", 3, rng);
  auto logits = disc.forward(random_image<float>(Shape{1, 32, 32, 3}, 3), true);
  auto ops = logits.graph_ops();
  CHECK(count_ops(ops, "conv2d") == 6);
  CHECK(count_ops(ops, "batch_norm") == 5);
  CHECK(count_ops(ops, "leaky_relu") == 5);
  CHECK(count_ops(ops, "sigmoid") == 0);
}

TEST_CASE("loss values at the two closed-form points") {
  auto real = Tensor<double>::zeros(Shape{1, 2, 2, 1});
  auto fake = Tensor<double>::zeros(Shape{1, 2, 2, 1});
  auto [d0, g0] = gan_losses(real, fake);
  CHECK(d0.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  CHECK(g0.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // Perfect-discriminator limit: real saturated positive, fake negative.
  auto real_hi = Tensor<double>::filled(Shape{1, 2, 2, 1}, 40.0);
  auto fake_lo = Tensor<double>::filled(Shape{1, 2, 2, 1}, -40.0);
  auto [d1, g1] = gan_losses(real_hi, fake_lo);
  CHECK(d1.item() < 1e-12);
  CHECK(g1.item() > 39.0);  // generator pays for the saturated fake
}

TEST_CASE("both losses are nonnegative for arbitrary finite logits") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto real = Tensor<double>::zeros(Shape{2, 3, 3, 1});
    auto fake = Tensor<double>::zeros(Shape{2, 3, 3, 1});
    for (int64_t i = 0; i < real.numel(); ++i) {
      real.data()[i] = rng.uniform(-50, 50);
      fake.data()[i] = rng.uniform(-50, 50);
    }
    auto [d, g] = gan_losses(real, fake);
    CHECK(d.item() >= 0.0);
    CHECK(g.item() >= 0.0);
  }
  auto real = Tensor<double>::zeros(Shape{1, 2, 2, 1});
  auto fake = Tensor<double>::zeros(Shape{1, 4, 4, 1});
  CHECK_THROWS_AS(gan_losses(real, fake), ContractError);
}

TEST_CASE("loss gradients match finite differences on a 2x2 patch grid") {
  auto real = random_image<double>(Shape{1, 2, 2, 1}, 21);
  auto fake = random_image<double>(Shape{1, 2, 2, 1}, 22);
  for (int64_t i = 0; i < real.numel(); ++i) {
    real.data()[i] = real.data()[i] * 6.0 - 3.0;
    fake.data()[i] = fake.data()[i] * 6.0 - 3.0;
  }

  auto d_of = [&] { return gan_losses(real, fake).first; };
  auto g_of = [&] { return gan_losses(real, fake).second; };
  CHECK(grad_check<double>(d_of, real, 1e-6).max_rel_err < 1e-6);
  CHECK(grad_check<double>(d_of, fake, 1e-6).max_rel_err < 1e-6);
  CHECK(grad_check<double>(g_of, fake, 1e-6).max_rel_err < 1e-6);

  // Through the discriminator itself: d_loss gradient w.r.t. the fake image,
  // the path the generator would see if it were not detached.
  // Batch of two: the bottom stages run at 1x1 spatial, and per-channel batch
  // statistics over a single value would zero the whole upstream gradient.
  ParamStore<double> store;
  Rng rng(23);
  auto disc = make_discriminator(store, "disc", 3, rng);
  auto real_img = random_image<double>(Shape{2, 8, 8, 3}, 24);
  auto fake_img = random_image<double>(Shape{2, 8, 8, 3}, 25);
  auto through = [&] {
    auto rl = disc.forward(real_img, true);
    auto fl = disc.forward(fake_img, true);
    return gan_losses(rl, fl).second;
  };
  CHECK(grad_check<double>(through, fake_img, 1e-6).max_rel_err < 1e-4);
}
