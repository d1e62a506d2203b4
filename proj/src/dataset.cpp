#include "aren/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "aren/errors.hpp"
#include "aren/image.hpp"
#include "aren/rng.hpp"

namespace aren {

Dataset load_dataset(const std::string& dir, int64_t resolution, double split, uint64_t seed) {
  if (resolution < 1) throw ContractError("load_dataset: resolution must be >= 1");
  if (split < 0.0 || split > 1.0) throw ContractError("load_dataset: split must be in [0,1]");
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("load_dataset: not a directory: " + dir);

  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());

  Dataset ds;
  ds.resolution = resolution;
  ds.split_ratio = split;
  ds.seed = seed;

  std::vector<Tensor<float>> images;
  std::vector<std::string> kept_paths;
  for (const auto& p : paths) {
    try {
      auto img = center_crop_resize(load_image(p), resolution);
      images.push_back(tensor_from_image(img, 3));
      kept_paths.push_back(p);
    } catch (const IoError& e) {
      ++ds.skipped;
      std::fprintf(stderr, "warning: skipping %s (%s)\n", p.c_str(), e.what());
    }
  }
  if (images.empty()) throw IoError("load_dataset: no usable images in " + dir);

  const int64_t n = static_cast<int64_t>(images.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(Rng::mix(seed, kSplitStream));
  rng.shuffle(order);
  const int64_t n_train = static_cast<int64_t>(std::llround(split * static_cast<double>(n)));

  for (int64_t i = 0; i < n; ++i) {
    const int64_t idx = order[static_cast<size_t>(i)];
    if (i < n_train) {
      ds.train.push_back(images[static_cast<size_t>(idx)]);
      ds.train_paths.push_back(kept_paths[static_cast<size_t>(idx)]);
    } else {
      ds.test.push_back(images[static_cast<size_t>(idx)]);
      ds.test_paths.push_back(kept_paths[static_cast<size_t>(idx)]);
    }
  }

  // Sample std over every training pixel, the MAE/sigma denominator.
  if (!ds.train.empty()) {
    double sum = 0.0;
    int64_t count = 0;
    for (const auto& t : ds.train) {
      for (int64_t i = 0; i < t.numel(); ++i) sum += t.data()[i];
      count += t.numel();
    }
    const double mean = sum / static_cast<double>(count);
    double var = 0.0;
    for (const auto& t : ds.train)
      for (int64_t i = 0; i < t.numel(); ++i) {
        const double d = t.data()[i] - mean;
        var += d * d;
      }
    ds.pixel_std = count > 1 ? std::sqrt(var / static_cast<double>(count - 1)) : 0.0;
  }
  return ds;
}

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch) {
  if (n < 0) throw ContractError("epoch_order: n must be >= 0");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(Rng::mix(seed, kEpochStream, static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

Tensor<float> make_batch(const std::vector<Tensor<float>>& images,
                         const std::vector<int64_t>& order, int64_t start, int64_t count) {
  if (images.empty()) throw ContractError("make_batch: no images");
  if (count < 1) throw ContractError("make_batch: count must be >= 1");
  if (order.empty()) throw ContractError("make_batch: empty order");
  const Shape& s = images[0].shape();
  auto batch = Tensor<float>::zeros(Shape{count, s[1], s[2], s[3]});
  const int64_t per = s.numel();
  for (int64_t i = 0; i < count; ++i) {
    const int64_t idx = order[static_cast<size_t>((start + i) % static_cast<int64_t>(order.size()))];
    if (idx < 0 || idx >= static_cast<int64_t>(images.size()))
      throw ContractError("make_batch: order index out of range");
    const auto& img = images[static_cast<size_t>(idx)];
    if (!(img.shape() == s)) throw ContractError("make_batch: image shapes differ");
    std::copy(img.data(), img.data() + per, batch.data() + i * per);
  }
  return batch;
}

}  // namespace aren
