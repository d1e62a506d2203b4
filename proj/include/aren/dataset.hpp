#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aren/tensor.hpp"

namespace aren {

// An image folder decoded to tensors, deterministically split. Unreadable
// files are skipped with a warning and counted; file order is the sorted
// path list, so runs are reproducible across filesystems.
struct Dataset {
  int64_t resolution = 0;
  double split_ratio = 0.8;
  uint64_t seed = 0;
  std::vector<Tensor<float>> train;  // each (1,res,res,3) in [0,1]
  std::vector<Tensor<float>> test;
  std::vector<std::string> train_paths;
  std::vector<std::string> test_paths;
  int64_t skipped = 0;
  double pixel_std = 0.0;  // sample std over all training pixels, the MAE/sigma denominator
};

// Stream tags for derived RNG states: split selection and per-epoch order.
inline constexpr uint64_t kSplitStream = 1;
inline constexpr uint64_t kEpochStream = 2;

Dataset load_dataset(const std::string& dir, int64_t resolution, double split, uint64_t seed);

// Deterministic visit order for epoch e: shuffle of [0,n) driven only by
// (seed, epoch).
std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch);

// Stacks images[order[start .. start+count)] into one (count,res,res,c)
// batch, wrapping around the end of order.
Tensor<float> make_batch(const std::vector<Tensor<float>>& images,
                         const std::vector<int64_t>& order, int64_t start, int64_t count);

}  // namespace aren
