#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aren/tensor.hpp"

namespace aren {

// 8-bit raster, row-major HWC. channels is 1 (gray), 3 (RGB) or 4 (RGBA);
// the alpha plane doubles as the mask channel for restoration inputs.
struct ImageU8 {
  int64_t h = 0;
  int64_t w = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;

  int64_t size() const { return h * w * channels; }
};

// Decodes PNG or binary PPM (P6), detected by magic bytes. Throws IoError
// with the path on unreadable or malformed files.
ImageU8 load_image(const std::string& path);

// Lossless writers. save_image picks the codec from the extension
// (.ppm -> PPM, anything else -> PNG).
void save_png(const std::string& path, const ImageU8& img);
void save_ppm(const std::string& path, const ImageU8& img);
void save_image(const std::string& path, const ImageU8& img);

// Square center crop followed by nearest-neighbor resize to res x res.
ImageU8 center_crop_resize(const ImageU8& img, int64_t res);

// (1,h,w,c) float tensor in [0,1], v/255 per sample. channels picks the
// output planes: 3 drops alpha, 4 pads opaque alpha when missing, gray
// replicates.
Tensor<float> tensor_from_image(const ImageU8& img, int64_t channels);

// Clamps to [0,1] and quantizes to 8-bit. Accepts (1,h,w,c) or (b,h,w,c)
// with index selecting the batch entry.
ImageU8 image_from_tensor(const Tensor<float>& t, int64_t index = 0);

// Tiles column tensors into one lossless grid: every tensor is one column,
// batch entries are rows, separated by 2 white pixels. All columns must share
// (b,h,w,3).
void emit_grid(const std::vector<Tensor<float>>& columns, const std::string& path);

}  // namespace aren
