#include "aren/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "aren/errors.hpp"

namespace aren {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageU8 load_png(const std::string& path, std::FILE* f) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure reading " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: allocation failure reading " + path);
  }
  std::vector<png_bytep> row_ptrs;
  ImageU8 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: failed to decode " + path);
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  img.h = png_get_image_height(png, info);
  img.w = png_get_image_width(png, info);
  img.channels = png_get_channels(png, info);
  if (img.channels != 3 && img.channels != 4) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: unsupported channel count in " + path);
  }
  img.pixels.resize(static_cast<size_t>(img.size()));
  row_ptrs.resize(static_cast<size_t>(img.h));
  for (int64_t y = 0; y < img.h; ++y)
    row_ptrs[static_cast<size_t>(y)] = img.pixels.data() + y * img.w * img.channels;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Reads one PPM header token, skipping whitespace and '#' comments. The
// single whitespace byte terminating the token is consumed, matching the
// P6 rule that binary data starts right after the maxval separator.
bool ppm_token(std::FILE* f, char* buf, size_t cap) {
  int c = std::fgetc(f);
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = std::fgetc(f);
    c = std::fgetc(f);
  }
  size_t n = 0;
  while (c != EOF && !std::isspace(c)) {
    if (n + 1 < cap) buf[n++] = static_cast<char>(c);
    c = std::fgetc(f);
  }
  buf[n] = '\0';
  return n > 0;
}

ImageU8 load_ppm(const std::string& path, std::FILE* f) {
  char tok[32];
  if (!ppm_token(f, tok, sizeof tok) || std::strcmp(tok, "P6") != 0)
    throw IoError("ppm: bad magic in " + path);
  long w = 0, h = 0, maxval = 0;
  if (!ppm_token(f, tok, sizeof tok)) throw IoError("ppm: truncated header in " + path);
  w = std::strtol(tok, nullptr, 10);
  if (!ppm_token(f, tok, sizeof tok)) throw IoError("ppm: truncated header in " + path);
  h = std::strtol(tok, nullptr, 10);
  if (!ppm_token(f, tok, sizeof tok)) throw IoError("ppm: truncated header in " + path);
  maxval = std::strtol(tok, nullptr, 10);
  if (w <= 0 || h <= 0) throw IoError("ppm: bad dimensions in " + path);
  if (maxval != 255) throw IoError("ppm: only maxval 255 supported, " + path);

  ImageU8 img;
  img.h = h;
  img.w = w;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.size()));
  if (std::fread(img.pixels.data(), 1, img.pixels.size(), f) != img.pixels.size())
    throw IoError("ppm: truncated pixel data in " + path);
  return img;
}

}  // namespace

ImageU8 load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8) throw IoError("image too short: " + path);
  std::rewind(f.get());
  if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path, f.get());
  if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path, f.get());
  throw IoError("unrecognized image format: " + path);
}

void save_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3 && img.channels != 4)
    throw ContractError("save_png: channels must be 1, 3 or 4");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write image " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure writing " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: allocation failure writing " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: failed to encode " + path);
  }
  png_init_io(png, f.get());
  const int color = img.channels == 1   ? PNG_COLOR_TYPE_GRAY
                    : img.channels == 3 ? PNG_COLOR_TYPE_RGB
                                        : PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int64_t y = 0; y < img.h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.pixels.data() + y * img.w * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_ppm(const std::string& path, const ImageU8& img) {
  if (img.channels != 3) throw ContractError("save_ppm: P6 requires 3 channels");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write image " + path);
  std::fprintf(f.get(), "P6\n%lld %lld\n255\n", static_cast<long long>(img.w),
               static_cast<long long>(img.h));
  if (std::fwrite(img.pixels.data(), 1, img.pixels.size(), f.get()) != img.pixels.size())
    throw IoError("ppm: short write to " + path);
}

void save_image(const std::string& path, const ImageU8& img) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0)
    save_ppm(path, img);
  else
    save_png(path, img);
}

ImageU8 center_crop_resize(const ImageU8& img, int64_t res) {
  if (res < 1) throw ContractError("center_crop_resize: resolution must be >= 1");
  if (img.h < 1 || img.w < 1) throw ContractError("center_crop_resize: empty image");
  const int64_t side = std::min(img.h, img.w);
  const int64_t y0 = (img.h - side) / 2;
  const int64_t x0 = (img.w - side) / 2;
  ImageU8 out;
  out.h = res;
  out.w = res;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(out.size()));
  for (int64_t y = 0; y < res; ++y) {
    const int64_t sy = y0 + y * side / res;
    for (int64_t x = 0; x < res; ++x) {
      const int64_t sx = x0 + x * side / res;
      const uint8_t* src = img.pixels.data() + (sy * img.w + sx) * img.channels;
      uint8_t* dst = out.pixels.data() + (y * res + x) * out.channels;
      for (int64_t c = 0; c < img.channels; ++c) dst[c] = src[c];
    }
  }
  return out;
}

Tensor<float> tensor_from_image(const ImageU8& img, int64_t channels) {
  if (channels != 3 && channels != 4)
    throw ContractError("tensor_from_image: channels must be 3 or 4");
  auto t = Tensor<float>::zeros(Shape{1, img.h, img.w, channels});
  const int64_t pixels = img.h * img.w;
  for (int64_t p = 0; p < pixels; ++p) {
    const uint8_t* src = img.pixels.data() + p * img.channels;
    float* dst = t.data() + p * channels;
    for (int64_t c = 0; c < channels; ++c) {
      uint8_t v;
      if (c < img.channels)
        v = src[c];
      else if (c == 3)
        v = 255;  // opaque alpha when the source has none
      else
        v = src[img.channels - 1];  // replicate gray
      dst[c] = static_cast<float>(v) / 255.f;
    }
  }
  return t;
}

ImageU8 image_from_tensor(const Tensor<float>& t, int64_t index) {
  const Shape& s = t.shape();
  if (s.rank() != 4) throw ContractError("image_from_tensor: expected rank-4 NHWC, got " + s.str());
  if (index < 0 || index >= s[0]) throw ContractError("image_from_tensor: batch index out of range");
  ImageU8 img;
  img.h = s[1];
  img.w = s[2];
  img.channels = s[3];
  img.pixels.resize(static_cast<size_t>(img.size()));
  const float* src = t.data() + index * img.size();
  for (int64_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(src[i], 0.f, 1.f);
    img.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.f));
  }
  return img;
}

void emit_grid(const std::vector<Tensor<float>>& columns, const std::string& path) {
  if (columns.empty()) throw ContractError("emit_grid: no columns");
  const Shape& s0 = columns[0].shape();
  if (s0.rank() != 4 || s0[3] != 3)
    throw ContractError("emit_grid: columns must be (b,h,w,3), got " + s0.str());
  for (const auto& c : columns)
    if (!(c.shape() == s0))
      throw ContractError("emit_grid: column shapes differ, " + s0.str() + " vs " + c.shape().str());

  const int64_t rows = s0[0], h = s0[1], w = s0[2];
  const int64_t ncols = static_cast<int64_t>(columns.size());
  const int64_t sep = 2;
  ImageU8 grid;
  grid.h = rows * h + (rows - 1) * sep;
  grid.w = ncols * w + (ncols - 1) * sep;
  grid.channels = 3;
  grid.pixels.assign(static_cast<size_t>(grid.size()), 255);  // white separators

  for (int64_t r = 0; r < rows; ++r)
    for (int64_t cidx = 0; cidx < ncols; ++cidx) {
      auto tile = image_from_tensor(columns[static_cast<size_t>(cidx)], r);
      const int64_t oy = r * (h + sep), ox = cidx * (w + sep);
      for (int64_t y = 0; y < h; ++y)
        std::memcpy(grid.pixels.data() + ((oy + y) * grid.w + ox) * 3,
                    tile.pixels.data() + y * w * 3, static_cast<size_t>(w * 3));
    }
  save_image(path, grid);
}

}  // namespace aren
