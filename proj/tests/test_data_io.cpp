#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "aren/checkpoint.hpp"
#include "aren/dataset.hpp"
#include "aren/image.hpp"
#include "aren/ops.hpp"
#include "aren/params.hpp"

using namespace aren;
namespace fs = std::filesystem;

namespace {

// Scratch directory wiped on scope exit so cases cannot leak files into each
// other or the repo.
struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("aren_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ImageU8 pattern_image(int64_t h, int64_t w, int64_t channels) {
  ImageU8 img{h, w, channels, {}};
  img.pixels.resize(static_cast<size_t>(img.size()));
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<uint8_t>((i * 7 + 13) % 256);
  return img;
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void push_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
}

std::string thrown_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("png round trip preserves every byte") {
  TmpDir tmp("png");
  for (int64_t channels : {int64_t(1), int64_t(3), int64_t(4)}) {
    ImageU8 img = pattern_image(13, 9, channels);
    const std::string path = tmp.file("img_" + std::to_string(channels) + ".png");
    save_png(path, img);
    ImageU8 back = load_image(path);
    // Gray comes back expanded to RGB by the loader contract.
    if (channels == 1) {
      REQUIRE(back.channels == 3);
      REQUIRE(back.h == img.h);
      REQUIRE(back.w == img.w);
      for (int64_t i = 0; i < img.h * img.w; ++i)
        for (int64_t c = 0; c < 3; ++c)
          CHECK(back.pixels[static_cast<size_t>(i * 3 + c)] ==
                img.pixels[static_cast<size_t>(i)]);
    } else {
      REQUIRE(back.channels == channels);
      REQUIRE(back.h == img.h);
      REQUIRE(back.w == img.w);
      CHECK(back.pixels == img.pixels);
    }
  }
}

TEST_CASE("ppm round trip and extension dispatch") {
  TmpDir tmp("ppm");
  ImageU8 img = pattern_image(5, 7, 3);

  const std::string ppm = tmp.file("img.ppm");
  save_image(ppm, img);
  auto raw = read_bytes(ppm);
  REQUIRE(raw.size() > 2);
  CHECK(raw[0] == 'P');
  CHECK(raw[1] == '6');
  ImageU8 back = load_image(ppm);
  REQUIRE(back.channels == 3);
  CHECK(back.pixels == img.pixels);

  const std::string png = tmp.file("img.png");
  save_image(png, img);
  auto png_raw = read_bytes(png);
  REQUIRE(png_raw.size() > 8);
  CHECK(png_raw[1] == 'P');  // \x89PNG
  ImageU8 back_png = load_image(png);
  CHECK(back_png.pixels == img.pixels);

  // Comments and arbitrary whitespace in the PPM header are legal.
  std::vector<uint8_t> hand = {'P', '6', '\n', '#', ' ', 'c', '\n', '2', ' ', '1', '\t', '2',
                               '5', '5', '\n'};
  for (int i = 0; i < 6; ++i) hand.push_back(static_cast<uint8_t>(10 * i));
  const std::string hand_path = tmp.file("hand.ppm");
  write_bytes(hand_path, hand);
  ImageU8 parsed = load_image(hand_path);
  CHECK(parsed.w == 2);
  CHECK(parsed.h == 1);
  CHECK(parsed.pixels == std::vector<uint8_t>({0, 10, 20, 30, 40, 50}));
}

TEST_CASE("loader failures name the offending file") {
  TmpDir tmp("bad");
  const std::string missing = tmp.file("nope.png");
  std::string msg = thrown_message([&] { (void)load_image(missing); });
  CHECK(msg.find("nope.png") != std::string::npos);

  const std::string garbage = tmp.file("garbage.png");
  write_bytes(garbage, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  msg = thrown_message([&] { (void)load_image(garbage); });
  CHECK(msg.find("garbage.png") != std::string::npos);

  // 16-bit PPM maxval is out of contract.
  const std::string deep = tmp.file("deep.ppm");
  write_bytes(deep, {'P', '6', '\n', '1', ' ', '1', '\n', '6', '5', '5', '3', '5', '\n', 0, 0,
                     0, 0, 0, 0});
  msg = thrown_message([&] { (void)load_image(deep); });
  CHECK(msg.find("deep.ppm") != std::string::npos);
  CHECK(msg.find("maxval") != std::string::npos);
}

TEST_CASE("center crop resize picks nearest source pixels") {
  // 4x6: crop trims one column on each side, then 2x2 sampling hits
  // crop-relative rows/cols {0,2}.
  ImageU8 img{4, 6, 3, {}};
  img.pixels.resize(4 * 6 * 3);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 6; ++x) {
      img.pixels[static_cast<size_t>((y * 6 + x) * 3 + 0)] = static_cast<uint8_t>(y);
      img.pixels[static_cast<size_t>((y * 6 + x) * 3 + 1)] = static_cast<uint8_t>(x);
      img.pixels[static_cast<size_t>((y * 6 + x) * 3 + 2)] = static_cast<uint8_t>(y * 10 + x);
    }
  ImageU8 small = center_crop_resize(img, 2);
  REQUIRE(small.h == 2);
  REQUIRE(small.w == 2);
  const int64_t ys[2] = {0, 2};
  const int64_t xs[2] = {1, 3};  // center crop offset 1
  for (int64_t y = 0; y < 2; ++y)
    for (int64_t x = 0; x < 2; ++x) {
      CHECK(small.pixels[static_cast<size_t>((y * 2 + x) * 3 + 0)] == ys[y]);
      CHECK(small.pixels[static_cast<size_t>((y * 2 + x) * 3 + 1)] == xs[x]);
      CHECK(small.pixels[static_cast<size_t>((y * 2 + x) * 3 + 2)] == ys[y] * 10 + xs[x]);
    }

  // Upscale replicates: each source pixel becomes a 2x2 block.
  ImageU8 tiny{2, 2, 3, {}};
  tiny.pixels.resize(2 * 2 * 3);
  for (size_t i = 0; i < tiny.pixels.size(); ++i) tiny.pixels[i] = static_cast<uint8_t>(i);
  ImageU8 big = center_crop_resize(tiny, 4);
  REQUIRE(big.h == 4);
  REQUIRE(big.w == 4);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 4; ++x)
      for (int64_t c = 0; c < 3; ++c)
        CHECK(big.pixels[static_cast<size_t>((y * 4 + x) * 3 + c)] ==
              tiny.pixels[static_cast<size_t>(((y / 2) * 2 + x / 2) * 3 + c)]);

  // No-op when already square at the target size.
  ImageU8 same = center_crop_resize(small, 2);
  CHECK(same.pixels == small.pixels);
}

TEST_CASE("tensor conversion maps 8-bit to unit range and back") {
  ImageU8 gray{16, 16, 1, {}};
  gray.pixels.resize(256);
  for (int i = 0; i < 256; ++i) gray.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(i);
  Tensor<float> t = tensor_from_image(gray, 3);
  REQUIRE(t.shape() == Shape({1, 16, 16, 3}));
  for (int i = 0; i < 256; ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(t.vec()[static_cast<size_t>(i * 3 + c)] == static_cast<float>(i) / 255.0f);

  // RGB to 4 channels pads an opaque mask plane.
  ImageU8 rgb = pattern_image(3, 3, 3);
  Tensor<float> padded = tensor_from_image(rgb, 4);
  REQUIRE(padded.shape() == Shape({1, 3, 3, 4}));
  for (int64_t i = 0; i < 9; ++i) CHECK(padded.vec()[static_cast<size_t>(i * 4 + 3)] == 1.0f);

  // RGBA to 3 channels drops alpha.
  ImageU8 rgba = pattern_image(3, 3, 4);
  Tensor<float> dropped = tensor_from_image(rgba, 3);
  for (int64_t i = 0; i < 9; ++i)
    for (int64_t c = 0; c < 3; ++c)
      CHECK(dropped.vec()[static_cast<size_t>(i * 3 + c)] ==
            static_cast<float>(rgba.pixels[static_cast<size_t>(i * 4 + c)]) / 255.0f);

  // u8 -> tensor -> u8 is the identity.
  ImageU8 round = image_from_tensor(tensor_from_image(rgb, 3));
  CHECK(round.pixels == rgb.pixels);
}

TEST_CASE("tensor to image clamps, rounds, and indexes the batch") {
  auto t = Tensor<float>::from_data(Shape{2, 1, 1, 3},
                                    {-0.2f, 0.5f, 1.7f, 0.0f, 1.0f, 0.25f});
  ImageU8 first = image_from_tensor(t, 0);
  REQUIRE(first.channels == 3);
  CHECK(first.pixels == std::vector<uint8_t>({0, 128, 255}));  // lround(127.5) = 128
  ImageU8 second = image_from_tensor(t, 1);
  CHECK(second.pixels == std::vector<uint8_t>({0, 255, 64}));  // lround(63.75) = 64
}

TEST_CASE("grid layout tiles columns with white separators") {
  TmpDir tmp("grid");
  const int64_t b = 2, h = 8, w = 8, sep = 2;
  std::vector<Tensor<float>> cols;
  for (int col = 0; col < 3; ++col) {
    std::vector<float> v(static_cast<size_t>(b * h * w * 3));
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = static_cast<float>((i * 3 + static_cast<size_t>(col) * 17) % 200) / 255.0f;
    cols.push_back(Tensor<float>::from_data(Shape{b, h, w, 3}, std::move(v)));
  }
  const std::string path = tmp.file("grid.png");
  emit_grid(cols, path);
  ImageU8 grid = load_image(path);
  REQUIRE(grid.w == 3 * w + 2 * sep);
  REQUIRE(grid.h == b * h + sep);
  REQUIRE(grid.channels == 3);

  auto at = [&](int64_t y, int64_t x, int64_t c) {
    return grid.pixels[static_cast<size_t>((y * grid.w + x) * 3 + c)];
  };
  // Separator bands are pure white.
  for (int64_t y = 0; y < grid.h; ++y)
    for (int64_t x : {w, w + 1, 2 * w + 2, 2 * w + 3})
      for (int64_t c = 0; c < 3; ++c) CHECK(at(y, x, c) == 255);
  for (int64_t y : {h, h + 1})
    for (int64_t x = 0; x < grid.w; ++x)
      for (int64_t c = 0; c < 3; ++c) CHECK(at(y, x, c) == 255);

  // Every tile equals its source image, quantized the same way.
  for (int64_t col = 0; col < 3; ++col)
    for (int64_t row = 0; row < b; ++row) {
      ImageU8 want = image_from_tensor(cols[static_cast<size_t>(col)], row);
      const int64_t y0 = row * (h + sep), x0 = col * (w + sep);
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int64_t c = 0; c < 3; ++c)
            CHECK(at(y0 + y, x0 + x, c) ==
                  want.pixels[static_cast<size_t>((y * w + x) * 3 + c)]);
    }

  // A single column of a single image is exactly that image.
  std::vector<float> row0(cols[0].vec().begin(), cols[0].vec().begin() + h * w * 3);
  std::vector<Tensor<float>> one = {
      Tensor<float>::from_data(Shape{1, h, w, 3}, std::move(row0))};
  const std::string single = tmp.file("single.png");
  emit_grid(one, single);
  ImageU8 si = load_image(single);
  CHECK(si.h == h);
  CHECK(si.w == w);
  ImageU8 want = image_from_tensor(one[0], 0);
  CHECK(si.pixels == want.pixels);
}

TEST_CASE("dataset split is deterministic, exhaustive, and robust to junk") {
  TmpDir tmp("data");
  std::vector<std::string> names;
  for (int i = 0; i < 10; ++i) {
    ImageU8 img = pattern_image(8, 8, 3);
    for (auto& p : img.pixels) p = static_cast<uint8_t>((p + i * 31) % 256);
    const std::string name = "img_" + std::to_string(i) + ".ppm";
    save_ppm(tmp.file(name), img);
    names.push_back(tmp.file(name));
  }
  write_bytes(tmp.file("junk.png"), {9, 9, 9, 9});

  Dataset ds = load_dataset(tmp.path.string(), 8, 0.8, 7);
  CHECK(ds.train.size() == 8);
  CHECK(ds.test.size() == 2);
  CHECK(ds.skipped == 1);
  CHECK(ds.pixel_std > 0.0);

  // Train + test paths partition the full sorted listing.
  std::vector<std::string> seen = ds.train_paths;
  seen.insert(seen.end(), ds.test_paths.begin(), ds.test_paths.end());
  std::sort(seen.begin(), seen.end());
  std::sort(names.begin(), names.end());
  CHECK(seen == names);

  // Identical call, identical result, down to the pixel data.
  Dataset again = load_dataset(tmp.path.string(), 8, 0.8, 7);
  CHECK(again.train_paths == ds.train_paths);
  CHECK(again.test_paths == ds.test_paths);
  CHECK(again.pixel_std == ds.pixel_std);
  for (size_t i = 0; i < ds.train.size(); ++i) CHECK(again.train[i].vec() == ds.train[i].vec());

  // Independent recompute of the MAE denominator: sample std over all train
  // pixels.
  long double sum = 0.0L, n = 0.0L;
  for (const auto& t : ds.train)
    for (float v : t.vec()) {
      sum += v;
      n += 1.0L;
    }
  const long double mean = sum / n;
  long double ss = 0.0L;
  for (const auto& t : ds.train)
    for (float v : t.vec()) ss += (v - mean) * (v - mean);
  const double want_std = static_cast<double>(std::sqrt(ss / (n - 1.0L)));
  CHECK(std::abs(ds.pixel_std - want_std) < 1e-12);

  // Empty directory is a hard error, not an empty dataset.
  TmpDir empty("empty");
  CHECK_THROWS_AS((void)load_dataset(empty.path.string(), 8, 0.8, 7), IoError);
}

TEST_CASE("epoch order is a seeded permutation") {
  auto o1 = epoch_order(16, 5, 0);
  REQUIRE(o1.size() == 16);
  auto sorted = o1;
  std::sort(sorted.begin(), sorted.end());
  for (int64_t i = 0; i < 16; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);

  CHECK(epoch_order(16, 5, 0) == o1);
  CHECK(epoch_order(16, 5, 1) != o1);
  CHECK(epoch_order(16, 6, 0) != o1);
}

TEST_CASE("batches wrap around the visit order") {
  std::vector<Tensor<float>> images;
  for (int i = 0; i < 3; ++i)
    images.push_back(Tensor<float>::filled(Shape{1, 2, 2, 3}, static_cast<float>(i)));
  std::vector<int64_t> order = {2, 0, 1};
  Tensor<float> batch = make_batch(images, order, 2, 3);
  REQUIRE(batch.shape() == Shape({3, 2, 2, 3}));
  const float want[3] = {1.0f, 2.0f, 0.0f};  // order[2], order[0], order[1]
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 12; ++j)
      CHECK(batch.vec()[static_cast<size_t>(i * 12 + j)] == want[i]);
}

TEST_CASE("checkpoint round trips bit exact") {
  TmpDir tmp("ckpt");
  Checkpoint ckpt;
  ckpt.config_text = "[model]\nlevels = 2\n\n[state]\nrng = 12345\n";
  ckpt.entries.push_back({"a.w", {2, 3}, {1.5f, -0.0f, 1e-42f, 3.4e38f, -7.25f, 0.0f}});
  ckpt.entries.push_back({"b", {4}, {-1.0f, 2.0f, -3.0f, 4.0f}});
  const std::string path = tmp.file("model.ckpt");
  save_checkpoint(ckpt, path);

  Checkpoint back = load_checkpoint(path);
  CHECK(back.version == kCheckpointVersion);
  CHECK(back.config_text == ckpt.config_text);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.total_elements() == 10);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back.entries[i].name == ckpt.entries[i].name);
    CHECK(back.entries[i].dims == ckpt.entries[i].dims);
    REQUIRE(back.entries[i].data.size() == ckpt.entries[i].data.size());
    for (size_t j = 0; j < back.entries[i].data.size(); ++j)
      CHECK(std::bit_cast<uint32_t>(back.entries[i].data[j]) ==
            std::bit_cast<uint32_t>(ckpt.entries[i].data[j]));
  }
  CHECK(back.find("a.w") != nullptr);
  CHECK(back.find("zzz") == nullptr);

  // The first bytes on disk are the magic, so the format is identifiable.
  auto raw = read_bytes(path);
  REQUIRE(raw.size() > 8);
  CHECK(std::string(raw.begin(), raw.begin() + 8) == "ARENCKPT");
}

TEST_CASE("store and optimizer state survive a checkpoint cycle") {
  auto build = [](ParamStore<float>& store, float fill) {
    store.add("w1", Tensor<float>::from_data(Shape{2, 3}, std::vector<float>(6, fill)));
    store.add("w2", Tensor<float>::from_data(Shape{4}, std::vector<float>(4, fill * 2)));
    store.add("bn.running_mean", Tensor<float>::filled(Shape{3}, fill + 1), /*trainable=*/false);
  };

  ParamStore<float> store;
  build(store, 0.5f);
  Adam<float> opt(AdamConfig<float>{0.01f});
  // Drive a few steps so both moments are populated and parameters move.
  for (int s = 0; s < 3; ++s) {
    Tensor<float> loss = sum(square(store.entries()[0].tensor));
    loss = add(loss, sum(square(store.entries()[1].tensor)));
    loss.backward();
    opt.step(store);
  }

  TmpDir tmp("state");
  Checkpoint ckpt;
  ckpt.config_text = "[train]\nlr = 0.01\n";
  append_store(ckpt, store);
  append_adam(ckpt, "gen", opt, store);
  const std::string path = tmp.file("s.ckpt");
  save_checkpoint(ckpt, path);

  // Running statistics are snapshotted alongside trainables.
  CHECK(ckpt.find("bn.running_mean") != nullptr);
  CHECK(ckpt.find("gen.w1.m") != nullptr);
  CHECK(ckpt.find("gen.w1.v") != nullptr);
  CHECK(ckpt.total_elements() == 13 + 2 * 10);

  Checkpoint loaded = load_checkpoint(path);
  ParamStore<float> fresh;
  build(fresh, 0.0f);
  Adam<float> fresh_opt(AdamConfig<float>{0.01f});
  restore_store(loaded, fresh);
  restore_adam(loaded, "gen", fresh_opt, fresh);
  fresh_opt.set_step_count(opt.step_count());

  for (const auto& e : store.entries()) {
    const CheckpointEntry* got = loaded.find(e.name);
    REQUIRE(got != nullptr);
    CHECK(got->data == e.tensor.vec());
  }
  for (const std::string name : {"w1", "w2"}) {
    auto* a = opt.moments_for(name);
    auto* b = fresh_opt.moments_for(name);
    REQUIRE(a != nullptr);
    REQUIRE(b != nullptr);
    CHECK(a->first == b->first);
    CHECK(a->second == b->second);
  }

  // One more identical step on both copies stays in lockstep.
  auto step_once = [](ParamStore<float>& s, Adam<float>& o) {
    Tensor<float> loss = sum(square(s.entries()[0].tensor));
    loss = add(loss, sum(square(s.entries()[1].tensor)));
    loss.backward();
    o.step(s);
  };
  step_once(store, opt);
  step_once(fresh, fresh_opt);
  CHECK(store.entries()[0].tensor.vec() == fresh.entries()[0].tensor.vec());
  CHECK(store.entries()[1].tensor.vec() == fresh.entries()[1].tensor.vec());
}

TEST_CASE("corrupt checkpoints fail with offset and entry context") {
  TmpDir tmp("corrupt");
  Checkpoint ckpt;
  ckpt.config_text = "x";
  ckpt.entries.push_back({"layer.weight", {2, 2}, {1, 2, 3, 4}});
  const std::string good = tmp.file("good.ckpt");
  save_checkpoint(ckpt, good);
  auto raw = read_bytes(good);

  // Cut inside the magic.
  write_bytes(tmp.file("t0.ckpt"), {raw.begin(), raw.begin() + 4});
  std::string msg = thrown_message([&] { (void)load_checkpoint(tmp.file("t0.ckpt")); });
  CHECK(msg.find("offset 0") != std::string::npos);
  CHECK(msg.find("magic") != std::string::npos);

  // Wrong magic.
  auto wrong = raw;
  wrong[0] = 'X';
  write_bytes(tmp.file("t1.ckpt"), wrong);
  msg = thrown_message([&] { (void)load_checkpoint(tmp.file("t1.ckpt")); });
  CHECK(msg.find("bad magic") != std::string::npos);
  CHECK(msg.find("offset 0") != std::string::npos);

  // Unsupported version.
  auto vers = raw;
  vers[8] = 9;
  write_bytes(tmp.file("t2.ckpt"), vers);
  msg = thrown_message([&] { (void)load_checkpoint(tmp.file("t2.ckpt")); });
  CHECK(msg.find("version 9") != std::string::npos);
  CHECK(msg.find("expected 1") != std::string::npos);

  // Cut inside the payload: the message names the entry being read.
  write_bytes(tmp.file("t3.ckpt"), {raw.begin(), raw.end() - 2});
  msg = thrown_message([&] { (void)load_checkpoint(tmp.file("t3.ckpt")); });
  CHECK(msg.find("truncated at offset") != std::string::npos);
  CHECK(msg.find("layer.weight") != std::string::npos);

  // Handcrafted entry with an unknown dtype.
  std::vector<uint8_t> crafted(raw.begin(), raw.begin() + 8);  // magic
  push_u32(crafted, 1);                                        // version
  push_u32(crafted, 0);                                        // empty config
  push_u32(crafted, 1);                                        // one entry
  push_u32(crafted, 1);
  crafted.push_back('a');
  crafted.push_back(7);  // dtype
  write_bytes(tmp.file("t4.ckpt"), crafted);
  msg = thrown_message([&] { (void)load_checkpoint(tmp.file("t4.ckpt")); });
  CHECK(msg.find("unknown dtype 7") != std::string::npos);
  CHECK(msg.find("'a'") != std::string::npos);
}

TEST_CASE("restore reports missing and mismatched parameters") {
  ParamStore<float> store;
  store.add("w", Tensor<float>::filled(Shape{2, 2}, 1.0f));

  Checkpoint empty;
  std::string msg = thrown_message([&] { restore_store(empty, store); });
  CHECK(msg.find("missing parameter 'w'") != std::string::npos);

  Checkpoint wrong;
  wrong.entries.push_back({"w", {4}, {1, 2, 3, 4}});
  msg = thrown_message([&] { restore_store(wrong, store); });
  CHECK(msg.find("shape mismatch for 'w'") != std::string::npos);

  // .m without .v is rejected rather than half-restored.
  Adam<float> opt(AdamConfig<float>{0.01f});
  Checkpoint half;
  half.entries.push_back({"gen.w.m", {4}, {0, 0, 0, 0}});
  msg = thrown_message([&] { restore_adam(half, "gen", opt, store); });
  CHECK(msg.find("incomplete optimizer moments") != std::string::npos);
}
