#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aren/attention.hpp"
#include "aren/blocks.hpp"
#include "aren/quantizer.hpp"

namespace aren {

// One encoding level: strided residual blocks off the shared base output,
// an identity block, optional self pixel-attention, and a 1x1 projection to
// the latent width. Levels at factor f live at base_resolution / f.
struct LevelSpec {
  int64_t factor = 2;  // downsample relative to the base-encoder output; power of two >= 2
  int64_t width = 48;
  int64_t latent_dim = 64;
  bool attention = true;

  // Table-style name: factor 2 -> level1, 4 -> level2, 8 -> level3.
  std::string name() const {
    int64_t f = factor, k = 0;
    while (f > 1) {
      f >>= 1;
      ++k;
    }
    return "level" + std::to_string(k);
  }
};

template <typename T>
struct ArenLevel {
  LevelSpec spec;
  std::vector<ConvResBlock<T>> down;
  IdResBlock<T> res;
  std::optional<AttentionParams<T>> attn;
  Conv2dLayer<T> proj;                  // 1x1 width -> latent_dim
  std::optional<Conv2dLayer<T>> merge;  // 1x1 2c -> c; present when a coarser level feeds this one
  std::optional<Codebook<T>> codebook;

  // The level's AREN latent from the shared base output.
  Tensor<T> forward(const Tensor<T>& base, bool training, int64_t max_pixels) {
    Tensor<T> t = base;
    for (auto& blk : down) t = blk.forward(t, training);
    t = res.forward(t, training);
    if (attn) t = pixel_attention(t, t, *attn, max_pixels);
    return proj(t);
  }
};

inline int64_t level_param_count(const LevelSpec& s, int64_t in_dim, int64_t codebook_size,
                                 bool with_merge) {
  int64_t n = 0;
  int64_t fin = in_dim;
  for (int64_t f = s.factor; f > 1; f >>= 1) {
    n += conv_res_param_count(fin, s.width);
    fin = s.width;
  }
  n += id_res_param_count(s.width);
  if (s.attention) n += 2 * (s.width * s.width + s.width);  // both 1x1 projections
  n += conv_param_count(1, 1, s.width, s.latent_dim);
  if (with_merge) n += conv_param_count(1, 1, 2 * s.latent_dim, s.latent_dim);
  return n + codebook_size * s.latent_dim;
}

// The multi-level encoder: shared base stem feeding every level, then a
// top-down cascade. The coarsest level quantizes its own latent; each finer
// level quantizes the 1x1-merged concat of its latent with the upsampled
// straight-through quantization from above. Gradients flow through every
// straight_through, including the concat path.
template <typename T>
class Hierarchy {
 public:
  struct Output {
    std::vector<LatentGrid<T>> grids;  // ascending factor; grids[0] is the bottom
    std::vector<Tensor<T>> straight;   // straight-through per level
    Tensor<T> merged_bottom;           // == grids[0].z
  };

  Hierarchy(ParamStore<T>& store, int64_t in_channels, int64_t width, int64_t latent_dim,
            int64_t codebook_size, std::vector<int64_t> factors, bool attention,
            int64_t attention_max_pixels, Rng& rng)
      : store_(store),
        latent_dim_(latent_dim),
        codebook_size_(codebook_size),
        max_pixels_(attention_max_pixels) {
    if (factors.empty()) throw ContractError("hierarchy: needs at least one level");
    for (size_t i = 0; i < factors.size(); ++i) {
      if (factors[i] < 2 || (factors[i] & (factors[i] - 1)) != 0)
        throw ContractError("hierarchy: level factors must be powers of two >= 2");
      if (i > 0 && factors[i] != 2 * factors[i - 1])
        throw ContractError("hierarchy: adjacent level factors must double");
    }
    base_ = make_base_encoder(store_, "base", in_channels, width, latent_dim, rng);
    for (size_t i = 0; i < factors.size(); ++i) {
      LevelSpec spec{factors[i], width, latent_dim, attention};
      const bool with_merge = i + 1 < factors.size();
      levels_.push_back(build_level(spec, with_merge, rng));
    }
  }

  // Prepend a finer level at half the current bottom factor. The new level
  // merges with (what was) the bottom and owns the new bottom codebook.
  void add_lower_level(Rng& rng) {
    const int64_t f = levels_.front().spec.factor;
    if (f < 4)
      throw ContractError("add_lower_level: bottom factor " + std::to_string(f) + " cannot halve below 2");
    LevelSpec spec = levels_.front().spec;
    spec.factor = f / 2;
    levels_.insert(levels_.begin(), build_level(spec, /*with_merge=*/true, rng));
  }

  Output encode(const Tensor<T>& img, bool training, bool count_usage = false) {
    if (training && !codebooks_ready_) lazy_init_pending_ = true;
    auto base = base_.forward(img, training);
    std::vector<Tensor<T>> latents(levels_.size());
    for (size_t i = 0; i < levels_.size(); ++i)
      latents[i] = levels_[i].forward(base, training, max_pixels_);

    Output out;
    out.grids.resize(levels_.size());
    out.straight.resize(levels_.size());
    for (size_t ri = levels_.size(); ri-- > 0;) {
      Tensor<T> m;
      if (ri + 1 == levels_.size()) {
        m = latents[ri];
      } else {
        auto up = resize_nearest(out.straight[ri + 1], 2);
        m = (*levels_[ri].merge)(concat_channels(latents[ri], up));
      }
      if (lazy_init_pending_)
        init_codebook_from_batch(*levels_[ri].codebook, m, init_rng_);
      out.grids[ri] = quantize(m, *levels_[ri].codebook, count_usage);
      out.straight[ri] = straight_through(m, out.grids[ri].quantized);
    }
    if (lazy_init_pending_) {
      lazy_init_pending_ = false;
      codebooks_ready_ = true;
    }
    out.merged_bottom = out.grids[0].z;
    return out;
  }

  std::vector<ArenLevel<T>>& levels() { return levels_; }
  const std::vector<ArenLevel<T>>& levels() const { return levels_; }
  BaseEncoder<T>& base() { return base_; }
  int64_t bottom_factor() const { return levels_.front().spec.factor; }
  int64_t depth() const { return static_cast<int64_t>(levels_.size()); }

  // Codebooks start as zeros and are filled from the first training batch's
  // encoder outputs. A checkpoint load marks them ready instead.
  bool codebooks_ready() const { return codebooks_ready_; }
  void set_codebooks_ready(bool ready) { codebooks_ready_ = ready; }
  void seed_codebook_init(uint64_t seed) { init_rng_ = Rng(seed); }

 private:
  ArenLevel<T> build_level(const LevelSpec& spec, bool with_merge, Rng& rng) {
    const std::string p = spec.name();
    ArenLevel<T> lvl;
    lvl.spec = spec;
    int64_t fin = latent_dim_;
    int64_t idx = 1;
    for (int64_t f = spec.factor; f > 1; f >>= 1) {
      lvl.down.push_back(make_conv_res(store_, p + ".down" + std::to_string(idx), fin,
                                       BlockConfig{spec.width, 0.1, 2, 3}, rng));
      fin = spec.width;
      ++idx;
    }
    lvl.res = make_id_res(store_, p + ".res", BlockConfig{spec.width, 0.1, 1, 3}, rng);
    if (spec.attention)
      lvl.attn = make_attention(store_, p + ".attn", spec.width, spec.width, spec.width, rng);
    lvl.proj = make_conv(store_, p + ".proj", 1, 1, spec.width, spec.latent_dim, 1, rng);
    if (with_merge)
      lvl.merge = make_conv(store_, p + ".merge", 1, 1, 2 * spec.latent_dim, spec.latent_dim, 1, rng);
    lvl.codebook.emplace(store_.add("codebook." + p,
                                    Tensor<T>::zeros(Shape{codebook_size_, spec.latent_dim})));
    return lvl;
  }

  ParamStore<T>& store_;
  int64_t latent_dim_;
  int64_t codebook_size_;
  int64_t max_pixels_;
  BaseEncoder<T> base_;
  std::vector<ArenLevel<T>> levels_;
  bool codebooks_ready_ = false;
  bool lazy_init_pending_ = false;
  Rng init_rng_{0};
};

// Mirror decoder: 1x1 projection down to the residual width, then
// (resize x2 -> Id-ResBlock) stages up to image resolution, then a 1x1 conv
// to the output channels squashed into [0,1].
template <typename T>
struct Decoder {
  Conv2dLayer<T> proj;
  std::vector<IdResBlock<T>> stages;
  Conv2dLayer<T> out;

  Tensor<T> forward(const Tensor<T>& quantized_bottom, bool training) {
    Tensor<T> t = proj(quantized_bottom);
    for (auto& s : stages) t = s.forward(resize_nearest(t, 2), training);
    return sigmoid(out(t));
  }
};

template <typename T>
Decoder<T> make_decoder(ParamStore<T>& store, const std::string& prefix, int64_t latent_dim,
                        int64_t width, int64_t n_stages, int64_t out_channels, Rng& rng) {
  Decoder<T> dec;
  dec.proj = make_conv(store, prefix + ".proj", 1, 1, latent_dim, width, 1, rng);
  for (int64_t i = 1; i <= n_stages; ++i)
    dec.stages.push_back(make_id_res(store, prefix + ".up" + std::to_string(i),
                                     BlockConfig{width, 0.1, 1, 3}, rng));
  dec.out = make_conv(store, prefix + ".out", 1, 1, width, out_channels, 1, rng);
  return dec;
}

struct ModelConfig {
  int64_t resolution = 32;
  int64_t input_channels = 3;  // 4 when a mask plane rides along
  int64_t levels = 1;
  bool attention = true;
  int64_t width = 48;
  int64_t latent_dim = 64;
  int64_t codebook_size = 128;
  int64_t attention_max_pixels = 4096;
  std::vector<int64_t> level_factors;  // empty -> standard ladder {2,4,...,2^levels}

  std::vector<int64_t> factors() const {
    if (!level_factors.empty()) return level_factors;
    std::vector<int64_t> f;
    int64_t v = 2;
    for (int64_t i = 0; i < levels; ++i, v *= 2) f.push_back(v);
    return f;
  }

  void validate() const {
    if (resolution < 8) throw ContractError("model: resolution must be >= 8");
    if (levels < 1) throw ContractError("model: needs at least one level");
    if (input_channels != 3 && input_channels != 4)
      throw ContractError("model: input channels must be 3 or 4");
    const auto f = factors();
    const int64_t base_res = resolution / 4;
    if (resolution % 4 != 0 || base_res % f.back() != 0 || base_res / f.back() < 1)
      throw ContractError("model: resolution " + std::to_string(resolution) +
                          " incompatible with " + std::to_string(f.size()) + " levels");
  }

  int64_t bottom_resolution() const { return resolution / 4 / factors().front(); }
  int64_t decoder_stages() const {
    int64_t res = bottom_resolution(), n = 0;
    while (res < resolution) {
      res *= 2;
      ++n;
    }
    return n;
  }
};

template <typename T>
class ArenModel {
 public:
  struct ForwardResult {
    Tensor<T> recon;
    std::vector<Tensor<T>> codebook_losses;    // per level, ascending factor
    std::vector<Tensor<T>> commitment_losses;  // per level, beta already applied
    typename Hierarchy<T>::Output encoded;
  };

  ArenModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg), build_rng_(seed) {
    cfg_.validate();
    enc_.emplace(store_, cfg_.input_channels, cfg_.width, cfg_.latent_dim, cfg_.codebook_size,
                 cfg_.factors(), cfg_.attention, cfg_.attention_max_pixels, build_rng_);
    enc_->seed_codebook_init(Rng::mix(seed, 0xC0DEB00Cull));
    dec_ = make_decoder(store_, "decoder", cfg_.latent_dim, cfg_.width, cfg_.decoder_stages(),
                        3, build_rng_);
  }

  ForwardResult forward(const Tensor<T>& img, bool training, bool count_usage = false,
                        T beta = T(0.25)) {
    if (img.shape().rank() != 4 || img.shape()[3] != cfg_.input_channels)
      throw ContractError("model: expected (b," + std::to_string(cfg_.resolution) + "," +
                          std::to_string(cfg_.resolution) + "," + std::to_string(cfg_.input_channels) +
                          "), got " + img.shape().str());
    ForwardResult r;
    r.encoded = enc_->encode(img, training, count_usage);
    for (auto& grid : r.encoded.grids) {
      auto [cb_loss, commit] = vq_losses(grid, beta);
      r.codebook_losses.push_back(cb_loss);
      r.commitment_losses.push_back(commit);
    }
    r.recon = dec_.forward(r.encoded.straight[0], training);
    return r;
  }

  Tensor<T> reconstruct(const Tensor<T>& img) { return forward(img, /*training=*/false).recon; }

  Hierarchy<T>& hierarchy() { return *enc_; }
  Decoder<T>& decoder() { return dec_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

  // Per-module trainable parameter counts in build order, for inspect.
  std::vector<std::pair<std::string, int64_t>> param_summary() const {
    std::vector<std::pair<std::string, int64_t>> rows;
    rows.push_back({"base", store_.count_prefix("base.", true)});
    for (const auto& lvl : enc_->levels()) {
      const std::string n = lvl.spec.name();
      rows.push_back({n, store_.count_prefix(n + ".", true)});
      rows.push_back({"codebook." + n, store_.count_prefix("codebook." + n, true)});
    }
    rows.push_back({"decoder", store_.count_prefix("decoder.", true)});
    return rows;
  }

 private:
  ModelConfig cfg_;
  Rng build_rng_;
  ParamStore<T> store_;
  std::optional<Hierarchy<T>> enc_;  // deferred: needs store_ built first
  Decoder<T> dec_;
};

}  // namespace aren
