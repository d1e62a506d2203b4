#include "aren/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aren/adversarial.hpp"
#include "aren/checkpoint.hpp"
#include "aren/dataset.hpp"
#include "aren/degrade.hpp"
#include "aren/image.hpp"
#include "aren/metrics.hpp"
#include "aren/model.hpp"
#include "aren/ops.hpp"

namespace aren {
namespace {

namespace fs = std::filesystem;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("short write to " + path);
}

void require_valid(const RunConfig& cfg, bool need_data) {
  auto errs = validate_config(cfg, need_data);
  if (errs.empty()) return;
  std::string all = "invalid config:";
  for (const auto& e : errs) all += "\n  " + e;
  throw ConfigError(all);
}

struct PreparedBatch {
  Tensor<float> input;   // what the model sees, 3 or 4 channels
  Tensor<float> target;  // clean RGB
  Tensor<float> shown;   // RGB view of the degraded input, for grids
};

PreparedBatch prepare_batch(const Tensor<float>& clean, const RunConfig& cfg, uint64_t seed) {
  PreparedBatch out;
  out.target = clean;
  if (cfg.task == "none") {
    out.input = clean;
    out.shown = clean;
    return out;
  }
  Degraded<float> d = apply_degrade(cfg.degrade_spec(seed), clean);
  out.shown = d.img;
  out.input = cfg.task == "mask" ? concat_channels(d.img, *d.mask) : d.img;
  return out;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw NumericError("non-finite " + std::string(what) + " (" + std::to_string(v) + ")");
}

std::string active_codes_text(Hierarchy<float>& h) {
  std::string s;
  for (auto& lvl : h.levels()) {
    if (!s.empty()) s += '/';
    s += std::to_string(active_count(*lvl.codebook));
  }
  return s;
}

// Training pieces shared by fresh and resumed runs.
struct TrainSetup {
  RunConfig cfg;
  TrainState state;
  bool resumed = false;
  Checkpoint from;  // only meaningful when resumed
};

TrainSetup setup_train(const RunConfig& user_cfg, const std::string& resume_path) {
  TrainSetup s;
  s.cfg = user_cfg;
  if (resume_path.empty()) return s;

  s.resumed = true;
  s.from = load_checkpoint(resume_path);
  ConfigParse parsed = parse_config_text(s.from.config_text);
  if (!parsed.errors.empty())
    throw ConfigError("checkpoint " + resume_path + " carries a bad config: " + parsed.errors[0]);
  if (!parsed.has_state)
    throw ConfigError("checkpoint " + resume_path + " has no training state to resume from");
  // The checkpoint owns the architecture and task; the caller may move the
  // data, pick a new output dir, and extend the epoch target.
  RunConfig cfg = parsed.cfg;
  if (!user_cfg.data_dir.empty()) cfg.data_dir = user_cfg.data_dir;
  cfg.output_dir = user_cfg.output_dir;
  cfg.epochs = user_cfg.epochs;
  s.cfg = cfg;
  s.state = parsed.state;
  return s;
}

// Stacks images[first .. first+count) without wrapping.
Tensor<float> stack_range(const std::vector<Tensor<float>>& images, size_t first, size_t count) {
  const Shape& one = images[first].shape();
  Shape out_shape{static_cast<int64_t>(count), one[1], one[2], one[3]};
  std::vector<float> v;
  v.reserve(static_cast<size_t>(out_shape.numel()));
  for (size_t i = first; i < first + count; ++i) {
    const auto& src = images[i].vec();
    v.insert(v.end(), src.begin(), src.end());
  }
  return Tensor<float>::from_data(out_shape, std::move(v));
}

std::vector<double> sweep_values(const std::string& task) {
  if (task == "mask") return {0.3, 0.4, 0.5, 0.6, 0.7};
  if (task == "noise") return {0.2, 0.3, 0.4};
  if (task == "blur") return {3.0, 5.0, 8.0};
  return {0.0};
}

RunConfig with_sweep_value(const RunConfig& cfg, double value) {
  RunConfig out = cfg;
  if (cfg.task == "mask")
    out.mask_fraction = value;
  else if (cfg.task == "noise")
    out.noise_sigma = value;
  else if (cfg.task == "blur")
    out.blur_sigma_y = value;
  return out;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e)) return kExitData;
  return kExitConfig;  // ConfigError, ContractError, anything else user-shaped
}

TrainReport run_train(const RunConfig& user_cfg, const std::string& resume_path) {
  TrainSetup setup = setup_train(user_cfg, resume_path);
  RunConfig& cfg = setup.cfg;
  TrainState& state = setup.state;
  require_valid(cfg, /*need_data=*/true);

  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir + "/config.ini", serialize_config(cfg));

  Dataset ds = load_dataset(cfg.data_dir, cfg.resolution, cfg.split, cfg.seed);
  if (!setup.resumed) state.sigma_data = ds.pixel_std;
  if (!(state.sigma_data > 0.0))
    throw NumericError("training pixels have zero variance, MAE/sigma is undefined");
  const double sigma = state.sigma_data;

  ArenModel<float> model(cfg.model_config(), cfg.seed);
  ParamStore<float> disc_store;
  Rng disc_rng(Rng::mix(cfg.seed, 0xD15Cull));
  Discriminator<float> disc = make_discriminator(disc_store, "disc", 3, disc_rng);
  Adam<float> gen_opt(AdamConfig<float>{static_cast<float>(cfg.lr)});
  Adam<float> disc_opt(AdamConfig<float>{static_cast<float>(cfg.lr)});

  if (setup.resumed) {
    restore_store(setup.from, model.params());
    restore_store(setup.from, disc_store);
    restore_adam(setup.from, "gen", gen_opt, model.params());
    restore_adam(setup.from, "disc", disc_opt, disc_store);
    gen_opt.set_step_count(state.gen_steps);
    disc_opt.set_step_count(state.disc_steps);
    // Codebooks came from the checkpoint; the lazy data-driven init must not
    // overwrite them on the first resumed batch.
    if (state.gen_steps > 0) model.hierarchy().set_codebooks_ready(true);
  }

  const int64_t n = static_cast<int64_t>(ds.train.size());
  const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  TrainReport report;
  report.checkpoint_path = cfg.output_dir + "/model.ckpt";
  report.log_path = cfg.output_dir + "/train_log.csv";

  std::ofstream log(report.log_path, setup.resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + report.log_path);
  if (!setup.resumed)
    log << "epoch,mae_over_sigma,recon_l1,vq_loss,adv_g,adv_d,active_codes,seconds\n";

  for (int64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(n, cfg.seed, epoch);
    for (auto& lvl : model.hierarchy().levels()) lvl.codebook->reset_usage();

    double sum_l1 = 0.0, sum_vq = 0.0, sum_g = 0.0, sum_d = 0.0;
    const auto run_step = [&](int64_t s, int64_t gstep) {
      Tensor<float> clean = make_batch(ds.train, order, s * cfg.batch_size, cfg.batch_size);
      PreparedBatch batch = prepare_batch(
          clean, cfg, Rng::mix(cfg.seed, kDegradeStream, static_cast<uint64_t>(gstep)));

      auto fwd = model.forward(batch.input, /*training=*/true, /*count_usage=*/true,
                               static_cast<float>(cfg.beta));
      Tensor<float> recon_l1 = l1_loss(fwd.recon, batch.target);
      Tensor<float> gen_loss = recon_l1;
      double vq_val = 0.0;
      for (auto& t : fwd.codebook_losses) {
        vq_val += static_cast<double>(t.vec()[0]);
        gen_loss = add(gen_loss, t);
      }
      for (auto& t : fwd.commitment_losses) {
        vq_val += static_cast<double>(t.vec()[0]);
        gen_loss = add(gen_loss, t);
      }

      double g_adv_val = 0.0, d_val = 0.0;
      if (cfg.adv_weight > 0.0) {
        Tensor<float> fake_logits = disc.forward(fwd.recon, /*training=*/true);
        Tensor<float> g_adv =
            bce_with_logits(fake_logits, Tensor<float>::filled(fake_logits.shape(), 1.0f));
        g_adv_val = static_cast<double>(g_adv.vec()[0]);
        gen_loss = add(gen_loss, scale(g_adv, static_cast<float>(cfg.adv_weight)));
      }

      const double l1_val = static_cast<double>(recon_l1.vec()[0]);
      require_finite(l1_val, "reconstruction loss");
      require_finite(vq_val, "quantizer loss");
      require_finite(g_adv_val, "generator adversarial loss");
      gen_loss.backward();
      gen_opt.step(model.params());

      if (cfg.adv_weight > 0.0) {
        // The generator pass backpropagated into the discriminator too;
        // clear that before its own update.
        for (auto& e : disc_store.entries()) e.tensor.zero_grad();
        Tensor<float> real_logits = disc.forward(batch.target, /*training=*/true);
        Tensor<float> fake_detached =
            Tensor<float>::from_data(fwd.recon.shape(), fwd.recon.vec());
        Tensor<float> fake_logits = disc.forward(fake_detached, /*training=*/true);
        auto [d_loss, g_unused] = gan_losses(real_logits, fake_logits);
        (void)g_unused;
        d_val = static_cast<double>(d_loss.vec()[0]);
        require_finite(d_val, "discriminator loss");
        d_loss.backward();
        disc_opt.step(disc_store);
      }

      sum_l1 += l1_val;
      sum_vq += vq_val;
      sum_g += g_adv_val;
      sum_d += d_val;
      ++report.steps_run;
    };
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const int64_t gstep = epoch * steps_per_epoch + s;
      try {
        run_step(s, gstep);
      } catch (const NumericError& e) {
        // Every numeric abort names the step it happened on.
        throw NumericError("step " + std::to_string(gstep) + ": " + e.what());
      }
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double mean_l1 = sum_l1 / static_cast<double>(steps_per_epoch);
    const double mae_sigma = mean_l1 / sigma;
    const std::string active = active_codes_text(model.hierarchy());
    std::printf("epoch %lld/%lld  mae/sigma %.4f  l1 %.4f  vq %.4f  adv_g %.4f  adv_d %.4f  "
                "active %s  %.2fs\n",
                static_cast<long long>(epoch + 1), static_cast<long long>(cfg.epochs), mae_sigma,
                mean_l1, sum_vq / steps_per_epoch, sum_g / steps_per_epoch,
                sum_d / steps_per_epoch, active.c_str(), secs);
    std::fflush(stdout);
    log << epoch + 1 << ',' << mae_sigma << ',' << mean_l1 << ',' << sum_vq / steps_per_epoch
        << ',' << sum_g / steps_per_epoch << ',' << sum_d / steps_per_epoch << ',' << active
        << ',' << secs << '\n';
    log.flush();

    state.epoch = epoch + 1;
    state.gen_steps = gen_opt.step_count();
    state.disc_steps = disc_opt.step_count();
    state.rng_state = cfg.seed;
    Checkpoint ckpt;
    ckpt.config_text = serialize_config_with_state(cfg, state);
    append_store(ckpt, model.params());
    append_store(ckpt, disc_store);
    append_adam(ckpt, "gen", gen_opt, model.params());
    append_adam(ckpt, "disc", disc_opt, disc_store);
    save_checkpoint(ckpt, report.checkpoint_path);

    ++report.epochs_run;
    report.final_mae_over_sigma = mae_sigma;
    report.final_recon_l1 = mean_l1;
  }
  return report;
}

EvalReport run_eval(const std::string& checkpoint_path, const std::string& data_dir_override,
                    const std::string& output_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ConfigParse parsed = parse_config_text(ckpt.config_text);
  if (!parsed.errors.empty())
    throw ConfigError("checkpoint " + checkpoint_path + " carries a bad config: " +
                      parsed.errors[0]);
  if (!parsed.has_state)
    throw ConfigError("checkpoint " + checkpoint_path + " has no training state");
  RunConfig cfg = parsed.cfg;
  if (!data_dir_override.empty()) cfg.data_dir = data_dir_override;
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  require_valid(cfg, /*need_data=*/true);
  const double sigma = parsed.state.sigma_data;
  if (!(sigma > 0.0))
    throw NumericError("checkpoint sigma_data is " + std::to_string(sigma) +
                       ", metrics are undefined");

  ArenModel<float> model(cfg.model_config(), cfg.seed);
  restore_store(ckpt, model.params());
  model.hierarchy().set_codebooks_ready(true);

  Dataset ds = load_dataset(cfg.data_dir, cfg.resolution, cfg.split, cfg.seed);
  if (ds.test.empty())
    throw IoError("no held-out images: split " + std::to_string(cfg.split) + " left the test set empty");
  const int64_t n_test = static_cast<int64_t>(ds.test.size());

  fs::create_directories(cfg.output_dir);
  EvalReport report;
  report.csv_path = cfg.output_dir + "/metrics.csv";
  report.grid_path = cfg.output_dir + "/samples.png";

  std::ostringstream csv;
  csv << "task,param,psnr_db,ssim,mae_over_sigma,n_images\n";

  const auto values = sweep_values(cfg.task);
  const int64_t pixels_per_image = cfg.resolution * cfg.resolution * 3;
  for (size_t vi = 0; vi < values.size(); ++vi) {
    const RunConfig sweep_cfg = with_sweep_value(cfg, values[vi]);
    double sse = 0.0, ssim_sum = 0.0, mae_sum = 0.0;
    for (int64_t start = 0; start < n_test; start += cfg.batch_size) {
      const int64_t count = std::min<int64_t>(cfg.batch_size, n_test - start);
      Tensor<float> clean =
          stack_range(ds.test, static_cast<size_t>(start), static_cast<size_t>(count));
      const uint64_t seed = Rng::mix(Rng::mix(cfg.seed, kEvalStream, vi), static_cast<uint64_t>(start));
      PreparedBatch batch = prepare_batch(clean, sweep_cfg, seed);
      Tensor<float> recon = model.forward(batch.input, /*training=*/false).recon;

      sse += mse(recon, batch.target) * static_cast<double>(count * pixels_per_image);
      ssim_sum += ssim(recon, batch.target) * static_cast<double>(count);
      mae_sum += mae_over_sigma(recon, batch.target, sigma) * static_cast<double>(count);

      if (vi == 0 && start == 0) {
        const int64_t rows = std::min<int64_t>(count, 4);
        std::vector<Tensor<float>> cols;
        for (const Tensor<float>& t : {batch.shown, recon, batch.target}) {
          std::vector<float> head(t.vec().begin(),
                                  t.vec().begin() + rows * pixels_per_image);
          cols.push_back(Tensor<float>::from_data(
              Shape{rows, cfg.resolution, cfg.resolution, 3}, std::move(head)));
        }
        emit_grid(cols, report.grid_path);
      }
    }
    const double pooled_mse = sse / static_cast<double>(n_test * pixels_per_image);
    EvalRow row;
    row.task = cfg.task;
    row.param = values[vi];
    row.psnr_db = pooled_mse <= 0.0 ? kPsnrCap
                                    : std::min(kPsnrCap, 10.0 * std::log10(1.0 / pooled_mse));
    row.ssim = ssim_sum / static_cast<double>(n_test);
    row.mae_over_sigma = mae_sum / static_cast<double>(n_test);
    row.n_images = n_test;
    report.rows.push_back(row);

    char line[160];
    std::snprintf(line, sizeof line, "%s,%g,%.6f,%.6f,%.6f,%lld\n", row.task.c_str(), row.param,
                  row.psnr_db, row.ssim, row.mae_over_sigma,
                  static_cast<long long>(row.n_images));
    csv << line;
    std::fputs(line, stdout);
  }
  write_text(report.csv_path, csv.str());
  return report;
}

void run_restore(const std::string& checkpoint_path, const std::string& input_path,
                 const std::string& output_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ConfigParse parsed = parse_config_text(ckpt.config_text);
  if (!parsed.errors.empty())
    throw ConfigError("checkpoint " + checkpoint_path + " carries a bad config: " +
                      parsed.errors[0]);
  const RunConfig& cfg = parsed.cfg;

  ArenModel<float> model(cfg.model_config(), cfg.seed);
  restore_store(ckpt, model.params());
  model.hierarchy().set_codebooks_ready(true);

  ImageU8 raw = load_image(input_path);
  const int64_t want_ch = model.config().input_channels;
  if (want_ch == 4 && raw.channels != 4)
    throw IoError("restore: this model fills in masked pixels and needs the keep mask in the "
                  "alpha plane, but " + input_path + " has no alpha channel");
  if (raw.h != cfg.resolution || raw.w != cfg.resolution) {
    std::fprintf(stderr, "warning: %s is %lldx%lld, crop-resizing to %lldx%lld\n",
                 input_path.c_str(), static_cast<long long>(raw.w),
                 static_cast<long long>(raw.h), static_cast<long long>(cfg.resolution),
                 static_cast<long long>(cfg.resolution));
    raw = center_crop_resize(raw, cfg.resolution);
  }

  Tensor<float> input = tensor_from_image(raw, want_ch);
  Tensor<float> recon = model.forward(input, /*training=*/false).recon;
  save_image(output_path, image_from_tensor(recon, 0));
}

void run_corrupt(const RunConfig& cfg, const std::string& input_path,
                 const std::string& output_path) {
  if (cfg.task == "none")
    throw ConfigError("corrupt: task.kind must be mask, noise, or blur");
  DegradeSpec spec = cfg.degrade_spec(cfg.seed);
  spec.validate();

  Tensor<float> img = tensor_from_image(load_image(input_path), 3);
  Degraded<float> d = apply_degrade(spec, img);
  Tensor<float> out = d.mask ? concat_channels(d.img, *d.mask) : d.img;
  save_image(output_path, image_from_tensor(out, 0));
}

std::string inspect_text(const RunConfig& cfg) {
  require_valid(cfg, /*need_data=*/false);
  ArenModel<float> model(cfg.model_config(), cfg.seed);
  const ModelConfig& mc = model.config();

  std::ostringstream o;
  o << "resolution " << mc.resolution << ", input channels " << mc.input_channels << ", width "
    << mc.width << ", latent dim " << mc.latent_dim << ", codebook size " << mc.codebook_size
    << "\n";
  o << "levels " << mc.levels << ", attention " << (mc.attention ? "on" : "off") << "\n";
  for (const auto& lvl : model.hierarchy().levels()) {
    const int64_t grid = (mc.resolution / 4) / lvl.spec.factor;
    o << "  " << lvl.spec.name() << " latent grid " << grid << "x" << grid << "\n";
  }
  o << "\nper-module trainable parameters\n";
  for (const auto& [name, count] : model.param_summary())
    o << "  " << name << "  " << count << "\n";

  const int64_t gen_total = model.params().count(/*trainable_only=*/true);
  const int64_t disc_total = discriminator_param_count(3);
  o << "\ngenerator_total " << gen_total << "\n";
  o << "discriminator_total " << disc_total << "\n";
  o << "total_trainable " << gen_total + disc_total << "\n";
  return o.str();
}

}  // namespace aren
