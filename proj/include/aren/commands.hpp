#pragma once

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include "aren/config.hpp"

namespace aren {

// Process exit codes: success, bad configuration, unusable data, numeric
// failure (non-finite loss, degenerate statistics).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

int exit_code_for(const std::exception& e);

// RNG stream tag for held-out evaluation corruptions.
inline constexpr uint64_t kEvalStream = 5;

struct TrainReport {
  int64_t epochs_run = 0;
  int64_t steps_run = 0;
  double final_mae_over_sigma = 0.0;
  double final_recon_l1 = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

// Trains from cfg, or continues from resume_path (the checkpoint's embedded
// config then defines the architecture and task; cfg contributes data.dir,
// output.dir, and the new epoch target). Writes the effective config, a
// per-epoch CSV log, and a checkpoint after every epoch into cfg.output_dir.
TrainReport run_train(const RunConfig& cfg, const std::string& resume_path = "");

struct EvalRow {
  std::string task;
  double param = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mae_over_sigma = 0.0;
  int64_t n_images = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string csv_path;
  std::string grid_path;
};

// Sweeps the trained task's severity over the held-out split: mask fractions
// 0.3..0.7, noise sigmas 0.2..0.4, or blur sigma_y in {3,5,8}. Writes
// metrics.csv and a degraded/restored/target sample grid into output_dir.
EvalReport run_eval(const std::string& checkpoint_path, const std::string& data_dir_override,
                    const std::string& output_dir);

// Runs one image through a trained model. The input is treated as already
// degraded; mask-trained models require an alpha plane carrying the keep
// mask. Off-resolution inputs are crop-resized with a warning.
void run_restore(const std::string& checkpoint_path, const std::string& input_path,
                 const std::string& output_path);

// Applies cfg's task degradation to one image at its native size. Mask
// output is RGBA with the keep mask in alpha, so it feeds straight back into
// run_restore.
void run_corrupt(const RunConfig& cfg, const std::string& input_path,
                 const std::string& output_path);

// Architecture accounting: per-module trainable parameter counts, latent grid
// sizes, generator and discriminator totals. Ends with machine-readable
// `generator_total N` / `discriminator_total N` / `total_trainable N` lines.
std::string inspect_text(const RunConfig& cfg);

}  // namespace aren
