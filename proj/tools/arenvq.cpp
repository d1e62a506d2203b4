#include <CLI11.hpp>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aren/checkpoint.hpp"
#include "aren/commands.hpp"
#include "aren/config.hpp"

using namespace aren;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Every dedicated flag funnels through the same section.key override path as
// --set and the config file, so precedence is uniform: defaults, then file,
// then flags in command-line order.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  Overrides overrides;
};

void opt(CLI::App* cmd, ConfigFlags& f, const std::string& flag, const std::string& key,
         const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&f, key](const std::string& v) { f.overrides.emplace_back(key, v); }, help);
}

void onoff(CLI::App* cmd, ConfigFlags& f, const std::string& name, const std::string& key,
           const std::string& help) {
  cmd->add_flag_callback(
      "--" + name, [&f, key] { f.overrides.emplace_back(key, "true"); }, help);
  cmd->add_flag_callback(
      "--no-" + name, [&f, key] { f.overrides.emplace_back(key, "false"); },
      "disable " + name);
}

void add_config_source(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--set", f.sets, "override one section.key=value")->take_all();
}

void add_model_flags(CLI::App* cmd, ConfigFlags& f) {
  opt(cmd, f, "--levels", "model.levels", "hierarchy depth, 1 to 3");
  onoff(cmd, f, "attention", "model.attention", "residual pixel attention");
  opt(cmd, f, "--width", "model.width", "channel width of the residual trunk");
  opt(cmd, f, "--latent-dim", "model.latent_dim", "embedding dimension c");
  opt(cmd, f, "--codebook", "model.codebook_size", "codebook rows K");
}

void add_data_flags(CLI::App* cmd, ConfigFlags& f) {
  opt(cmd, f, "--data", "data.dir", "image folder");
  opt(cmd, f, "--resolution", "data.resolution", "square training resolution");
  opt(cmd, f, "--split", "data.split", "train fraction in (0,1)");
  opt(cmd, f, "--seed", "data.seed", "seed for split, init, and corruption");
}

void add_task_flags(CLI::App* cmd, ConfigFlags& f) {
  opt(cmd, f, "--task", "task.kind", "none, mask, noise, or blur");
  opt(cmd, f, "--mask-fraction", "task.mask_fraction", "fraction of pixels dropped");
  opt(cmd, f, "--noise-sigma", "task.noise_sigma", "noise std as a fraction of range");
  opt(cmd, f, "--blur-sigma-x", "task.blur_sigma_x", "horizontal blur sigma");
  opt(cmd, f, "--blur-sigma-y", "task.blur_sigma_y", "vertical blur sigma");
  opt(cmd, f, "--blur-kx", "task.blur_kx", "horizontal blur taps, odd");
  opt(cmd, f, "--blur-ky", "task.blur_ky", "vertical blur taps, odd");
}

RunConfig build_config(const ConfigFlags& f) {
  RunConfig cfg;
  std::vector<std::string> errors;
  if (!f.config_path.empty()) {
    ConfigParse parsed = parse_config_file(f.config_path);
    cfg = parsed.cfg;
    errors = parsed.errors;
  }
  for (const std::string& s : f.sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      errors.push_back("--set " + s + ": expected section.key=value");
    else
      apply_override(cfg, s.substr(0, eq), s.substr(eq + 1), errors);
  }
  for (const auto& [key, value] : f.overrides) apply_override(cfg, key, value, errors);
  if (!errors.empty()) {
    std::string all = "invalid arguments:";
    for (const auto& e : errors) all += "\n  " + e;
    throw ConfigError(all);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attentive vq-vae for blind pixel masking, denoising, and deblurring"};
  app.require_subcommand(1);
  std::function<int()> action;

  ConfigFlags train_f;
  std::string resume_path;
  CLI::App* train = app.add_subcommand("train", "fit a model and checkpoint every epoch");
  add_config_source(train, train_f);
  add_model_flags(train, train_f);
  add_data_flags(train, train_f);
  add_task_flags(train, train_f);
  opt(train, train_f, "--epochs", "train.epochs", "epoch target");
  opt(train, train_f, "--batch", "train.batch_size", "images per step");
  opt(train, train_f, "--lr", "train.lr", "Adam learning rate");
  opt(train, train_f, "--beta", "train.beta", "commitment weight");
  opt(train, train_f, "--adv-weight", "train.adv_weight", "adversarial loss weight, 0 disables");
  opt(train, train_f, "--out", "output.dir", "output directory");
  train->add_option("--resume", resume_path, "checkpoint to continue from");
  train->callback([&] {
    action = [&] {
      RunConfig cfg = build_config(train_f);
      TrainReport r = run_train(cfg, resume_path);
      std::printf("done: %lld epochs, %lld steps, mae/sigma %.4f, checkpoint %s\n",
                  static_cast<long long>(r.epochs_run), static_cast<long long>(r.steps_run),
                  r.final_mae_over_sigma, r.checkpoint_path.c_str());
      return kExitOk;
    };
  });

  std::string eval_ckpt, eval_data, eval_out = "eval_out";
  CLI::App* eval = app.add_subcommand("eval", "sweep task severity over the held-out split");
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--data", eval_data, "image folder, defaults to the training one");
  eval->add_option("--out", eval_out, "output directory");
  eval->callback([&] {
    action = [&] {
      EvalReport r = run_eval(eval_ckpt, eval_data, eval_out);
      std::printf("wrote %s and %s\n", r.csv_path.c_str(), r.grid_path.c_str());
      return kExitOk;
    };
  });

  std::string restore_ckpt, restore_in, restore_out;
  CLI::App* restore = app.add_subcommand("restore", "run one degraded image through a model");
  restore->add_option("--checkpoint", restore_ckpt, "trained checkpoint")->required();
  restore->add_option("--input", restore_in, "degraded image (PNG or PPM)")->required();
  restore->add_option("--output", restore_out, "restored image path")->required();
  restore->callback([&] {
    action = [&] {
      run_restore(restore_ckpt, restore_in, restore_out);
      std::printf("wrote %s\n", restore_out.c_str());
      return kExitOk;
    };
  });

  ConfigFlags corrupt_f;
  std::string corrupt_in, corrupt_out;
  CLI::App* corrupt = app.add_subcommand("corrupt", "apply a task degradation to one image");
  add_config_source(corrupt, corrupt_f);
  add_task_flags(corrupt, corrupt_f);
  opt(corrupt, corrupt_f, "--seed", "data.seed", "corruption seed");
  corrupt->add_option("--input", corrupt_in, "clean image")->required();
  corrupt->add_option("--output", corrupt_out, "degraded image path")->required();
  corrupt->callback([&] {
    action = [&] {
      run_corrupt(build_config(corrupt_f), corrupt_in, corrupt_out);
      std::printf("wrote %s\n", corrupt_out.c_str());
      return kExitOk;
    };
  });

  ConfigFlags inspect_f;
  std::string inspect_ckpt;
  CLI::App* inspect = app.add_subcommand("inspect", "print architecture parameter accounting");
  add_config_source(inspect, inspect_f);
  add_model_flags(inspect, inspect_f);
  opt(inspect, inspect_f, "--resolution", "data.resolution", "square training resolution");
  opt(inspect, inspect_f, "--task", "task.kind", "task, decides the mask input plane");
  inspect->add_option("--checkpoint", inspect_ckpt, "report a checkpoint's embedded config");
  inspect->callback([&] {
    action = [&] {
      RunConfig cfg;
      if (!inspect_ckpt.empty()) {
        Checkpoint ckpt = load_checkpoint(inspect_ckpt);
        ConfigParse parsed = parse_config_text(ckpt.config_text);
        if (!parsed.errors.empty())
          throw ConfigError("checkpoint " + inspect_ckpt + " carries a bad config: " +
                            parsed.errors[0]);
        cfg = parsed.cfg;
        std::printf("checkpoint %s: %lld tensors, %lld values\n", inspect_ckpt.c_str(),
                    static_cast<long long>(ckpt.entries.size()),
                    static_cast<long long>(ckpt.total_elements()));
      } else {
        cfg = build_config(inspect_f);
      }
      std::fputs(inspect_text(cfg).c_str(), stdout);
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    return action();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  }
}
