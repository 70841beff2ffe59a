// SPDX-License-Identifier: Apache-2.0
// vidpred: dataset generation, training, evaluation, rollout, gradient
// checking and ablations for the next-frame predictor.
#include <CLI11.hpp>

#include <iostream>

#include "vp/commands.hpp"
#include "vp/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kNumeric = 2, kIo = 3 };

template <typename T>
void set_optional(CLI::App* app, const char* flag, std::optional<T>& target, const char* help) {
  app->add_option_function<T>(flag, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-filtered, context-propagating next-frame video predictor"};
  app.require_subcommand(1);

  vp::GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a moving-shapes dataset");
  set_optional(gen_cmd, "--config", gen.config, "Run config file");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  set_optional(gen_cmd, "--sequences", gen.sequences, "Number of sequences");
  set_optional(gen_cmd, "--length", gen.length, "Frames per sequence");
  set_optional(gen_cmd, "--seed", gen.seed, "Data seed");

  vp::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset directory");
  set_optional(train_cmd, "--config", train.config, "Run config file (default: the dataset's)");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  set_optional(train_cmd, "--seed", train.seed, "Training seed");
  set_optional(train_cmd, "--epochs", train.epochs, "Override epoch count");
  set_optional(train_cmd, "--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--stop-after", train.stop_after, "Stop once this many epochs are complete");

  vp::EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Next-frame metrics per sequence");
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--report", eval.report, "Report CSV path")->required();
  eval_cmd->add_flag("--self-eval", eval.self_eval, "Score targets against themselves");
  eval_cmd->add_flag("--timing", eval.timing, "Print forward-pass timing");

  vp::RolloutOptions roll;
  auto* roll_cmd = app.add_subcommand("rollout", "Recursive multi-step prediction");
  roll_cmd->add_option("--ckpt", roll.ckpt, "Checkpoint")->required();
  roll_cmd->add_option("--seed-frames", roll.seed_frames, "Directory of seed frames")->required();
  roll_cmd->add_option("--steps", roll.steps, "Frames to predict")->capture_default_str();
  set_optional(roll_cmd, "--context", roll.context, "Seed frames used (default: window length)");
  roll_cmd->add_option("--out", roll.out, "Output directory")->required();

  vp::GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  set_optional(grad_cmd, "--config", grad.config, "Run config file");
  grad_cmd->add_option("--seed", grad.seed, "Seed")->capture_default_str();
  grad_cmd->add_flag("--corrupt-backward", grad.corrupt_backward, "Inject a backward fault (negative control)");

  vp::AblateOptions ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train every ablation variant over several seeds");
  set_optional(ablate_cmd, "--config", ablate.config, "Run config file (default: the dataset's)");
  ablate_cmd->add_option("--data", ablate.data, "Dataset directory")->required();
  ablate_cmd->add_option("--out", ablate.out, "Output directory")->required();
  ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds per variant")->capture_default_str();
  ablate_cmd->add_option("--seed", ablate.base_seed, "First seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) vp::cmd_gen(gen, std::cout);
    if (*train_cmd) vp::cmd_train(train, std::cout);
    if (*eval_cmd) vp::cmd_eval(eval, std::cout);
    if (*roll_cmd) vp::cmd_rollout(roll, std::cout);
    if (*grad_cmd && !vp::cmd_gradcheck(grad, std::cout)) return kNumeric;
    if (*ablate_cmd) vp::cmd_ablate(ablate, std::cout);
  } catch (const vp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const vp::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const vp::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const vp::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
