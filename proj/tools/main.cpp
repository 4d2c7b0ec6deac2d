#include <iostream>

#include <CLI11.hpp>

#include "clld_cli/commands.hpp"

namespace {

using clld::cli::CommandOptions;

void add_common(CLI::App* cmd, CommandOptions& o) {
  cmd->add_option("--config", o.config, "JSON run config");
  cmd->add_option("--seed", o.overrides.seed, "Global seed (wins over the config)");
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_flag("--force", o.force, "Overwrite a non-empty output directory");
  cmd->add_option("--precision", o.overrides.precision, "Float width for pretraining")
      ->check(CLI::IsMember({32, 64}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-similarity contrastive pretraining for lane detection"};
  app.require_subcommand(1);
  CommandOptions o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic lane dataset");
  add_common(gen, o);
  gen->add_option("--count", o.overrides.count, "Number of scenes");

  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  add_common(pre, o);
  pre->add_option("--steps", o.overrides.steps, "Total optimization steps");
  pre->add_option("--alpha", o.overrides.alpha, "Cross-similarity patch side")->check(CLI::PositiveNumber);
  pre->add_option("--resume", o.resume, "Continue from a checkpoint");
  pre->add_option("--data", o.data, "Dataset directory used as the unlabeled corpus");

  auto* ft = app.add_subcommand("finetune", "Fine-tune a lane model and evaluate it");
  add_common(ft, o);
  ft->add_option("--checkpoint", o.checkpoint, "Pretraining checkpoint");
  ft->add_flag("--random-init", o.random_init, "Start from a randomly initialized encoder");
  ft->add_option("--alpha", o.overrides.alpha, "Alpha the checkpoint was trained with");
  ft->add_option("--data", o.data, "Labeled training dataset directory");
  ft->add_option("--eval-data", o.eval_data, "Held-out dataset directory");

  auto* ev = app.add_subcommand("eval", "Evaluate a fine-tuned model");
  add_common(ev, o);
  ev->add_option("--model", o.model, "Fine-tuned model file")->required();
  ev->add_option("--data", o.data, "Dataset directory to evaluate on");

  auto* ab = app.add_subcommand("ablate", "Loss and masking ablation grid");
  add_common(ab, o);
  ab->add_option("--steps", o.overrides.steps, "Pretraining steps per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) clld::cli::cmd_gen_data(o, std::cout);
    else if (pre->parsed()) clld::cli::cmd_pretrain(o, std::cout);
    else if (ft->parsed()) clld::cli::cmd_finetune_eval(o, std::cout);
    else if (ev->parsed()) clld::cli::cmd_eval(o, std::cout);
    else if (ab->parsed()) clld::cli::cmd_ablate(o, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return clld::cli::exit_code_for(e);
  }
  return 0;
}
