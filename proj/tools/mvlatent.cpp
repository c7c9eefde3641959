// mvlatent: multi-view deep generative learning from the command line.
//
// Subcommands: gen-data, train, eval, reconstruct, traverse, sweep-mu.
// Exit codes: 0 success, 2 config error, 3 numerical abort, 4 I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "mvlatent/cli.hpp"

namespace {

using namespace mvlatent;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::int64_t seed = -1;
};

cli::RunConfig resolve_config(const CommonArgs& args) {
  cli::RunConfig cfg = cli::load_run_config(args.config_path);
  if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_checkpoint = false) {
  cmd->add_option("--config", args.config_path, "Run configuration (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir, "Output directory (overrides out.dir)");
  cmd->add_option("--seed", args.seed, "Seed override (overrides train.seed)");
  auto* ckpt = cmd->add_option("--checkpoint", args.checkpoint,
                               "Checkpoint directory");
  if (needs_checkpoint) ckpt->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view variational latent-variable models"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, recon_args, trav_args, sweep_args;
  std::string recon_out = "reconstruction.pgm";
  std::string trav_out = "traversal.pgm";
  std::string mu_list_arg;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a two-view dataset");
  add_common(gen, gen_args);

  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_common(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate checkpoint features");
  add_common(eval, eval_args, true);

  CLI::App* recon = app.add_subcommand("reconstruct",
                                       "Write a view-2 reconstruction grid");
  add_common(recon, recon_args, true);
  recon->add_option("--image", recon_out, "Output PGM path");

  CLI::App* trav = app.add_subcommand("traverse",
                                      "Write a private-variable traversal grid");
  add_common(trav, trav_args, true);
  trav->add_option("--image", trav_out, "Output PGM path");

  CLI::App* sweep = app.add_subcommand("sweep-mu", "Train/evaluate across mu values");
  add_common(sweep, sweep_args);
  sweep->add_option("--mu-list", mu_list_arg,
                    "Comma-separated mu values (default from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const cli::RunConfig cfg = resolve_config(gen_args);
      cli::cmd_gen_data(cfg, cfg.out_dir);
      std::cout << "dataset written to " << cfg.out_dir.string() << "\n";
    } else if (train->parsed()) {
      const cli::RunConfig cfg = resolve_config(train_args);
      const auto outcome = cli::cmd_train(cfg, train_args.checkpoint);
      std::printf("trained: first total %.6f, final total %.6f -> %s\n",
                  outcome.first_total, outcome.last_total,
                  outcome.run_dir.string().c_str());
    } else if (eval->parsed()) {
      const cli::RunConfig cfg = resolve_config(eval_args);
      std::cout << cli::cmd_eval(cfg, eval_args.checkpoint);
    } else if (recon->parsed()) {
      const cli::RunConfig cfg = resolve_config(recon_args);
      cli::cmd_reconstruct(cfg, recon_args.checkpoint, recon_out);
      std::cout << "wrote " << recon_out << "\n";
    } else if (trav->parsed()) {
      const cli::RunConfig cfg = resolve_config(trav_args);
      cli::cmd_traverse(cfg, trav_args.checkpoint, trav_out);
      std::cout << "wrote " << trav_out << "\n";
    } else if (sweep->parsed()) {
      const cli::RunConfig cfg = resolve_config(sweep_args);
      std::vector<double> mu_list = cfg.sweep_mu;
      if (!mu_list_arg.empty()) {
        mu_list.clear();
        std::stringstream ss(mu_list_arg);
        std::string item;
        while (std::getline(ss, item, ',')) mu_list.push_back(std::stod(item));
      }
      std::cout << cli::cmd_sweep_mu(cfg, mu_list);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
