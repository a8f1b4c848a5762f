#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "eqfa/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"frame-averaged shape autoencoders: dataset, training, evaluation"};
  app.require_subcommand(1);

  eqfa::cli::GlobalOptions g;
  app.add_option("--config", g.config_path, "settings file (key = value with [sections])");
  auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out_dir, "output directory (default: out)");

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "train a model, writing checkpoint + loss CSV");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  auto* verify = app.add_subcommand("verify", "run the equivariance property suite");
  eqfa::cli::VerifyOptions v;
  verify->add_option("--trials", v.trials, "trials per property (default 50)");
  verify->add_flag("--inject-bug", v.inject_bug,
                   "average only the first frame element (tests the tester)");
  auto* interp = app.add_subcommand("interp", "interpolate between two encoded shapes");
  auto* bench = app.add_subcommand("bench", "time backbone vs frame-averaged forwards");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return eqfa::cli::cmd_gen(g);
    if (train->parsed()) return eqfa::cli::cmd_train(g);
    if (eval->parsed()) return eqfa::cli::cmd_eval(g);
    if (verify->parsed()) return eqfa::cli::cmd_verify(g, v);
    if (interp->parsed()) return eqfa::cli::cmd_interp(g);
    if (bench->parsed()) return eqfa::cli::cmd_bench(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
