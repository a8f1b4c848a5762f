#pragma once

#include <cstdint>
#include <string>

namespace eqfa::cli {

struct GlobalOptions {
  std::string config_path;  // empty means built-in defaults
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

struct VerifyOptions {
  int trials = 50;
  bool inject_bug = false;  // average over frame element 0 only
};

int cmd_gen(const GlobalOptions& opts);
int cmd_train(const GlobalOptions& opts);
int cmd_eval(const GlobalOptions& opts);
int cmd_verify(const GlobalOptions& opts, const VerifyOptions& vopts);
int cmd_interp(const GlobalOptions& opts);
int cmd_bench(const GlobalOptions& opts);

}  // namespace eqfa::cli
