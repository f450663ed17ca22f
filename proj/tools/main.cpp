// unirobust <command> --config <path> [--seed N] [--out DIR] [--override key=value]...

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unirobust/unirobust.h"

int main(int argc, char** argv) {
  CLI::App app{"Unitary-constrained transformer training, attacks and diagnostics"};
  app.set_version_flag("--version", ur_version());

  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  app.add_option("command", command, "pretrain | finetune | attack | analyze | sweep | ablation | synth")->required();
  app.add_option("--config", config, "INI config file")->required();
  app.add_option("--seed", seed, "overrides run.seed");
  app.add_option("--out", out, "overrides run.out");
  app.add_option("--override", overrides, "section.key=value, repeatable");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(UR_ERR_USAGE);
  }

  std::vector<const char*> raw;
  for (const auto& o : overrides) raw.push_back(o.c_str());
  const std::uint64_t seed_value = seed.value_or(0);
  const ur_status status = ur_run(command.c_str(), config.c_str(), seed ? &seed_value : nullptr,
                                  out.empty() ? nullptr : out.c_str(), raw.data(), raw.size());
  if (status != UR_OK) {
    std::fprintf(stderr, "unirobust: %s: %s\n", ur_status_name(status), ur_last_error());
    return static_cast<int>(status);
  }
  return 0;
}
