/*
 * Copyright 2026 The lidarcam Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli/cli.h"

#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli/commands.h"
#include "cli/config.h"
#include "lidarcam/calib_io.h"
#include "lidarcam/error.h"

namespace lidarcam::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string seed;
  std::string threads;
  std::vector<std::string> overrides;
};

RunConfig Resolve(const CommonFlags& flags) {
  RunConfig config;
  if (!flags.config.empty()) {
    const std::filesystem::path path(flags.config);
    const auto values = ParseKeyValues(calib::ReadTextFile(path));
    ApplyKeyValues(values, path.parent_path(), config);
  }
  for (const auto& entry : flags.overrides) {
    ApplyKeyValues(ParseKeyValues(entry), {}, config);
  }
  std::map<std::string, std::string> explicit_flags;
  if (!flags.out.empty()) explicit_flags["out"] = flags.out;
  if (!flags.seed.empty()) explicit_flags["seed"] = flags.seed;
  if (!flags.threads.empty()) explicit_flags["threads"] = flags.threads;
  ApplyKeyValues(explicit_flags, {}, config);
  Validate(config);
  return config;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"LiDAR-to-camera projection, timing simulation and "
               "misalignment analysis"};
  app.name("lidarcam");
  app.require_subcommand(1);

  CommonFlags flags;
  using Command = std::function<int(const RunConfig&, std::ostream&)>;
  std::map<CLI::App*, Command> commands;
  auto add = [&](const char* name, const char* help, Command command) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "key = value config file");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "root seed (unsigned 64-bit)");
    sub->add_option("--threads", flags.threads, "worker threads, 0 = auto");
    sub->add_option("--set", flags.overrides,
                    "override one config key, e.g. --set speed=0");
    commands[sub] = std::move(command);
  };
  add("project", "project a sweep into a camera image", RunProject);
  add("simulate", "synthesize a sweep with known ground truth", RunSimulate);
  add("analyze", "score a projection against ground truth", RunAnalyze);
  add("fuse-demo", "train offsets on the toy shift-recovery task", RunFuseDemo);
  add("gradcheck", "finite-difference check of the fusion gradients",
      RunGradcheck);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    const RunConfig config = Resolve(flags);
    for (const auto& [sub, command] : commands) {
      if (sub->parsed()) return command(config, out);
    }
    return kExitInputError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kDivergedLoss ? kExitDiverged
                                                : kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace lidarcam::cli
