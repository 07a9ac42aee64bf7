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

#ifndef LIDARCAM_TOOLS_CLI_COMMANDS_H_
#define LIDARCAM_TOOLS_CLI_COMMANDS_H_

#include <ostream>

#include "cli/config.h"

namespace lidarcam::cli {

// Each returns a process exit code; errors surface as lidarcam::Error.
int RunProject(const RunConfig& config, std::ostream& out);
int RunSimulate(const RunConfig& config, std::ostream& out);
int RunAnalyze(const RunConfig& config, std::ostream& out);
int RunFuseDemo(const RunConfig& config, std::ostream& out);
int RunGradcheck(const RunConfig& config, std::ostream& out);

}  // namespace lidarcam::cli

#endif  // LIDARCAM_TOOLS_CLI_COMMANDS_H_
