//
// Copyright 2026 The dp_partition Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Command-line front end. Commands are plain functions over parsed options so
// they can be exercised in-process by tests as well as through the binary.

#ifndef DP_PARTITION_SRC_CLI_HPP_
#define DP_PARTITION_SRC_CLI_HPP_

namespace dp_partition {
namespace cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerificationFailed = 2;
inline constexpr int kExitIo = 3;

// Parses argv, runs the selected command and returns its exit code. Never
// throws.
int Main(int argc, char** argv);

}  // namespace cli
}  // namespace dp_partition

#endif  // DP_PARTITION_SRC_CLI_HPP_
