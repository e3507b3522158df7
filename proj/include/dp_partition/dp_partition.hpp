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

// Umbrella header for the dp_partition library.

#ifndef DP_PARTITION_DP_PARTITION_HPP_
#define DP_PARTITION_DP_PARTITION_HPP_

#include "dp_partition/calibration.hpp"
#include "dp_partition/core.hpp"
#include "dp_partition/ingest.hpp"
#include "dp_partition/normal.hpp"
#include "dp_partition/parallel.hpp"
#include "dp_partition/pipeline.hpp"
#include "dp_partition/random.hpp"
#include "dp_partition/sequential.hpp"
#include "dp_partition/two_round.hpp"
#include "dp_partition/verify.hpp"
#include "dp_partition/weighters.hpp"

#endif  // DP_PARTITION_DP_PARTITION_HPP_
