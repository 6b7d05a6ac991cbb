/*******************************************************************************
 * Copyright 2026 The minitc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *******************************************************************************/

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtc/graph.hpp"
#include "mtc/params.hpp"
#include "mtc/passes.hpp"
#include "mtc/tir.hpp"

namespace mtc {

struct LowerOptions {
  // Emit anchor_probe intrinsics at every spliced anchor site so the
  // interpreter can count anchor invocations.
  bool instrument_anchors = false;
};

struct Lowered {
  tir::Module module;
  // graph tensor id -> module global decl id (inputs, outputs, constants,
  // cache slots, inter-region temporaries)
  std::map<int, int> tensor_global;
  std::vector<std::string> notes;
};

// Lowers the clustered graph to a Tensor IR module: one function per FusedOp
// (the microkernel template nest for tunables, plain loops for standalones),
// an entry function calling them in order, and an optional constant fold
// function filling the cache slots.
Lowered lower_module(const Graph &g, const std::vector<FusedOp> &fused,
                     const std::map<int, MatmulParams> &params,
                     const ConstCachePlan &cplan, const LowerOptions &opt = {});

}  // namespace mtc
