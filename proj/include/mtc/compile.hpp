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
#include <memory>
#include <string>
#include <vector>

#include "mtc/graph.hpp"
#include "mtc/lowering.hpp"
#include "mtc/params.hpp"
#include "mtc/passes.hpp"
#include "mtc/runtime.hpp"
#include "mtc/tir.hpp"

namespace mtc {

struct CompileOptions {
  bool fuse = true;          // fine-grain fusion clustering
  bool coarse = true;        // coarse-grain parallel-loop merging
  bool buffer_reuse = true;  // arena reuse for inter-region temporaries
  bool shrink = true;        // temporary tensor shrinking
  bool instrument_anchors = false;
  MachineModel machine;
};

struct CompiledModule {
  Graph graph;  // after the pass pipeline (owns constant data)
  std::vector<FusedOp> fused;
  std::map<int, MatmulParams> params;
  ConstCachePlan cache_plan;
  tir::Module module;
  tir::BufferPlan plan;
  std::map<int, int> tensor_global;  // graph tensor id -> module global id
  PassPipelineReport report;
  CompileOptions options;
  // Snapshots for --dump-graph / --dump-tir; names: input, decompose,
  // low_precision, layout, const_preprocess / lowered, shrunk, final.
  std::vector<std::pair<std::string, Graph>> stage_graphs;
  std::vector<std::pair<std::string, tir::Module>> stage_modules;

  // Executor with all raw constants pre-bound; inputs/outputs are bound by
  // the caller through tensor_global.
  std::unique_ptr<rt::Executor> make_executor(int num_workers = 1) const;
};

// Runs the full pipeline; throws std::runtime_error on validation failure.
CompiledModule compile(const Graph &g, const CompileOptions &opt = {});

}  // namespace mtc
