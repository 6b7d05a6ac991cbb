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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtc/graph.hpp"
#include "mtc/params.hpp"

namespace mtc {

struct QuantParams {
  double a_s = 1.0;                 // activation scale
  std::int64_t a_z = 0;             // activation zero point (u8 range)
  std::vector<double> b_s = {1.0};  // weight scale, scalar or per-channel
  double c_s = 1.0;                 // output scale
  std::int64_t c_z = 0;             // output zero point
};

/// Constant-preprocessing extraction result. The fold ops (still referring to
/// tensors of the main graph's tensor table) are lowered into the module's
/// fold function; cache slots are their outputs consumed by the main graph.
struct ConstCachePlan {
  std::vector<Op> fold_ops;                       // topological order
  std::vector<int> fold_inputs;                   // raw constant tensor ids
  std::map<int, std::int64_t> cache_slots;        // tensor id -> bytes

  bool empty() const { return fold_ops.empty(); }
};

struct FusionDecision {
  int tunable_op = -1;
  int fusible_op = -1;
  bool is_pre = false;
  bool fused = false;
  int anchor = -1;  // AnchorId as int when fused
  double cost = 0.0;
  double no_fuse_cost = 0.0;
  std::string reason;
};

struct PassPipelineReport {
  // pass name -> op count after the pass
  std::vector<std::pair<std::string, int>> op_counts;
  std::vector<FusionDecision> fusion_decisions;
  std::vector<int> inserted_reorders;  // op ids
  std::map<int, std::int64_t> cache_slot_sizes;
  std::vector<std::string> notes;
};

const Op *find_op(const Graph &g, int op_id);

// Dead-op elimination, elementwise CSE and trivial algebraic identities
// (x-0, x+0, x*1, x/1); run after every pass.
void cleanup_graph(Graph &g, PassPipelineReport *report = nullptr);

// Rewrites Complex ops (Quantize/Dequantize/Softmax/BiasAdd) into basic ops.
Graph decompose_complex(const Graph &g, PassPipelineReport *report = nullptr);

// Rewrites dequantize->matmul->quantize chains (post-decomposition form) into
// an int8 matmul with s32 accumulation plus zero-point compensation.
Graph low_precision_convert(const Graph &g,
                            PassPipelineReport *report = nullptr);

// Chooses MatmulParams per MatMul, assigns blocked layouts and inserts
// boundary/internal Reorder ops. Fills `params` keyed by MatMul op id.
Graph propagate_layouts(const Graph &g, const MachineModel &mm,
                        std::map<int, MatmulParams> &params,
                        PassPipelineReport *report = nullptr);

// Extracts maximal all-constant subgraphs into the fold plan.
std::pair<Graph, ConstCachePlan> preprocess_constants(
    const Graph &g, PassPipelineReport *report = nullptr);

// Clusters the graph into FusedOps (anchor assignment via select_anchor);
// unfused Fusible ops become standalone single-op FusedOps (anchor -1).
std::vector<FusedOp> fine_grain_fuse(const Graph &g,
                                     const std::map<int, MatmulParams> &params,
                                     const MachineModel &mm,
                                     PassPipelineReport *report = nullptr);

// Flags consecutive FusedOps whose outermost parallel loops can merge.
void mark_coarse_grain(std::vector<FusedOp> &fused, const Graph &g,
                       const std::map<int, MatmulParams> &params);

}  // namespace mtc
