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
#include <string>
#include <vector>

#include "mtc/graph.hpp"

namespace mtc {

struct MachineModel {
  int num_cores = 4;
  std::int64_t l1_bytes = 32 * 1024;
  std::int64_t l2_bytes = 1024 * 1024;
  std::int64_t llc_bytes = 32LL * 1024 * 1024;
  // Per-access cost weights by cache level; calibration defaults.
  double w_l1 = 1.0;
  double w_l2 = 4.0;
  double w_llc = 14.0;
  double w_dram = 60.0;
  int vector_lanes = 16;  // f32 lanes
};

// Weight of one access when the streamed working set is ws_bytes large.
double level_cost(std::int64_t ws_bytes, const MachineModel &mm);

// Inner-loop order around the microkernel. MKN is msi->ksi->nsi; MNK swaps
// ksi/nsi for B-heavy shapes.
enum class LoopOrder { MKN, MNK };
const char *loop_order_name(LoopOrder o);

struct MatmulParams {
  std::int64_t M = 1, N = 1, K = 1;  // logical (unpadded) sizes
  std::int64_t MB = 16, NB = 16, KB = 16;
  std::int64_t BS = 1;
  std::int64_t MPN = 1, NPN = 1;  // KPN fixed at 1
  LoopOrder loop_order = LoopOrder::MKN;
  // Derived (Fig-2-style size table), filled by finalize().
  std::int64_t MSN = 1, NSN = 1, KSN = 1;
  std::int64_t padded_m = 1, padded_n = 1, padded_k = 1;

  std::int64_t MSBN() const { return MB * MSN; }
  std::int64_t NSBN() const { return NB * NSN; }
  std::int64_t KSBN() const { return KB * KSN; }
  std::int64_t MPSN() const { return MSN * MPN; }
  std::int64_t NPSN() const { return NSN * NPN; }

  void finalize();  // computes MSN/NSN/KSN and padded sizes
  std::vector<std::string> validate() const;
};

// Exposed pieces of the parameter heuristic so tests can brute-force the
// same candidate grid and cost function.
std::vector<MatmulParams> param_candidates(std::int64_t M, std::int64_t N,
                                           std::int64_t K, DataType dtype,
                                           const MachineModel &mm);
double param_cost(const MatmulParams &p, DataType dtype,
                  const MachineModel &mm);
MatmulParams choose_params(std::int64_t M, std::int64_t N, std::int64_t K,
                           DataType dtype, const MachineModel &mm);

struct DesiredLayouts {
  LayoutDesc a, b, c;
};
// Blocked layout over the last two axes of a rank-`rank` tensor; `swap`
// reverses which block dim is stored outermost in the tail (the B' weight
// layout keeps NB outer: [K/KB, N/NB, NB, KB]).
LayoutDesc blocked_last2(int rank, std::int64_t b0, std::int64_t b1,
                         bool swap = false);
// Blocked layouts: A'=[..,M/MB,K/KB,MB,KB], B'=[..,K/KB,N/NB,NB,KB],
// C'=[..,M/MB,N/NB,MB,NB].
DesiredLayouts desired_layouts(const Graph &g, const Op &matmul,
                               const MatmulParams &p);

enum class AnchorId { Pre1, Pre2, Pre3, Pre4, Pre5, Post1, Post2, Post3 };

inline bool is_pre_anchor(AnchorId a) { return a <= AnchorId::Pre5; }
const char *anchor_name(AnchorId a);

struct AnchorCostRow {
  AnchorId anchor = AnchorId::Pre1;
  std::int64_t invocations_per_core = 1;
  // Element counts; a/b populated for pre anchors, c for post anchors.
  std::int64_t a_working_set = 0, a_total = 0;
  std::int64_t b_working_set = 0, b_total = 0;
  std::int64_t c_working_set = 0, c_total = 0;

  std::int64_t working_set(int operand) const {
    return operand == 0 ? a_working_set : operand == 1 ? b_working_set
                                                       : c_working_set;
  }
  std::int64_t total(int operand) const {
    return operand == 0 ? a_total : operand == 1 ? b_total : c_total;
  }
};

std::vector<AnchorCostRow> anchor_table(const MatmulParams &p);

struct AnchorQuery {
  bool is_pre = false;
  int operand = 2;                     // 0=A, 1=B, 2=C
  std::int64_t elem_size = 4;          // bytes per anchored-slice element
  std::int64_t extra_input_bytes = 0;  // post-op external operand footprint
  bool needs_full_n = false;           // reduction over the n axis
  AnchorId min_anchor = AnchorId::Pre1;  // ordering floor (post chains)
  std::int64_t standalone_elems = 0;   // full-tensor elements for NoFuse cost
};

struct AnchorChoice {
  bool fuse = false;
  AnchorId anchor = AnchorId::Post1;
  double cost = 0.0;
  double no_fuse_cost = 0.0;
};

// Argmin over {side-appropriate anchors >= floor} U {NoFuse} of
//   total_accesses_per_core * level_cost(working_set_bytes)
//   (+ temp-buffer pressure term for pre anchors).
// Ties go to the earliest (outermost) anchor in table order.
AnchorChoice select_anchor(const AnchorQuery &q, const MatmulParams &p,
                           const MachineModel &mm);

// Convenience wrapper matching the pass-side call shape.
AnchorChoice select_anchor(const Graph &g, const Op &fusible, bool is_pre,
                           int operand, AnchorId min_anchor,
                           const MatmulParams &p, const MachineModel &mm);

}  // namespace mtc
