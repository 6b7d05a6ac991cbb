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

#include "mtc/params.hpp"

#include <algorithm>
#include <tuple>

namespace mtc {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

double level_cost(std::int64_t ws_bytes, const MachineModel &mm) {
  if (ws_bytes <= mm.l1_bytes) return mm.w_l1;
  if (ws_bytes <= mm.l2_bytes) return mm.w_l2;
  if (ws_bytes <= mm.llc_bytes) return mm.w_llc;
  return mm.w_dram;
}

const char *loop_order_name(LoopOrder o) {
  return o == LoopOrder::MKN ? "mkn" : "mnk";
}

void MatmulParams::finalize() {
  MSN = ceil_div(ceil_div(M, MB), MPN);
  NSN = ceil_div(ceil_div(N, NB), NPN);
  KSN = ceil_div(K, KB);
  padded_m = MB * MSN * MPN;
  padded_n = NB * NSN * NPN;
  padded_k = KB * KSN;
}

std::vector<std::string> MatmulParams::validate() const {
  std::vector<std::string> errs;
  for (auto v : {M, N, K, MB, NB, KB, BS, MPN, NPN, MSN, NSN, KSN})
    if (v < 1) errs.push_back("matmul params: all parameters must be >= 1");
  if (KSN % BS != 0) errs.push_back("matmul params: KSN not divisible by BS");
  if (padded_m != MB * MSN * MPN || padded_n != NB * NSN * NPN ||
      padded_k != KB * KSN)
    errs.push_back("matmul params: derived sizes inconsistent");
  return errs;
}

namespace {

std::vector<std::int64_t> block_candidates(std::int64_t dim, int lanes,
                                           bool is_n) {
  std::int64_t padded_cap = ceil_div(dim, 16) * 16;
  std::vector<std::int64_t> out;
  for (std::int64_t b : {16, 32, 64}) {
    if (b > padded_cap) continue;
    if (is_n && lanes > 0 && b % lanes != 0) continue;
    out.push_back(b);
  }
  if (out.empty()) out.push_back(16);
  return out;
}

std::int64_t pick_bs(std::int64_t MB, std::int64_t NB, std::int64_t KB,
                     std::int64_t KSN, std::int64_t esize,
                     const MachineModel &mm) {
  // Largest BS keeping the microkernel inputs plus accumulator in half of L1.
  std::int64_t bs_cap = 1;
  for (std::int64_t bs = 1; bs <= KSN; ++bs) {
    if ((MB * KB + NB * KB) * esize * bs + MB * NB * 4 > mm.l1_bytes / 2) break;
    bs_cap = bs;
  }
  std::int64_t bs = 1;
  for (std::int64_t d = 1; d <= bs_cap; ++d)
    if (KSN % d == 0) bs = d;
  return bs;
}

}  // namespace

std::vector<MatmulParams> param_candidates(std::int64_t M, std::int64_t N,
                                           std::int64_t K, DataType dtype,
                                           const MachineModel &mm) {
  std::int64_t esize = static_cast<std::int64_t>(dtype_size(dtype));
  // Full-utilization core grids only, and of those at most the two with the
  // least padding waste: keeps the exhaustive grid at <= 2 * 27 candidates.
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  for (std::int64_t mpn = 1; mpn <= mm.num_cores; ++mpn)
    if (mm.num_cores % mpn == 0) pairs.emplace_back(mpn, mm.num_cores / mpn);
  auto waste = [&](const std::pair<std::int64_t, std::int64_t> &pr) {
    auto padded = [](std::int64_t d, std::int64_t parts) {
      return ceil_div(ceil_div(d, 16), parts) * parts * 16;
    };
    return static_cast<double>(padded(M, pr.first)) *
           static_cast<double>(padded(N, pr.second));
  };
  std::sort(pairs.begin(), pairs.end(), [&](auto a, auto b) {
    double wa = waste(a), wb = waste(b);
    if (wa != wb) return wa < wb;
    // Prefer splitting along m: the m grid maps to the outermost parallel
    // loop, which the runtime distributes across workers.
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (pairs.size() > 2) pairs.resize(2);

  auto mbs = block_candidates(M, 0, false);
  auto nbs = block_candidates(N, mm.vector_lanes, true);
  auto kbs = block_candidates(K, 0, false);

  std::vector<MatmulParams> out;
  for (auto [mpn, npn] : pairs)
    for (auto mb : mbs)
      for (auto nb : nbs)
        for (auto kb : kbs) {
          MatmulParams p;
          p.M = M;
          p.N = N;
          p.K = K;
          p.MB = mb;
          p.NB = nb;
          p.KB = kb;
          p.MPN = mpn;
          p.NPN = npn;
          p.finalize();
          p.BS = pick_bs(mb, nb, kb, p.KSN, esize, mm);
          p.loop_order = (p.NSN * p.NB * p.KB * esize > mm.l2_bytes)
                             ? LoopOrder::MNK
                             : LoopOrder::MKN;
          out.push_back(p);
        }
  return out;
}

double param_cost(const MatmulParams &p, DataType dtype,
                  const MachineModel &mm) {
  double es = static_cast<double>(dtype_size(dtype));
  // Bytes streamed per core through each operand, weighted by the cache
  // level its per-core working set lands in.
  double acc_a = static_cast<double>(p.MSN * p.NSN * p.KSN * p.MB * p.KB) * es;
  double acc_b = static_cast<double>(p.MSN * p.NSN * p.KSN * p.NB * p.KB) * es;
  double acc_c = 2.0 * static_cast<double>(p.MSN * p.NSN * p.MB * p.NB) * 4.0;
  std::int64_t ws_a =
      p.MSBN() * p.KSBN() * static_cast<std::int64_t>(es);
  std::int64_t ws_b =
      p.KSBN() * p.NSBN() * static_cast<std::int64_t>(es);
  std::int64_t ws_c = p.NSN * p.MB * p.NB * 4;
  double single = acc_a * level_cost(ws_a, mm) + acc_b * level_cost(ws_b, mm) +
                  acc_c * level_cost(ws_c, mm);
  double useful_per_core =
      2.0 * static_cast<double>(p.M) * static_cast<double>(p.N) *
      static_cast<double>(p.K) / static_cast<double>(mm.num_cores);
  double padded_per_core = 2.0 * static_cast<double>(p.MSBN()) *
                           static_cast<double>(p.NSBN()) *
                           static_cast<double>(p.KSBN());
  double imbalance = padded_per_core / useful_per_core - 1.0;
  return imbalance + single;
}

MatmulParams choose_params(std::int64_t M, std::int64_t N, std::int64_t K,
                           DataType dtype, const MachineModel &mm) {
  auto cands = param_candidates(M, N, K, dtype, mm);
  const MatmulParams *best = nullptr;
  double best_cost = 0.0;
  for (const auto &p : cands) {
    double c = param_cost(p, dtype, mm);
    if (!best || c < best_cost) {
      best = &p;
      best_cost = c;
      continue;
    }
    if (c == best_cost) {
      auto key = [](const MatmulParams &q) {
        return std::make_tuple(q.MB, q.NB, q.KB, q.BS);
      };
      if (key(p) < key(*best)) best = &p;
    }
  }
  return *best;
}

LayoutDesc blocked_last2(int rank, std::int64_t b0, std::int64_t b1,
                         bool swap) {
  if (swap) return LayoutDesc::blocked2d(rank - 1, b1, rank - 2, b0);
  return LayoutDesc::blocked2d(rank - 2, b0, rank - 1, b1);
}

DesiredLayouts desired_layouts(const Graph &g, const Op &matmul,
                               const MatmulParams &p) {
  int ra = static_cast<int>(g.t(matmul.inputs[0]).shape.size());
  int rb = static_cast<int>(g.t(matmul.inputs[1]).shape.size());
  int rc = static_cast<int>(g.t(matmul.outputs[0]).shape.size());
  DesiredLayouts d;
  d.a = blocked_last2(ra, p.MB, p.KB);
  d.b = blocked_last2(rb, p.KB, p.NB, /*swap=*/true);
  d.c = blocked_last2(rc, p.MB, p.NB);
  return d;
}

const char *anchor_name(AnchorId a) {
  switch (a) {
    case AnchorId::Pre1: return "pre#1";
    case AnchorId::Pre2: return "pre#2";
    case AnchorId::Pre3: return "pre#3";
    case AnchorId::Pre4: return "pre#4";
    case AnchorId::Pre5: return "pre#5";
    case AnchorId::Post1: return "post#1";
    case AnchorId::Post2: return "post#2";
    case AnchorId::Post3: return "post#3";
  }
  return "?";
}

std::vector<AnchorCostRow> anchor_table(const MatmulParams &p) {
  const std::int64_t MB = p.MB, NB = p.NB, KB = p.KB, BS = p.BS;
  const std::int64_t MSN = p.MSN, NSN = p.NSN, KSN = p.KSN;
  const std::int64_t NPSN = p.NPSN();
  const std::int64_t MSBN = p.MSBN(), NSBN = p.NSBN();
  const std::int64_t N = p.padded_n;
  std::vector<AnchorCostRow> rows;

  auto pre = [&](AnchorId a, std::int64_t inv, std::int64_t aws,
                 std::int64_t atot, std::int64_t bws, std::int64_t btot) {
    AnchorCostRow r;
    r.anchor = a;
    r.invocations_per_core = inv;
    r.a_working_set = aws;
    r.a_total = atot;
    r.b_working_set = bws;
    r.b_total = btot;
    rows.push_back(r);
  };
  auto post = [&](AnchorId a, std::int64_t inv, std::int64_t cws,
                  std::int64_t ctot) {
    AnchorCostRow r;
    r.anchor = a;
    r.invocations_per_core = inv;
    r.c_working_set = cws;
    r.c_total = ctot;
    rows.push_back(r);
  };

  pre(AnchorId::Pre1, 1, MSN * KSN * MB * KB, MSN * MB * KSN * KB,
      KSN * NPSN * NB * KB, NPSN * NB * KSN * KB);
  pre(AnchorId::Pre2, 1, MSN * KSN * MB * KB, MSN * MB * KSN * KB,
      KSN * NSN * NB * KB, NSN * NB * KSN * KB);
  pre(AnchorId::Pre3, MSN, KSN * MB * KB, MSN * MB * KSN * KB,
      KSN * NSN * NB * KB, MSN * NSN * NB * KSN * KB);
  pre(AnchorId::Pre4, MSN * KSN / BS, BS * MB * KB, MSN * MB * KSN * KB,
      BS * NSN * NB * KB, MSN * NSN * NB * KSN * KB);
  pre(AnchorId::Pre5, MSN * NSN * KSN / BS, BS * MB * KB,
      MSN * MB * KSN * KB * NSN, BS * KB * NB, MSN * NSN * NB * KSN * KB);
  post(AnchorId::Post1, MSN, MB * NSBN, MSBN * NSBN);
  post(AnchorId::Post2, 1, MSBN * NSBN, MSBN * NSBN);
  post(AnchorId::Post3, 1, MSBN * N, MSBN * N);
  return rows;
}

AnchorChoice select_anchor(const AnchorQuery &q, const MatmulParams &p,
                           const MachineModel &mm) {
  auto rows = anchor_table(p);
  std::int64_t extra_elems =
      q.elem_size > 0 ? q.extra_input_bytes / q.elem_size : 0;

  AnchorChoice choice;
  choice.no_fuse_cost =
      2.0 * mm.w_dram *
      static_cast<double>(q.standalone_elems + extra_elems) /
      static_cast<double>(p.MPN * p.NPN);

  // Pre#5 repeats the pack once per n-slice; it is only worth entering when
  // the deeper legal sites are ruled out by the dependence floor.
  bool pre4_legal =
      q.is_pre &&
      static_cast<int>(AnchorId::Pre4) >= static_cast<int>(q.min_anchor);

  bool have = false;
  for (const auto &r : rows) {
    if (is_pre_anchor(r.anchor) != q.is_pre) continue;
    if (static_cast<int>(r.anchor) < static_cast<int>(q.min_anchor)) continue;
    if (r.anchor == AnchorId::Pre5 && pre4_legal) continue;
    if (q.needs_full_n) {
      // The anchored slice must span the whole reduction (n) axis.
      bool full = r.anchor == AnchorId::Post3 || p.NPN == 1;
      if (!full) continue;
    }
    std::int64_t slice_bytes = r.working_set(q.operand) * q.elem_size;
    std::int64_t ws_bytes = slice_bytes + q.extra_input_bytes;
    double cost = static_cast<double>(r.total(q.operand) + extra_elems) *
                  level_cost(ws_bytes, mm);
    if (q.is_pre)
      cost += static_cast<double>(slice_bytes) * mm.w_dram /
              static_cast<double>(mm.l1_bytes);
    if (!have || cost < choice.cost) {
      have = true;
      choice.anchor = r.anchor;
      choice.cost = cost;
    }
  }
  choice.fuse = have && choice.cost < choice.no_fuse_cost;
  return choice;
}

AnchorChoice select_anchor(const Graph &g, const Op &fusible, bool is_pre,
                           int operand, AnchorId min_anchor,
                           const MatmulParams &p, const MachineModel &mm) {
  AnchorQuery q;
  q.is_pre = is_pre;
  q.operand = is_pre ? operand : 2;
  q.min_anchor = min_anchor;
  const auto &out = g.tensors.at(fusible.outputs[0]);
  q.elem_size = static_cast<std::int64_t>(dtype_size(out.dtype));
  q.standalone_elems = out.elems();
  q.needs_full_n = !is_pre && is_reduction(fusible.kind);
  if (!is_pre && is_binary(fusible.kind) && fusible.inputs.size() > 1) {
    const auto &other = g.tensors.at(fusible.inputs[1]);
    q.extra_input_bytes = other.storage_bytes();
  }
  return select_anchor(q, p, mm);
}

}  // namespace mtc
