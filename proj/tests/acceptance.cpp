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

// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Links only against the core library (no test framework).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "mtc/compile.hpp"
#include "mtc/kernels.hpp"
#include "mtc/workloads.hpp"
#include "testutil.hpp"

using namespace mtc;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Corpus {
  std::string label;
  Graph graph;
};

std::vector<Corpus> corpus_graphs() {
  std::vector<Corpus> out;
  for (const auto &name : workloads::workload_names()) {
    std::int64_t batch = name.rfind("mha", 0) == 0 ? 2 : 32;
    out.push_back({name + "/f32",
                   workloads::make_workload(name, DataType::F32, batch, 4,
                                            1000 + out.size())});
  }
  for (const char *name : {"mlp1", "mlp2", "mha1"}) {
    std::int64_t batch = std::strncmp(name, "mha", 3) == 0 ? 2 : 32;
    out.push_back({std::string(name) + "/int8",
                   workloads::make_workload(name, DataType::U8, batch, 4,
                                            2000 + out.size())});
  }
  return out;
}

// Small randomized graphs: a (possibly batched) matmul followed by a short
// random tail of fusible/complex ops.
Graph random_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ri = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % (hi - lo + 1));
  };
  std::int64_t M = ri(1, 48), K = ri(1, 48), N = ri(1, 48);
  bool batched = rng() % 4 == 0;
  std::int64_t B = batched ? ri(2, 3) : 0;
  Graph g;
  auto shape2 = [&](std::int64_t r, std::int64_t c) {
    return batched ? std::vector<std::int64_t>{B, r, c}
                   : std::vector<std::int64_t>{r, c};
  };
  int a = g.add_tensor(DataType::F32, shape2(M, K));
  g.inputs.push_back(a);
  int w;
  if (!batched && rng() % 2 == 0) {
    w = g.add_tensor(DataType::F32, {K, N}, TensorProperty::Constant);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    std::vector<float> wd(K * N);
    for (auto &x : wd) x = d(rng) / static_cast<float>(K);
    g.bind_f32(w, wd);
  } else {
    w = g.add_tensor(DataType::F32, shape2(K, N));
    g.inputs.push_back(w);
  }
  int cur = g.add_tensor(DataType::F32, {});
  g.add_op(OpKind::MatMul, {a, w}, {cur});
  infer_shapes(g);

  int tail = static_cast<int>(rng() % 4);
  for (int i = 0; i < tail; ++i) {
    auto sh = g.t(cur).shape;
    int pick = static_cast<int>(rng() % 5);
    int nxt = g.add_tensor(DataType::F32, sh);
    switch (pick) {
      case 0:
        g.add_op(OpKind::ReLU, {cur}, {nxt});
        break;
      case 1: {
        std::vector<std::int64_t> bs(sh.size(), 1);
        bs.back() = sh.back();
        int bias = g.add_tensor(DataType::F32, bs, TensorProperty::Constant);
        std::uniform_real_distribution<float> d(0.f, 1.f);
        std::vector<float> bd(sh.back());
        for (auto &x : bd) x = d(rng);
        g.bind_f32(bias, bd);
        g.add_op(OpKind::Add, {cur, bias}, {nxt});
        break;
      }
      case 2: {
        int half = g.add_tensor(DataType::F32, {1}, TensorProperty::Constant);
        g.bind_f32(half, {0.5f});
        g.add_op(OpKind::Mul, {cur, half}, {nxt});
        break;
      }
      case 3:
        g.add_op(OpKind::ReduceMax, {cur}, {nxt},
                 {{"axis", std::int64_t{-1}}});
        break;
      default:
        g.add_op(OpKind::Softmax, {cur}, {nxt}, {{"axis", std::int64_t{-1}}});
        break;
    }
    cur = nxt;
    infer_shapes(g);
  }
  g.outputs.push_back(cur);
  infer_shapes(g);
  return g;
}

// ---------------------------------------------------------------- criteria

std::string criterion1() {
  for (const auto &[label, g] : corpus_graphs()) {
    std::string err = testutil::check_vs_oracle(g, CompileOptions{}, 7, 2);
    if (!err.empty()) return label + ": " + err;
  }
  for (int i = 0; i < 20; ++i) {
    Graph g = random_graph(5000 + i);
    std::string err = testutil::check_vs_oracle(g, CompileOptions{}, 7 + i, 2);
    if (!err.empty())
      return "random graph " + std::to_string(i) + ": " + err;
  }
  return {};
}

std::string criterion2() {
  std::mt19937_64 rng(42);
  for (int it = 0; it < 1000; ++it) {
    std::int64_t M = 1 + static_cast<std::int64_t>(rng() % 64);
    std::int64_t K = 1 + static_cast<std::int64_t>(rng() % 64);
    std::int64_t N = 1 + static_cast<std::int64_t>(rng() % 64);
    std::int64_t a_z = static_cast<std::int64_t>(rng() % 256);
    std::vector<std::uint8_t> A(M * K);
    std::vector<std::int8_t> Bq(K * N), Bt(N * K);
    for (auto &x : A) x = static_cast<std::uint8_t>(rng() % 256);
    for (auto &x : Bq) x = static_cast<std::int8_t>(rng() % 255 - 127);
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t n = 0; n < N; ++n) Bt[n * K + k] = Bq[k * N + n];
    // Right side: the rewritten form, with the product term computed by the
    // real int8 microkernel (one block, BS=1).
    std::vector<std::int32_t> prod(M * N, 0);
    kernels::brgemm_u8s8s32(A.data(), Bt.data(), prod.data(), M, N, K, 1,
                            M * K, N * K, false);
    std::vector<std::int32_t> colsum(N, 0);
    for (std::int64_t k = 0; k < K; ++k)
      for (std::int64_t n = 0; n < N; ++n) colsum[n] += Bq[k * N + n];
    for (std::int64_t m = 0; m < M; ++m)
      for (std::int64_t n = 0; n < N; ++n) {
        std::int32_t lhs = 0;
        for (std::int64_t k = 0; k < K; ++k)
          lhs += static_cast<std::int32_t>(A[m * K + k] - a_z) * Bq[k * N + n];
        std::int32_t rhs =
            prod[m * N + n] - static_cast<std::int32_t>(a_z) * colsum[n];
        if (lhs != rhs)
          return "instance " + std::to_string(it) + ": lhs " +
                 std::to_string(lhs) + " != rhs " + std::to_string(rhs);
      }
  }
  return {};
}

std::string criterion3() {
  std::mt19937_64 rng(77);
  MachineModel mm;
  for (int i = 0; i < 50; ++i) {
    std::int64_t M = 1 + static_cast<std::int64_t>(rng() % 600);
    std::int64_t N = 1 + static_cast<std::int64_t>(rng() % 600);
    std::int64_t K = 1 + static_cast<std::int64_t>(rng() % 600);
    DataType dt = (i % 3 == 0) ? DataType::U8 : DataType::F32;
    auto cands = param_candidates(M, N, K, dt, mm);
    if (cands.empty() || cands.size() > 64)
      return "shape " + std::to_string(i) + ": candidate grid size " +
             std::to_string(cands.size());
    const MatmulParams *best = nullptr;
    double bc = 0;
    auto key = [](const MatmulParams &q) {
      return std::make_tuple(q.MB, q.NB, q.KB, q.BS);
    };
    for (const auto &p : cands) {
      double c = param_cost(p, dt, mm);
      if (!best || c < bc || (c == bc && key(p) < key(*best))) {
        best = &p;
        bc = c;
      }
    }
    MatmulParams got = choose_params(M, N, K, dt, mm);
    if (std::make_tuple(got.MB, got.NB, got.KB, got.BS, got.MPN, got.NPN) !=
        std::make_tuple(best->MB, best->NB, best->KB, best->BS, best->MPN,
                        best->NPN))
      return "shape " + std::to_string(i) + " (" + std::to_string(M) + "x" +
             std::to_string(N) + "x" + std::to_string(K) +
             "): heuristic disagrees with brute force";
  }
  return {};
}

std::string criterion4() {
  // Closed-form cells on 100 random valid parameter sets.
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    MatmulParams p;
    p.MB = 8 << (rng() % 3);
    p.NB = 8 << (rng() % 3);
    p.KB = 8 << (rng() % 3);
    p.MPN = 1 + static_cast<std::int64_t>(rng() % 4);
    p.NPN = 1 + static_cast<std::int64_t>(rng() % 2);
    p.M = 1 + static_cast<std::int64_t>(rng() % 512);
    p.N = 1 + static_cast<std::int64_t>(rng() % 512);
    p.K = 1 + static_cast<std::int64_t>(rng() % 512);
    p.BS = 1;
    p.finalize();
    std::vector<std::int64_t> divs;
    for (std::int64_t d = 1; d <= p.KSN; ++d)
      if (p.KSN % d == 0) divs.push_back(d);
    p.BS = divs[rng() % divs.size()];
    if (!p.validate().empty()) return "invalid random params";
    auto rows = anchor_table(p);
    auto row = [&](AnchorId a) -> const AnchorCostRow * {
      for (const auto &r : rows)
        if (r.anchor == a) return &r;
      return nullptr;
    };
    std::int64_t a_slice = p.MSN * p.MB * p.KSN * p.KB;
    struct Cell {
      AnchorId a;
      std::int64_t inv;
    } cells[] = {
        {AnchorId::Pre1, 1},
        {AnchorId::Pre2, 1},
        {AnchorId::Pre3, p.MSN},
        {AnchorId::Pre4, p.MSN * p.KSN / p.BS},
        {AnchorId::Pre5, p.MSN * p.NSN * p.KSN / p.BS},
        {AnchorId::Post1, p.MSN},
        {AnchorId::Post2, 1},
        {AnchorId::Post3, 1},
    };
    for (const auto &c : cells) {
      const auto *r = row(c.a);
      if (!r || r->invocations_per_core != c.inv)
        return std::string("table cell mismatch at ") + anchor_name(c.a);
    }
    if (row(AnchorId::Pre5)->a_total != a_slice * p.NSN)
      return "Pre5 xNSN redundancy cell mismatch";
  }

  // Cross-check by direct counting: probes inserted at each anchor fire
  // exactly invocations_per_core times on a single-core machine model.
  for (auto [M, N, K] : {std::array<std::int64_t, 3>{64, 64, 64},
                         std::array<std::int64_t, 3>{100, 60, 200},
                         std::array<std::int64_t, 3>{128, 64, 64}}) {
    CompileOptions opt;
    opt.instrument_anchors = true;
    opt.machine.num_cores = 1;
    Graph g = testutil::single_matmul(M, N, K, /*const_weight=*/false);
    CompiledModule cm = compile(g, opt);
    auto ins = testutil::random_inputs(g, 3);
    auto ex = cm.make_executor(1);
    std::vector<std::vector<std::byte>> bufs;
    for (int t : cm.graph.inputs) {
      bufs.push_back(oracle::to_bytes(ins.at(t)));
      ex->bind(cm.tensor_global.at(t), bufs.back().data());
    }
    int ot = cm.graph.outputs[0];
    std::vector<std::byte> outb(cm.graph.t(ot).elems() * 4);
    ex->bind(cm.tensor_global.at(ot), outb.data());
    ex->run();
    const auto &counts = ex->anchor_counts();
    if (counts.empty()) return "no anchor probes fired";
    auto rows = anchor_table(cm.params.begin()->second);
    for (const auto &[kv, n] : counts) {
      AnchorId a = static_cast<AnchorId>(kv.second);
      for (const auto &r : rows)
        if (r.anchor == a && n != r.invocations_per_core)
          return std::string("probe count at ") + anchor_name(a) + " = " +
                 std::to_string(n) + ", table says " +
                 std::to_string(r.invocations_per_core);
    }
  }
  return {};
}

std::string criterion5() {
  for (const auto &[label, g] : corpus_graphs()) {
    CompiledModule cm = compile(g);
    for (const auto &d : cm.report.fusion_decisions) {
      if (!d.fused) continue;
      const Op *op = find_op(cm.graph, d.fusible_op);
      if (!op) continue;
      if (!d.is_pre && is_elementwise(op->kind)) {
        // Elementwise ops consuming the matmul output directly must sit at
        // the innermost post anchor.
        const Op *prod = cm.graph.producer(op->inputs[0]);
        if (prod && prod->kind == OpKind::MatMul &&
            d.anchor != static_cast<int>(AnchorId::Post1))
          return label + ": elementwise op " + std::to_string(op->id) +
                 " fused at " + anchor_name(static_cast<AnchorId>(d.anchor));
      }
      if (d.is_pre && op->kind == OpKind::Reorder &&
          d.anchor == static_cast<int>(AnchorId::Pre5))
        return label + ": pre reorder fused at pre#5 though pre#4 is legal";
    }
  }
  return {};
}

std::string criterion6() {
  Graph g = workloads::make_workload("mlp2", DataType::F32, 32, 4, 99);
  CompileOptions opt;
  opt.fuse = false;  // maximize inter-region temporaries
  CompiledModule cm = compile(g, opt);
  const auto &plan = cm.plan;
  if (plan.total_temp_bytes <= 0) return "no module temporaries";
  if (plan.arena_size >= 0.6 * static_cast<double>(plan.total_temp_bytes))
    return "arena " + std::to_string(plan.arena_size) + " >= 0.6 * " +
           std::to_string(plan.total_temp_bytes);
  // Brute-force overlap scan: simultaneously-live placements must not share
  // bytes.
  for (const auto &[ia, pa] : plan.placements)
    for (const auto &[ib, pb] : plan.placements) {
      if (ia >= ib) continue;
      bool time = pa.first_def <= pb.last_use && pb.first_def <= pa.last_use;
      bool space = pa.offset < pb.offset + pb.size &&
                   pb.offset < pa.offset + pa.size;
      if (time && space)
        return "live-range collision between temps " + std::to_string(ia) +
               " and " + std::to_string(ib);
    }
  // Constant fold runs exactly once across 3 runs.
  auto ins = testutil::random_inputs(g, 13);
  auto ran = testutil::run_compiled(cm, ins, 2, 3);
  if (ran.fold_runs != 1)
    return "fold executed " + std::to_string(ran.fold_runs) + " times";
  return {};
}

std::string criterion7() {
  std::vector<Corpus> set;
  for (const char *name : {"mlp1", "mha1"}) {
    std::int64_t batch = std::strncmp(name, "mha", 3) == 0 ? 2 : 32;
    set.push_back({std::string(name) + "/f32",
                   workloads::make_workload(name, DataType::F32, batch, 4, 3)});
    set.push_back({std::string(name) + "/int8",
                   workloads::make_workload(name, DataType::U8, batch, 4, 3)});
  }
  std::vector<CompileOptions> variants(4);
  variants[0].fuse = false;
  variants[1].coarse = false;
  // variants[2]: defaults (fused + coarse)
  variants[3].buffer_reuse = false;

  for (const auto &[label, g] : set) {
    auto ins = testutil::random_inputs(g, 55);
    std::map<int, std::vector<std::byte>> baseline;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      CompiledModule cm = compile(g, variants[v]);
      for (int workers : {1, 2, 4}) {
        auto ran = testutil::run_compiled(cm, ins, workers);
        if (v == 0 && workers == 1) {
          baseline = ran.out;
          continue;
        }
        for (int t : g.outputs) {
          const auto &want = baseline.at(t);
          const auto &got = ran.out.at(t);
          const auto &lt = g.t(t);
          if (lt.dtype != DataType::F32) {
            if (got != want)
              return label + " variant " + std::to_string(v) + " workers " +
                     std::to_string(workers) + ": integer outputs differ";
            continue;
          }
          const float *a = reinterpret_cast<const float *>(got.data());
          const float *b = reinterpret_cast<const float *>(want.data());
          for (std::int64_t i = 0; i < lt.elems(); ++i)
            if (std::fabs(double(a[i]) - b[i]) >
                1e-6 + 1e-5 * std::fabs(double(b[i])))
              return label + " variant " + std::to_string(v) + " workers " +
                     std::to_string(workers) + ": f32 drift at " +
                     std::to_string(i);
        }
      }
    }
  }
  return {};
}

double time_runs(const std::function<void()> &fn, int repeats) {
  double best = 1e30;
  for (int i = 0; i < repeats; ++i) {
    auto t0 = Clock::now();
    fn();
    best = std::min(best, ms_since(t0));
  }
  return best;
}

struct Bound {
  CompiledModule cm;
  std::unique_ptr<rt::Executor> ex;
  std::vector<std::vector<std::byte>> in_bufs;
  std::vector<std::vector<std::byte>> out_bufs;
};

// Heap-allocated so the executor's reference into cm.module stays valid.
std::unique_ptr<Bound> bind_up(const Graph &g, const CompileOptions &opt,
                               int workers, std::uint64_t seed) {
  auto b = std::make_unique<Bound>();
  b->cm = compile(g, opt);
  b->ex = b->cm.make_executor(workers);
  auto ins = testutil::random_inputs(g, seed);
  for (int t : g.inputs) {
    b->in_bufs.push_back(oracle::to_bytes(ins.at(t)));
    b->ex->bind(b->cm.tensor_global.at(t), b->in_bufs.back().data());
  }
  for (int t : g.outputs) {
    const auto &lt = g.t(t);
    b->out_bufs.emplace_back(lt.elems() * dtype_size(lt.dtype));
    b->ex->bind(b->cm.tensor_global.at(t), b->out_bufs.back().data());
  }
  b->ex->run();  // warm the constant fold and caches
  b->ex->run();
  b->ex->run();
  return b;
}

std::string criterion8() {
  int cores = static_cast<int>(std::thread::hardware_concurrency());
  int workers = std::min(cores > 0 ? cores : 1, 4);
  std::ostringstream note;
  note << "(" << cores << " hardware threads) ";

  // (a) f32 512^3: compiled-fused vs the naive op-by-op reference.
  {
    Graph g = testutil::single_matmul(512, 512, 512, false);
    auto ins = testutil::random_inputs(g, 31);
    double naive_ms =
        time_runs([&] { oracle::eval_graph(g, ins); }, 3);
    auto b = bind_up(g, CompileOptions{}, workers, 31);
    double fused_ms = time_runs([&] { b->ex->run(); }, 5);
    double r = naive_ms / fused_ms;
    note << "512^3 fused/naive " << r << "x ";
    if (r < 1.5)
      return note.str() + "- below the 1.5x bound";
  }

  // (b) MLP-1 chain: fused vs unfused compilation.
  {
    Graph g = workloads::make_workload("mlp1", DataType::F32, 32, 1, 17);
    CompileOptions unfused;
    unfused.fuse = false;
    auto bf = bind_up(g, CompileOptions{}, workers, 17);
    auto bu = bind_up(g, unfused, workers, 17);
    double fused_ms = time_runs([&] { bf->ex->run(); }, 7);
    double unfused_ms = time_runs([&] { bu->ex->run(); }, 7);
    double r = unfused_ms / fused_ms;
    note << "mlp1 unfused/fused " << r << "x ";
    if (r < 1.05) return note.str() + "- below the 1.05x bound";
  }

  // (c) MHA: coarse-grain merge must not regress over fine-grain only.
  {
    Graph g = workloads::make_workload("mha1", DataType::F32, 2, 4, 23);
    CompileOptions fine;
    fine.coarse = false;
    auto bc = bind_up(g, CompileOptions{}, workers, 23);
    auto bn = bind_up(g, fine, workers, 23);
    double best_r = 0;
    for (int attempt = 0; attempt < 3; ++attempt) {
      double coarse_ms = time_runs([&] { bc->ex->run(); }, 7);
      double fine_ms = time_runs([&] { bn->ex->run(); }, 7);
      best_r = std::max(best_r, fine_ms / coarse_ms);
      if (best_r >= 1.0) break;
    }
    note << "mha coarse " << best_r << "x";
    if (best_r < 1.0) return note.str() + " - coarse-grain merge regressed";
  }
  std::printf("  %s\n", note.str().c_str());
  return {};
}

std::string criterion9() {
  Graph g;
  std::mt19937_64 rng(3);
  int a = g.add_tensor(DataType::F32, {128, 64});
  g.inputs.push_back(a);
  int b = g.add_tensor(DataType::F32, {64, 64}, TensorProperty::Constant);
  std::uniform_real_distribution<float> d(0.f, 1.f);
  std::vector<float> w(64 * 64);
  for (auto &x : w) x = d(rng) / 64.0f;
  g.bind_f32(b, w);
  int c = g.add_tensor(DataType::F32, {128, 64});
  int r = g.add_tensor(DataType::F32, {128, 64});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.add_op(OpKind::ReLU, {c}, {r});
  g.outputs.push_back(r);
  infer_shapes(g);
  CompiledModule cm = compile(g);

  std::ifstream in("golden/matmul_relu_reorder.tir");
  if (!in.good()) return "golden file missing";
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string got = tir::print_module(cm.module);
  if (got != ss.str()) return "dump differs from the reviewed golden file";

  const tir::Function *f = nullptr;
  for (const auto &fn : cm.module.funcs)
    if (testutil::census(fn).brgemm > 0) f = &fn;
  if (!f) return "no microkernel function";
  auto cts = testutil::census(*f);
  if (cts.brgemm != 1) return "expected exactly one brgemm";
  if (cts.max_loop_depth < 5) return "loop nest shallower than depth 5";
  bool pre4 = false, post1_relu = false, post1_reorder = false;
  for (const auto &dc : cm.report.fusion_decisions) {
    if (!dc.fused) continue;
    const Op *op = find_op(cm.graph, dc.fusible_op);
    if (dc.is_pre && dc.anchor == static_cast<int>(AnchorId::Pre4))
      pre4 = true;
    if (!dc.is_pre && dc.anchor == static_cast<int>(AnchorId::Post1) && op) {
      if (op->kind == OpKind::ReLU) post1_relu = true;
      if (op->kind == OpKind::Reorder) post1_reorder = true;
    }
  }
  if (!pre4) return "entry reorder not at pre#4";
  if (!post1_relu || !post1_reorder) return "post ops not at post#1";
  return {};
}

}  // namespace

int main() {
  struct Row {
    int n;
    const char *what;
    std::function<std::string()> fn;
  };
  std::vector<Row> rows = {
      {1, "oracle equivalence (corpus + randomized graphs)", criterion1},
      {2, "low-precision zero-point identity", criterion2},
      {3, "parameter heuristic equals brute force", criterion3},
      {4, "anchor table formulas + instrumented counters", criterion4},
      {5, "anchor selection behavior", criterion5},
      {6, "buffer reuse and fold-once", criterion6},
      {7, "optimization-stage equivalence", criterion7},
      {8, "speedup properties", criterion8},
      {9, "golden IR dump", criterion9},
  };
  bool ok = true;
  for (const auto &row : rows) {
    auto t0 = Clock::now();
    std::string err;
    try {
      err = row.fn();
    } catch (const std::exception &e) {
      err = std::string("exception: ") + e.what();
    }
    if (err.empty()) {
      std::printf("criterion %d: PASS  [%s, %.1fs]\n", row.n, row.what,
                  ms_since(t0) / 1000.0);
    } else {
      ok = false;
      std::printf("criterion %d: FAIL  [%s, %.1fs] %s\n", row.n, row.what,
                  ms_since(t0) / 1000.0, err.c_str());
    }
    std::fflush(stdout);
  }
  return ok ? 0 : 1;
}
