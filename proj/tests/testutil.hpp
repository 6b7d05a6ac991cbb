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

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtc/compile.hpp"
#include "mtc/oracle.hpp"
#include "mtc/workloads.hpp"

namespace mtc::testutil {

inline std::map<int, oracle::DenseValue> random_inputs(const Graph &g,
                                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<int, oracle::DenseValue> out;
  for (int t : g.inputs) {
    const auto &lt = g.t(t);
    auto bytes = workloads::random_bytes(lt.dtype, lt.elems(), rng);
    out[t] = oracle::from_bytes(lt.dtype, lt.shape, bytes.data());
  }
  return out;
}

struct Ran {
  std::map<int, std::vector<std::byte>> out;  // graph output id -> raw bytes
  int fold_runs = 0;
};

inline Ran run_compiled(const CompiledModule &cm,
                        const std::map<int, oracle::DenseValue> &ins,
                        int workers = 1, int repeats = 1) {
  auto ex = cm.make_executor(workers);
  std::vector<std::vector<std::byte>> in_bytes;
  for (int t : cm.graph.inputs) {
    in_bytes.push_back(oracle::to_bytes(ins.at(t)));
    ex->bind(cm.tensor_global.at(t), in_bytes.back().data());
  }
  Ran r;
  for (int t : cm.graph.outputs) {
    const auto &lt = cm.graph.t(t);
    r.out[t].assign(static_cast<std::size_t>(lt.elems()) *
                        dtype_size(lt.dtype),
                    std::byte{0});
    ex->bind(cm.tensor_global.at(t), r.out[t].data());
  }
  for (int i = 0; i < repeats; ++i) ex->run();
  r.fold_runs = ex->fold_executions();
  return r;
}

// Empty string when all outputs agree with the oracle values under the
// dtype tolerances (f32 rtol 1e-5/atol 1e-6, u8/s8 +-1, s32 exact).
inline std::string diff_outputs(const Graph &g, const Ran &r,
                                const std::map<int, oracle::DenseValue> &want,
                                bool bitwise_f32 = false) {
  std::ostringstream why;
  for (int t : g.outputs) {
    const auto &lt = g.t(t);
    const std::byte *got = r.out.at(t).data();
    const auto &w = want.at(t);
    std::int64_t n = lt.elems();
    for (std::int64_t i = 0; i < n; ++i) {
      if (lt.dtype == DataType::F32) {
        double a = reinterpret_cast<const float *>(got)[i], b = w.f[i];
        bool bad = bitwise_f32
                       ? static_cast<float>(a) != static_cast<float>(b)
                       : std::fabs(a - b) > 1e-6 + 1e-5 * std::fabs(b);
        if (bad) {
          why << "tensor " << t << "[" << i << "]: got " << a << " want " << b;
          return why.str();
        }
        continue;
      }
      std::int64_t a = 0;
      switch (lt.dtype) {
        case DataType::U8:
          a = reinterpret_cast<const std::uint8_t *>(got)[i];
          break;
        case DataType::S8:
          a = reinterpret_cast<const std::int8_t *>(got)[i];
          break;
        case DataType::S32:
          a = reinterpret_cast<const std::int32_t *>(got)[i];
          break;
        default:
          break;
      }
      std::int64_t tol =
          lt.dtype == DataType::U8 || lt.dtype == DataType::S8 ? 1 : 0;
      if (std::llabs(a - w.i[i]) > tol) {
        why << "tensor " << t << "[" << i << "]: got " << a << " want "
            << w.i[i];
        return why.str();
      }
    }
  }
  return {};
}

// Compiles with `opt`, runs on seeded random inputs and diffs vs the oracle.
inline std::string check_vs_oracle(const Graph &g, const CompileOptions &opt,
                                   std::uint64_t seed, int workers = 1) {
  CompiledModule cm = compile(g, opt);
  auto ins = random_inputs(g, seed);
  Ran r = run_compiled(cm, ins, workers);
  auto want = oracle::eval_graph(g, ins);
  return diff_outputs(g, r, want);
}

inline Graph single_matmul(std::int64_t M, std::int64_t N, std::int64_t K,
                           bool const_weight = true, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  Graph g;
  int a = g.add_tensor(DataType::F32, {M, K});
  g.inputs.push_back(a);
  int b;
  if (const_weight) {
    b = g.add_tensor(DataType::F32, {K, N}, TensorProperty::Constant);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    std::vector<float> w(static_cast<std::size_t>(K * N));
    for (auto &x : w) x = d(rng) / static_cast<float>(K);
    g.bind_f32(b, w);
  } else {
    b = g.add_tensor(DataType::F32, {K, N});
    g.inputs.push_back(b);
  }
  int c = g.add_tensor(DataType::F32, {M, N});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.outputs.push_back(c);
  infer_shapes(g);
  return g;
}

// Statement census over a function body.
struct StmtCounts {
  int brgemm = 0;
  int loops = 0;
  int parallel = 0;
  int max_loop_depth = 0;
};

inline void count_stmts(const std::vector<tir::StmtP> &body, int depth,
                        StmtCounts &c) {
  for (const auto &s : body) {
    switch (s->kind) {
      case tir::Stmt::Kind::For:
      case tir::Stmt::Kind::ParallelFor:
        ++c.loops;
        if (s->kind == tir::Stmt::Kind::ParallelFor) ++c.parallel;
        c.max_loop_depth = std::max(c.max_loop_depth, depth + 1);
        count_stmts(s->body, depth + 1, c);
        break;
      case tir::Stmt::Kind::If:
        count_stmts(s->body, depth, c);
        break;
      case tir::Stmt::Kind::Intrinsic:
        if (s->iname.rfind("brgemm", 0) == 0) ++c.brgemm;
        break;
      default:
        break;
    }
  }
}

inline StmtCounts census(const tir::Function &f) {
  StmtCounts c;
  count_stmts(f.body, 0, c);
  return c;
}

}  // namespace mtc::testutil
