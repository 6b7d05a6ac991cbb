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

#include <doctest.h>

#include "mtc/compile.hpp"
#include "mtc/workloads.hpp"
#include "testutil.hpp"

using namespace mtc;

namespace {

const tir::Function *tunable_func(const CompiledModule &cm) {
  // First non-entry, non-fold function containing a brgemm.
  for (const auto &f : cm.module.funcs) {
    if (f.name == cm.module.entry || f.name == cm.module.fold) continue;
    auto c = testutil::census(f);
    if (c.brgemm > 0) return &f;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("matmul template is a depth-5 nest with one brgemm") {
  Graph g = testutil::single_matmul(200, 120, 90, true);
  CompiledModule cm = compile(g);
  const tir::Function *f = tunable_func(cm);
  REQUIRE(f);
  auto c = testutil::census(*f);
  CHECK(c.brgemm == 1);
  CHECK(c.max_loop_depth >= 5);
  CHECK(c.parallel >= 1);  // the mpi loop
  // Printed nest mentions the canonical template loop variables.
  std::string s = tir::print_function(*f, cm.module);
  for (const char *v : {"mpi", "npi", "msi", "ksi", "nsi"})
    CHECK(s.find(v) != std::string::npos);
}

TEST_CASE("constant weights fold into cache slots") {
  Graph g = testutil::single_matmul(64, 64, 64, true);
  CompiledModule cm = compile(g);
  CHECK(!cm.module.fold.empty());
  CHECK(!cm.cache_plan.cache_slots.empty());
  int slots = 0;
  for (const auto &d : cm.module.globals)
    slots += d.storage == tir::Storage::ConstSlot;
  CHECK(slots == static_cast<int>(cm.cache_plan.cache_slots.size()));
}

TEST_CASE("lowered module executes matmul variants correctly") {
  struct Case {
    std::int64_t M, N, K;
    bool const_w;
  };
  for (auto [M, N, K, cw] : std::vector<Case>{{64, 64, 64, true},
                                              {100, 60, 70, false},
                                              {13, 512, 256, true},
                                              {1, 33, 17, false}}) {
    Graph g = testutil::single_matmul(M, N, K, cw);
    CAPTURE(M);
    CAPTURE(N);
    CAPTURE(K);
    CHECK(testutil::check_vs_oracle(g, CompileOptions{}, 5, 2) == "");
  }
}

TEST_CASE("batched matmul lowers and runs") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {3, 2, 24, 16});
  int b = g.add_tensor(DataType::F32, {3, 2, 16, 20});
  int c = g.add_tensor(DataType::F32, {});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.inputs = {a, b};
  g.outputs = {c};
  infer_shapes(g);
  CHECK(testutil::check_vs_oracle(g, CompileOptions{}, 9, 2) == "");
}

TEST_CASE("standalone ops lower to plain loop functions") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {16, 16});
  int b = g.add_tensor(DataType::F32, {16, 16});
  int c = g.add_tensor(DataType::F32, {16, 16});
  g.add_op(OpKind::Add, {a, a}, {b});
  g.add_op(OpKind::Exp, {b}, {c});
  g.inputs = {a};
  g.outputs = {c};
  infer_shapes(g);
  CompiledModule cm = compile(g);
  int brgemms = 0;
  for (const auto &f : cm.module.funcs) brgemms += testutil::census(f).brgemm;
  CHECK(brgemms == 0);
  CHECK(testutil::check_vs_oracle(g, CompileOptions{}, 2, 1) == "");
}

TEST_CASE("no-fuse compilation yields one region per op and still matches") {
  Graph g = workloads::make_mlp_f32(8, {13, 32, 16}, 21);
  CompileOptions nofuse;
  nofuse.fuse = false;
  CompiledModule cm = compile(g, nofuse);
  // One entry call per surviving graph op.
  const tir::Function *entry = cm.module.find_func(cm.module.entry);
  REQUIRE(entry);
  int calls = 0;
  for (const auto &s : entry->body) calls += s->kind == tir::Stmt::Kind::Call;
  CHECK(calls == static_cast<int>(cm.graph.ops.size()));
  CHECK(testutil::check_vs_oracle(g, nofuse, 31, 2) == "");
}

TEST_CASE("anchor instrumentation counts pack invocations") {
  CompileOptions opt;
  opt.instrument_anchors = true;
  opt.machine.num_cores = 1;
  Graph g = testutil::single_matmul(64, 64, 64, false);
  CompiledModule cm = compile(g, opt);
  REQUIRE(cm.params.size() == 1);
  auto ins = testutil::random_inputs(g, 3);
  auto ex = cm.make_executor(1);
  std::vector<std::vector<std::byte>> bufs;
  for (int t : cm.graph.inputs) {
    bufs.push_back(oracle::to_bytes(ins.at(t)));
    ex->bind(cm.tensor_global.at(t), bufs.back().data());
  }
  std::vector<std::byte> out(cm.graph.t(cm.graph.outputs[0]).elems() * 4);
  ex->bind(cm.tensor_global.at(cm.graph.outputs[0]), out.data());
  ex->run();
  // Probes fired and their counts match the anchor table rows.
  const auto &counts = ex->anchor_counts();
  REQUIRE(!counts.empty());
  auto rows = anchor_table(cm.params.begin()->second);
  for (const auto &[key, n] : counts) {
    AnchorId a = static_cast<AnchorId>(key.second);
    for (const auto &r : rows)
      if (r.anchor == a) CHECK(n == r.invocations_per_core);
  }
}
