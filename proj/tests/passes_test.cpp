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

#include <algorithm>
#include <cstdlib>
#include <set>

#include "mtc/passes.hpp"
#include "mtc/workloads.hpp"
#include "testutil.hpp"

using namespace mtc;

namespace {

int count_kind(const Graph &g, OpKind k) {
  int n = 0;
  for (const auto &op : g.ops) n += op.kind == k;
  return n;
}

bool has_complex(const Graph &g) {
  for (const auto &op : g.ops)
    if (category_of(op.kind) == OpCategory::Complex) return true;
  return false;
}

}  // namespace

TEST_CASE("decompose removes all complex ops") {
  Graph g = workloads::make_workload("mha1", DataType::U8, 2, 16, 5);
  REQUIRE(has_complex(g));
  Graph d = decompose_complex(g);
  CHECK(!has_complex(d));
  // Softmax leaves its exp/sum skeleton behind.
  CHECK(count_kind(d, OpKind::Exp) >= 1);
  CHECK(count_kind(d, OpKind::ReduceSum) >= 1);
  CHECK(count_kind(d, OpKind::ReduceMax) >= 1);
  CHECK(validate_graph(d).empty());
}

TEST_CASE("fast softmax skips the max subtraction") {
  Graph g = workloads::make_workload("mha1", DataType::F32, 2, 16, 5);
  Graph d1 = decompose_complex(g);
  g.fast_softmax = true;
  Graph d2 = decompose_complex(g);
  CHECK(count_kind(d1, OpKind::ReduceMax) > count_kind(d2, OpKind::ReduceMax));
}

TEST_CASE("low precision convert produces a u8 x s8 -> s32 matmul") {
  Graph g = workloads::make_mlp_int8(8, {16, 32}, 3);
  Graph d = decompose_complex(g);
  cleanup_graph(d);
  PassPipelineReport rep;
  Graph q = low_precision_convert(d, &rep);
  cleanup_graph(q);
  infer_shapes(q);
  bool found = false;
  for (const auto &op : q.ops) {
    if (op.kind != OpKind::MatMul) continue;
    if (q.t(op.inputs[0]).dtype == DataType::U8 &&
        q.t(op.inputs[1]).dtype == DataType::S8 &&
        q.t(op.outputs[0]).dtype == DataType::S32)
      found = true;
  }
  CHECK(found);
  // Zero-point compensation shows up as a column-sum reduction over the
  // weight plus a subtraction on the accumulator.
  CHECK(count_kind(q, OpKind::ReduceSum) >= 1);
  CHECK(validate_graph(q).empty());

  // The rewrite preserves semantics.
  auto ins = testutil::random_inputs(g, 17);
  auto want = oracle::eval_graph(g, ins);
  auto got = oracle::eval_graph(q, ins);
  for (int t : g.outputs)
    for (std::int64_t i = 0; i < want.at(t).elems(); ++i)
      CHECK(std::llabs(got.at(t).i[i] - want.at(t).i[i]) <= 1);
}

TEST_CASE("low precision convert leaves non-constant weights alone") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {8, 8});
  int b = g.add_tensor(DataType::F32, {8, 8});
  int c = g.add_tensor(DataType::F32, {8, 8});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.inputs = {a, b};
  g.outputs = {c};
  infer_shapes(g);
  Graph q = low_precision_convert(g);
  CHECK(q.ops.size() == g.ops.size());
  for (const auto &op : q.ops) CHECK(q.t(op.inputs[0]).dtype == DataType::F32);
}

TEST_CASE("layout propagation blocks matmul operands and inserts reorders") {
  Graph g = testutil::single_matmul(100, 60, 70, /*const_weight=*/false);
  MachineModel mm;
  std::map<int, MatmulParams> params;
  PassPipelineReport rep;
  Graph l = propagate_layouts(g, mm, params, &rep);
  cleanup_graph(l);
  infer_shapes(l);
  REQUIRE(params.size() == 1);
  const auto &p = params.begin()->second;
  CHECK(p.M == 100);
  CHECK(p.N == 60);
  CHECK(p.K == 70);
  const Op *mmop = nullptr;
  for (const auto &op : l.ops)
    if (op.kind == OpKind::MatMul) mmop = &op;
  REQUIRE(mmop);
  CHECK(l.t(mmop->inputs[0]).layout == blocked_last2(2, p.MB, p.KB));
  CHECK(l.t(mmop->inputs[1]).layout == blocked_last2(2, p.KB, p.NB, true));
  CHECK(l.t(mmop->outputs[0]).layout == blocked_last2(2, p.MB, p.NB));
  // Graph boundary tensors stay plain; reorders bridge the gap.
  for (int t : l.inputs) CHECK(l.t(t).layout.is_plain());
  for (int t : l.outputs) CHECK(l.t(t).layout.is_plain());
  CHECK(count_kind(l, OpKind::Reorder) >= 3);
  CHECK(!rep.inserted_reorders.empty());
  CHECK(validate_graph(l).empty());
}

TEST_CASE("constant preprocessing extracts the weight packing fold") {
  Graph g = testutil::single_matmul(64, 48, 32, /*const_weight=*/true);
  MachineModel mm;
  std::map<int, MatmulParams> params;
  Graph l = propagate_layouts(g, mm, params);
  cleanup_graph(l);
  auto [main_g, cplan] = preprocess_constants(l);
  cleanup_graph(main_g);
  REQUIRE(!cplan.empty());
  CHECK(!cplan.cache_slots.empty());
  // The weight reorder moved into the fold; the main graph keeps only the
  // activation-side reorders.
  for (const auto &op : main_g.ops)
    for (int t : op.inputs)
      CHECK(main_g.t(t).property != TensorProperty::Constant);
  for (const auto &op : cplan.fold_ops) CHECK(op.kind == OpKind::Reorder);
  // Slot sizes are padded storage bytes.
  for (auto [tid, bytes] : cplan.cache_slots)
    CHECK(bytes == main_g.t(tid).storage_bytes());
}

TEST_CASE("fine grain fusion anchors post ops and keeps standalones") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {64, 64});
  int b = g.add_tensor(DataType::F32, {64, 64});
  int c = g.add_tensor(DataType::F32, {64, 64});
  int r = g.add_tensor(DataType::F32, {64, 64});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.add_op(OpKind::ReLU, {c}, {r});
  g.inputs = {a, b};
  g.outputs = {r};
  infer_shapes(g);
  MachineModel mm;
  std::map<int, MatmulParams> params;
  Graph l = propagate_layouts(g, mm, params);
  cleanup_graph(l);
  PassPipelineReport rep;
  auto fused = fine_grain_fuse(l, params, mm, &rep);
  int tunables = 0, standalones = 0, anchored_posts = 0;
  for (const auto &f : fused) {
    if (f.tunable) {
      ++tunables;
      anchored_posts += static_cast<int>(f.post_ops.size());
    } else {
      ++standalones;
    }
  }
  CHECK(tunables == 1);
  CHECK(anchored_posts >= 1);  // the ReLU (plus any fused reorders)
  CHECK(!rep.fusion_decisions.empty());
  // Every recorded fused decision carries a valid anchor id.
  for (const auto &d : rep.fusion_decisions)
    if (d.fused) CHECK((d.anchor >= 0 && d.anchor <= 7));
}

TEST_CASE("no-fuse clustering yields one region per op") {
  Graph g = testutil::single_matmul(32, 32, 32, false);
  MachineModel mm;
  std::map<int, MatmulParams> params;
  Graph l = propagate_layouts(g, mm, params);
  cleanup_graph(l);
  auto fused = fine_grain_fuse(l, params, mm);
  // With fusion on, reorders fold into the matmul region; the comparison
  // baseline is compile(opt.fuse=false) which clusters each op alone. Here we
  // only check the fused clustering covers every op exactly once.
  std::set<int> seen;
  for (const auto &f : fused)
    for (int id : f.all_op_ids()) CHECK(seen.insert(id).second);
  CHECK(seen.size() == l.ops.size());
}

TEST_CASE("cleanup: CSE merges identical elementwise ops") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {8});
  int b = g.add_tensor(DataType::F32, {8});
  int c = g.add_tensor(DataType::F32, {8});
  int d = g.add_tensor(DataType::F32, {8});
  g.add_op(OpKind::ReLU, {a}, {b});
  g.add_op(OpKind::ReLU, {a}, {c});
  g.add_op(OpKind::Add, {b, c}, {d});
  g.inputs = {a};
  g.outputs = {d};
  cleanup_graph(g);
  CHECK(count_kind(g, OpKind::ReLU) == 1);
}

TEST_CASE("cleanup: x+0 and x*1 fold away") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {8});
  int z = g.add_tensor(DataType::F32, {1}, TensorProperty::Constant);
  g.bind_f32(z, {0.0f});
  int one = g.add_tensor(DataType::F32, {1}, TensorProperty::Constant);
  g.bind_f32(one, {1.0f});
  int t1 = g.add_tensor(DataType::F32, {8});
  int t2 = g.add_tensor(DataType::F32, {8});
  int o = g.add_tensor(DataType::F32, {8});
  g.add_op(OpKind::Add, {a, z}, {t1});
  g.add_op(OpKind::Mul, {t1, one}, {t2});
  g.add_op(OpKind::ReLU, {t2}, {o});
  g.inputs = {a};
  g.outputs = {o};
  cleanup_graph(g);
  CHECK(g.ops.size() == 1);
  CHECK(g.ops[0].kind == OpKind::ReLU);
  CHECK(g.ops[0].inputs[0] == a);
}

TEST_CASE("coarse grain marks compatible consecutive matmul regions") {
  // Two chained matmuls with identical M partitioning merge.
  Graph g;
  int a = g.add_tensor(DataType::F32, {128, 64});
  int w1 = g.add_tensor(DataType::F32, {64, 64});
  int w2 = g.add_tensor(DataType::F32, {64, 64});
  int c1 = g.add_tensor(DataType::F32, {128, 64});
  int c2 = g.add_tensor(DataType::F32, {128, 64});
  g.add_op(OpKind::MatMul, {a, w1}, {c1});
  g.add_op(OpKind::MatMul, {c1, w2}, {c2});
  g.inputs = {a, w1, w2};
  g.outputs = {c2};
  infer_shapes(g);
  MachineModel mm;
  std::map<int, MatmulParams> params;
  Graph l = propagate_layouts(g, mm, params);
  cleanup_graph(l);
  auto fused = fine_grain_fuse(l, params, mm);
  mark_coarse_grain(fused, l, params);
  int marked = 0;
  for (const auto &f : fused) marked += f.mergeable_with_next;
  CHECK(marked >= 1);
}
