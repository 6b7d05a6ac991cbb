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

#include <fstream>
#include <random>
#include <sstream>

#include "mtc/compile.hpp"
#include "testutil.hpp"

using namespace mtc;

namespace {

// The reviewed scenario: plain-input MatMul with a constant weight (its pack
// folds away), so the activation-side entry reorder fuses at pre#4, with a
// ReLU and the plain-output boundary reorder both at post#1.
Graph golden_graph() {
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
  return g;
}

std::string read_file(const std::string &path) {
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "cannot open ", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("golden dump: matmul + pre reorder + relu + post reorder") {
  Graph g = golden_graph();
  CompiledModule cm = compile(g);

  // Anchor placement is part of the contract.
  bool pre4 = false, relu_post1 = false, out_post1 = false;
  for (const auto &d : cm.report.fusion_decisions) {
    if (!d.fused) continue;
    if (d.is_pre && d.anchor == static_cast<int>(AnchorId::Pre4)) pre4 = true;
    if (!d.is_pre && d.anchor == static_cast<int>(AnchorId::Post1)) {
      const Op *op = find_op(cm.graph, d.fusible_op);
      if (op && op->kind == OpKind::ReLU) relu_post1 = true;
      if (op && op->kind == OpKind::Reorder) out_post1 = true;
    }
  }
  CHECK(pre4);
  CHECK(relu_post1);
  CHECK(out_post1);

  std::string got = tir::print_module(cm.module);
  std::string want = read_file("golden/matmul_relu_reorder.tir");
  CHECK_MESSAGE(got == want,
                "dump drifted from the reviewed golden file;\n--- got ---\n",
                got);

  // Structural invariants behind the text: depth-5 nest, one brgemm.
  const tir::Function *f = nullptr;
  for (const auto &fn : cm.module.funcs)
    if (testutil::census(fn).brgemm > 0) f = &fn;
  REQUIRE(f);
  auto c = testutil::census(*f);
  CHECK(c.brgemm == 1);
  CHECK(c.max_loop_depth >= 5);  // mpi/npi/msi/ksi/nsi plus splice nests

  // And the module still computes the right thing.
  CHECK(testutil::check_vs_oracle(g, CompileOptions{}, 41, 2) == "");
}
