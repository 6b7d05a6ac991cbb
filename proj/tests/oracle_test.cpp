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

#include <cmath>

#include "mtc/oracle.hpp"
#include "mtc/passes.hpp"
#include "mtc/workloads.hpp"
#include "testutil.hpp"

using namespace mtc;
using oracle::DenseValue;

TEST_CASE("round half to even") {
  CHECK(oracle::round_half_even(0.5) == 0);
  CHECK(oracle::round_half_even(1.5) == 2);
  CHECK(oracle::round_half_even(2.5) == 2);
  CHECK(oracle::round_half_even(-0.5) == 0);
  CHECK(oracle::round_half_even(-1.5) == -2);
  CHECK(oracle::round_half_even(1.49) == 1);
  CHECK(oracle::round_half_even(-1.51) == -2);
}

TEST_CASE("matmul hand values") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {2, 3});
  int b = g.add_tensor(DataType::F32, {3, 2});
  int c = g.add_tensor(DataType::F32, {2, 2});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.inputs = {a, b};
  g.outputs = {c};
  std::map<int, DenseValue> in;
  in[a] = {DataType::F32, {2, 3}, {1, 2, 3, 4, 5, 6}, {}};
  in[b] = {DataType::F32, {3, 2}, {7, 8, 9, 10, 11, 12}, {}};
  auto out = oracle::eval_graph(g, in);
  CHECK(out.at(c).f == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("batched matmul broadcasts over leading axes") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {2, 1, 2});
  int b = g.add_tensor(DataType::F32, {2, 2, 1});
  int c = g.add_tensor(DataType::F32, {});
  g.add_op(OpKind::MatMul, {a, b}, {c});
  g.inputs = {a, b};
  g.outputs = {c};
  infer_shapes(g);
  CHECK(g.t(c).shape == std::vector<std::int64_t>{2, 1, 1});
  std::map<int, DenseValue> in;
  in[a] = {DataType::F32, {2, 1, 2}, {1, 2, 3, 4}, {}};
  in[b] = {DataType::F32, {2, 2, 1}, {5, 6, 7, 8}, {}};
  auto out = oracle::eval_graph(g, in);
  CHECK(out.at(c).f == std::vector<double>{17, 53});
}

TEST_CASE("softmax rows sum to one and match exp/sum") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {2, 3});
  int c = g.add_tensor(DataType::F32, {2, 3});
  g.add_op(OpKind::Softmax, {a}, {c}, {{"axis", std::int64_t{-1}}});
  g.inputs = {a};
  g.outputs = {c};
  std::map<int, DenseValue> in;
  in[a] = {DataType::F32, {2, 3}, {0, 1, 2, -1, 0, 1}, {}};
  auto out = oracle::eval_graph(g, in);
  double z = std::exp(0.0) + std::exp(1.0) + std::exp(2.0);
  CHECK(out.at(c).f[0] == doctest::Approx(std::exp(0.0) / z));
  CHECK(out.at(c).f[2] == doctest::Approx(std::exp(2.0) / z));
  // Shift invariance: rows 0 and 1 differ by a constant shift.
  CHECK(out.at(c).f[3] == doctest::Approx(out.at(c).f[0]));
}

TEST_CASE("quantize / dequantize hand values") {
  Graph g;
  int a = g.add_tensor(DataType::F32, {4});
  int q = g.add_tensor(DataType::U8, {4});
  int d = g.add_tensor(DataType::F32, {4});
  g.add_op(OpKind::Quantize, {a}, {q},
           {{"to", std::string("u8")}, {"scale", 0.5}, {"zp", std::int64_t{10}}});
  g.add_op(OpKind::Dequantize, {q}, {d},
           {{"scale", 0.5}, {"zp", std::int64_t{10}}});
  g.inputs = {a};
  g.outputs = {q, d};
  std::map<int, DenseValue> in;
  in[a] = {DataType::F32, {4}, {0.0, 1.0, -100.0, 1000.0}, {}};
  auto out = oracle::eval_graph(g, in);
  // q = clamp(round(x/s) + z, 0, 255)
  CHECK(out.at(q).i == std::vector<std::int64_t>{10, 12, 0, 255});
  CHECK(out.at(d).f == std::vector<double>{0.0, 1.0, -5.0, 122.5});
}

TEST_CASE("decomposed complex ops match native oracle evaluation") {
  for (const char *name : {"mlp1", "mha1"}) {
    for (DataType dt : {DataType::F32, DataType::U8}) {
      Graph g = workloads::make_workload(
          name, dt == DataType::F32 ? DataType::F32 : DataType::U8, 32, 16, 7);
      auto ins = testutil::random_inputs(g, 11);
      auto want = oracle::eval_graph(g, ins);
      Graph d = decompose_complex(g);
      infer_shapes(d);
      auto got = oracle::eval_graph(d, ins);
      for (int t : g.outputs) {
        REQUIRE(got.count(t));
        const auto &a = got.at(t);
        const auto &b = want.at(t);
        REQUIRE(a.elems() == b.elems());
        for (std::int64_t i = 0; i < a.elems(); ++i) {
          if (a.dtype == DataType::F32)
            CHECK(a.f[i] == doctest::Approx(b.f[i]).epsilon(1e-9));
          else
            CHECK(std::llabs(a.i[i] - b.i[i]) <= 1);
        }
      }
    }
  }
}

TEST_CASE("byte conversion round trips") {
  DenseValue v{DataType::S8, {3}, {}, {-5, 0, 7}};
  auto b = oracle::to_bytes(v);
  auto w = oracle::from_bytes(DataType::S8, {3}, b.data());
  CHECK(w.i == v.i);
  DenseValue f{DataType::F32, {2}, {1.25, -2.5}, {}};
  auto fb = oracle::to_bytes(f);
  auto fw = oracle::from_bytes(DataType::F32, {2}, fb.data());
  CHECK(fw.f == f.f);
}
