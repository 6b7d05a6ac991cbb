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
#include <vector>

#include "mtc/graph.hpp"

namespace mtc::oracle {

/// Flat row-major value; f64 storage for F32 tensors, exact integers for the
/// rest. Deliberately naive and layout-agnostic.
struct DenseValue {
  DataType dtype = DataType::F32;
  std::vector<std::int64_t> shape;
  std::vector<double> f;        // when dtype == F32
  std::vector<std::int64_t> i;  // otherwise

  std::int64_t elems() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  static DenseValue zeros(DataType dt, std::vector<std::int64_t> shape);
};

DenseValue from_bytes(DataType dt, const std::vector<std::int64_t> &shape,
                      const std::byte *data);
std::vector<std::byte> to_bytes(const DenseValue &v);

// Round half to even; the module-wide quantization rounding rule.
std::int64_t round_half_even(double x);

/// Naive op-by-op evaluation in topological order. Evaluates Complex ops
/// natively; Reorder is a logical identity. f64 accumulation throughout.
std::map<int, DenseValue> eval_graph(const Graph &g,
                                     const std::map<int, DenseValue> &inputs);

// Single-op evaluation, exposed for tests.
DenseValue eval_op(const Graph &g, const Op &op,
                   const std::vector<DenseValue> &ins);

}  // namespace mtc::oracle
