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
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mtc {

enum class DataType { F32, S32, S8, U8 };

std::size_t dtype_size(DataType dt);
const char *dtype_name(DataType dt);
std::optional<DataType> dtype_from_name(const std::string &s);

// Representable range for integer dtypes (used by Clamp insertion and Cast).
std::pair<std::int64_t, std::int64_t> dtype_range(DataType dt);

/// Memory layout of a logical tensor. Blocked layouts only block the two
/// innermost axes, producing [..., D0/B0, D1/B1, B0, B1] with zero padding
/// up to the block multiple.
struct LayoutDesc {
  enum class Kind { Plain, Blocked, Any };
  Kind kind = Kind::Plain;
  // Blocked: (original_axis, block_size), one entry per blocked axis.
  std::vector<std::pair<int, std::int64_t>> block_dims;

  static LayoutDesc plain() { return {}; }
  static LayoutDesc any() { return {Kind::Any, {}}; }
  static LayoutDesc blocked2d(int axis0, std::int64_t b0, int axis1,
                              std::int64_t b1) {
    return {Kind::Blocked, {{axis0, b0}, {axis1, b1}}};
  }
  bool operator==(const LayoutDesc &o) const {
    return kind == o.kind && block_dims == o.block_dims;
  }
  bool is_plain() const { return kind == Kind::Plain; }
  bool is_blocked() const { return kind == Kind::Blocked; }
  std::string str() const;
};

// Storage extents (padded when blocked) for a logical shape under a layout.
std::vector<std::int64_t> storage_dims(const std::vector<std::int64_t> &shape,
                                       const LayoutDesc &layout);
std::int64_t storage_elems(const std::vector<std::int64_t> &shape,
                           const LayoutDesc &layout);

enum class TensorProperty { Variable, Constant };

struct LogicalTensor {
  int id = -1;
  DataType dtype = DataType::F32;
  std::vector<std::int64_t> shape;
  LayoutDesc layout;
  TensorProperty property = TensorProperty::Variable;

  std::int64_t elems() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::int64_t storage_bytes() const {
    return storage_elems(shape, layout) *
           static_cast<std::int64_t>(dtype_size(dtype));
  }
};

enum class OpKind {
  // Tunable
  MatMul,
  // Fusible
  Add, Sub, Mul, Div, Max, Min, ReLU, Exp, Cast, Round, Clamp,
  Broadcast, ReduceSum, ReduceMax, Reorder, Transpose,
  // Complex
  Quantize, Dequantize, Softmax, BiasAdd,
};

enum class OpCategory { Tunable, Fusible, Complex };

OpCategory category_of(OpKind k);
const char *op_kind_name(OpKind k);
std::optional<OpKind> op_kind_from_name(const std::string &s);

bool is_elementwise(OpKind k);   // unary or binary lane-wise
bool is_binary(OpKind k);
bool is_reduction(OpKind k);

using AttrValue = std::variant<std::int64_t, double, std::vector<std::int64_t>,
                               std::vector<double>, std::string>;

struct Op {
  int id = -1;
  OpKind kind = OpKind::Add;
  std::map<std::string, AttrValue> attrs;
  std::vector<int> inputs;
  std::vector<int> outputs;

  bool has_attr(const std::string &k) const { return attrs.count(k) != 0; }
  std::int64_t attr_i(const std::string &k, std::int64_t dflt = 0) const;
  double attr_f(const std::string &k, double dflt = 0.0) const;
  std::vector<double> attr_fv(const std::string &k) const;
};

struct Graph {
  std::vector<Op> ops;
  std::map<int, LogicalTensor> tensors;
  std::vector<int> inputs;
  std::vector<int> outputs;
  // Raw element data for Constant tensors bound at build time (row-major,
  // plain order, native dtype width).
  std::map<int, std::vector<std::byte>> const_data;
  bool fast_softmax = false;

  int next_tensor_id = 0;
  int next_op_id = 0;

  int add_tensor(DataType dt, std::vector<std::int64_t> shape,
                 TensorProperty prop = TensorProperty::Variable,
                 LayoutDesc layout = LayoutDesc::plain());
  Op &add_op(OpKind kind, std::vector<int> inputs, std::vector<int> outputs,
             std::map<std::string, AttrValue> attrs = {});

  const LogicalTensor &t(int id) const { return tensors.at(id); }
  LogicalTensor &t(int id) { return tensors.at(id); }
  const Op *producer(int tensor_id) const;
  std::vector<const Op *> consumers(int tensor_id) const;
  bool is_graph_output(int tensor_id) const;

  // Binds row-major data to a Constant tensor.
  void bind_f32(int tensor_id, const std::vector<float> &v);
  void bind_i(int tensor_id, const std::vector<std::int64_t> &v);
};

// Structural validation; returns all violations, empty means ok.
std::vector<std::string> validate_graph(const Graph &g);

// Topological op order; def-use respecting, ties broken by ascending op id.
// Throws std::runtime_error on cycles.
std::vector<int> topo_order(const Graph &g);

// Fills shapes/dtypes of every intermediate tensor in place. Throws
// std::runtime_error on incompatible shapes. Idempotent.
void infer_shapes(Graph &g);

/// A Tunable op with anchored pre-ops and post-ops, or a standalone Fusible
/// op (tunable unset) lowered as plain loops.
struct FusedOp {
  std::optional<int> tunable;
  std::vector<std::pair<int, int>> pre_ops;   // (op id, AnchorId as int)
  std::vector<std::pair<int, int>> post_ops;  // ordered
  bool mergeable_with_next = false;

  std::vector<int> all_op_ids() const;
};

}  // namespace mtc
