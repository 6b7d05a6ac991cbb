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

#include "mtc/graph.hpp"

#include <algorithm>
#include <cstring>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mtc {

std::size_t dtype_size(DataType dt) {
  switch (dt) {
    case DataType::F32:
    case DataType::S32:
      return 4;
    case DataType::S8:
    case DataType::U8:
      return 1;
  }
  return 0;
}

const char *dtype_name(DataType dt) {
  switch (dt) {
    case DataType::F32: return "f32";
    case DataType::S32: return "s32";
    case DataType::S8: return "s8";
    case DataType::U8: return "u8";
  }
  return "?";
}

std::optional<DataType> dtype_from_name(const std::string &s) {
  if (s == "f32") return DataType::F32;
  if (s == "s32") return DataType::S32;
  if (s == "s8") return DataType::S8;
  if (s == "u8") return DataType::U8;
  return std::nullopt;
}

std::pair<std::int64_t, std::int64_t> dtype_range(DataType dt) {
  switch (dt) {
    case DataType::U8: return {0, 255};
    case DataType::S8: return {-128, 127};
    case DataType::S32: return {INT32_MIN, INT32_MAX};
    case DataType::F32: return {0, 0};
  }
  return {0, 0};
}

std::string LayoutDesc::str() const {
  switch (kind) {
    case Kind::Plain: return "plain";
    case Kind::Any: return "any";
    case Kind::Blocked: {
      std::ostringstream os;
      os << "blocked[";
      for (std::size_t i = 0; i < block_dims.size(); ++i) {
        if (i) os << ",";
        os << "a" << block_dims[i].first << ":" << block_dims[i].second;
      }
      os << "]";
      return os.str();
    }
  }
  return "?";
}

std::vector<std::int64_t> storage_dims(const std::vector<std::int64_t> &shape,
                                       const LayoutDesc &layout) {
  if (!layout.is_blocked()) return shape;
  // Blocked axes become outer block-count dims followed by trailing block
  // dims, in block_dims order. Non-blocked axes keep their position.
  std::vector<std::int64_t> outer(shape.begin(), shape.end());
  std::vector<std::int64_t> tail;
  for (auto [axis, b] : layout.block_dims) {
    outer[axis] = (shape[axis] + b - 1) / b;
    tail.push_back(b);
  }
  outer.insert(outer.end(), tail.begin(), tail.end());
  return outer;
}

std::int64_t storage_elems(const std::vector<std::int64_t> &shape,
                           const LayoutDesc &layout) {
  std::int64_t n = 1;
  for (auto d : storage_dims(shape, layout)) n *= d;
  return n;
}

OpCategory category_of(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return OpCategory::Tunable;
    case OpKind::Quantize:
    case OpKind::Dequantize:
    case OpKind::Softmax:
    case OpKind::BiasAdd:
      return OpCategory::Complex;
    default: return OpCategory::Fusible;
  }
}

const char *op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return "MatMul";
    case OpKind::Add: return "Add";
    case OpKind::Sub: return "Sub";
    case OpKind::Mul: return "Mul";
    case OpKind::Div: return "Div";
    case OpKind::Max: return "Max";
    case OpKind::Min: return "Min";
    case OpKind::ReLU: return "ReLU";
    case OpKind::Exp: return "Exp";
    case OpKind::Cast: return "Cast";
    case OpKind::Round: return "Round";
    case OpKind::Clamp: return "Clamp";
    case OpKind::Broadcast: return "Broadcast";
    case OpKind::ReduceSum: return "ReduceSum";
    case OpKind::ReduceMax: return "ReduceMax";
    case OpKind::Reorder: return "Reorder";
    case OpKind::Transpose: return "Transpose";
    case OpKind::Quantize: return "Quantize";
    case OpKind::Dequantize: return "Dequantize";
    case OpKind::Softmax: return "Softmax";
    case OpKind::BiasAdd: return "BiasAdd";
  }
  return "?";
}

std::optional<OpKind> op_kind_from_name(const std::string &s) {
  static const std::map<std::string, OpKind> m = {
      {"MatMul", OpKind::MatMul},       {"Add", OpKind::Add},
      {"Sub", OpKind::Sub},             {"Mul", OpKind::Mul},
      {"Div", OpKind::Div},             {"Max", OpKind::Max},
      {"Min", OpKind::Min},             {"ReLU", OpKind::ReLU},
      {"Exp", OpKind::Exp},             {"Cast", OpKind::Cast},
      {"Round", OpKind::Round},         {"Clamp", OpKind::Clamp},
      {"Broadcast", OpKind::Broadcast}, {"ReduceSum", OpKind::ReduceSum},
      {"ReduceMax", OpKind::ReduceMax}, {"Reorder", OpKind::Reorder},
      {"Transpose", OpKind::Transpose}, {"Quantize", OpKind::Quantize},
      {"Dequantize", OpKind::Dequantize}, {"Softmax", OpKind::Softmax},
      {"BiasAdd", OpKind::BiasAdd},
  };
  auto it = m.find(s);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

bool is_binary(OpKind k) {
  switch (k) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div:
    case OpKind::Max:
    case OpKind::Min:
      return true;
    default: return false;
  }
}

bool is_elementwise(OpKind k) {
  if (is_binary(k)) return true;
  switch (k) {
    case OpKind::ReLU:
    case OpKind::Exp:
    case OpKind::Cast:
    case OpKind::Round:
    case OpKind::Clamp:
      return true;
    default: return false;
  }
}

bool is_reduction(OpKind k) {
  return k == OpKind::ReduceSum || k == OpKind::ReduceMax;
}

std::int64_t Op::attr_i(const std::string &k, std::int64_t dflt) const {
  auto it = attrs.find(k);
  if (it == attrs.end()) return dflt;
  if (auto *p = std::get_if<std::int64_t>(&it->second)) return *p;
  if (auto *p = std::get_if<double>(&it->second))
    return static_cast<std::int64_t>(*p);
  throw std::runtime_error("attr " + k + " is not an integer");
}

double Op::attr_f(const std::string &k, double dflt) const {
  auto it = attrs.find(k);
  if (it == attrs.end()) return dflt;
  if (auto *p = std::get_if<double>(&it->second)) return *p;
  if (auto *p = std::get_if<std::int64_t>(&it->second))
    return static_cast<double>(*p);
  throw std::runtime_error("attr " + k + " is not a number");
}

std::vector<double> Op::attr_fv(const std::string &k) const {
  auto it = attrs.find(k);
  if (it == attrs.end()) return {};
  if (auto *p = std::get_if<std::vector<double>>(&it->second)) return *p;
  if (auto *p = std::get_if<double>(&it->second)) return {*p};
  if (auto *p = std::get_if<std::int64_t>(&it->second))
    return {static_cast<double>(*p)};
  throw std::runtime_error("attr " + k + " is not a number vector");
}

int Graph::add_tensor(DataType dt, std::vector<std::int64_t> shape,
                      TensorProperty prop, LayoutDesc layout) {
  LogicalTensor lt;
  lt.id = next_tensor_id++;
  lt.dtype = dt;
  lt.shape = std::move(shape);
  lt.layout = std::move(layout);
  lt.property = prop;
  tensors[lt.id] = lt;
  return lt.id;
}

Op &Graph::add_op(OpKind kind, std::vector<int> in, std::vector<int> out,
                  std::map<std::string, AttrValue> attrs) {
  Op op;
  op.id = next_op_id++;
  op.kind = kind;
  op.inputs = std::move(in);
  op.outputs = std::move(out);
  op.attrs = std::move(attrs);
  ops.push_back(std::move(op));
  return ops.back();
}

const Op *Graph::producer(int tensor_id) const {
  for (const auto &op : ops)
    for (int o : op.outputs)
      if (o == tensor_id) return &op;
  return nullptr;
}

std::vector<const Op *> Graph::consumers(int tensor_id) const {
  std::vector<const Op *> r;
  for (const auto &op : ops)
    for (int i : op.inputs)
      if (i == tensor_id) {
        r.push_back(&op);
        break;
      }
  return r;
}

bool Graph::is_graph_output(int tensor_id) const {
  return std::find(outputs.begin(), outputs.end(), tensor_id) != outputs.end();
}

void Graph::bind_f32(int tensor_id, const std::vector<float> &v) {
  auto &buf = const_data[tensor_id];
  buf.resize(v.size() * 4);
  std::memcpy(buf.data(), v.data(), buf.size());
}

void Graph::bind_i(int tensor_id, const std::vector<std::int64_t> &v) {
  const auto &lt = tensors.at(tensor_id);
  auto &buf = const_data[tensor_id];
  std::size_t es = dtype_size(lt.dtype);
  buf.resize(v.size() * es);
  for (std::size_t i = 0; i < v.size(); ++i) {
    switch (lt.dtype) {
      case DataType::S32: {
        std::int32_t x = static_cast<std::int32_t>(v[i]);
        std::memcpy(buf.data() + i * 4, &x, 4);
        break;
      }
      case DataType::S8: {
        std::int8_t x = static_cast<std::int8_t>(v[i]);
        std::memcpy(buf.data() + i, &x, 1);
        break;
      }
      case DataType::U8: {
        std::uint8_t x = static_cast<std::uint8_t>(v[i]);
        std::memcpy(buf.data() + i, &x, 1);
        break;
      }
      case DataType::F32: {
        float x = static_cast<float>(v[i]);
        std::memcpy(buf.data() + i * 4, &x, 4);
        break;
      }
    }
  }
}

namespace {

bool arity_ok(const Op &op) {
  switch (op.kind) {
    case OpKind::MatMul: return op.inputs.size() == 2 && op.outputs.size() == 1;
    case OpKind::BiasAdd: return op.inputs.size() == 2 && op.outputs.size() == 1;
    default:
      if (is_binary(op.kind))
        return op.inputs.size() == 2 && op.outputs.size() == 1;
      return op.inputs.size() == 1 && op.outputs.size() == 1;
  }
}

}  // namespace

std::vector<std::string> validate_graph(const Graph &g) {
  std::vector<std::string> errs;
  std::map<int, int> producer_count;
  std::set<int> op_ids;
  for (const auto &op : g.ops) {
    if (op_ids.count(op.id))
      errs.push_back("duplicate op id " + std::to_string(op.id));
    op_ids.insert(op.id);
    if (!arity_ok(op))
      errs.push_back("op " + std::to_string(op.id) + " (" +
                     op_kind_name(op.kind) + "): arity mismatch");
    for (int t : op.inputs)
      if (!g.tensors.count(t))
        errs.push_back("op " + std::to_string(op.id) + ": dangling input tensor " +
                       std::to_string(t));
    for (int t : op.outputs) {
      if (!g.tensors.count(t)) {
        errs.push_back("op " + std::to_string(op.id) +
                       ": dangling output tensor " + std::to_string(t));
        continue;
      }
      producer_count[t]++;
      if (producer_count[t] > 1)
        errs.push_back("tensor " + std::to_string(t) + ": multiple producers");
    }
  }
  for (int t : g.inputs) {
    if (!g.tensors.count(t))
      errs.push_back("graph input references unknown tensor " + std::to_string(t));
    else if (producer_count.count(t))
      errs.push_back("graph input tensor " + std::to_string(t) + " has a producer");
  }
  for (int t : g.outputs)
    if (!g.tensors.count(t))
      errs.push_back("graph output references unknown tensor " + std::to_string(t));

  // Shape compatibility where shapes are already known.
  for (const auto &op : g.ops) {
    if (op.kind == OpKind::MatMul && op.inputs.size() == 2 &&
        g.tensors.count(op.inputs[0]) && g.tensors.count(op.inputs[1])) {
      const auto &a = g.t(op.inputs[0]).shape;
      const auto &b = g.t(op.inputs[1]).shape;
      if (a.size() >= 2 && b.size() >= 2 &&
          a[a.size() - 1] != b[b.size() - 2])
        errs.push_back("op " + std::to_string(op.id) +
                       ": contraction dim mismatch");
    }
  }

  // Cycle detection via topo attempt.
  try {
    topo_order(g);
  } catch (const std::exception &e) {
    errs.push_back(e.what());
  }
  return errs;
}

std::vector<int> topo_order(const Graph &g) {
  std::map<int, const Op *> by_id;
  std::map<int, int> tensor_producer;  // tensor -> op id
  for (const auto &op : g.ops) {
    by_id[op.id] = &op;
    for (int t : op.outputs) tensor_producer[t] = op.id;
  }
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> succ;
  for (const auto &op : g.ops) {
    indeg[op.id] += 0;
    for (int t : op.inputs) {
      auto it = tensor_producer.find(t);
      if (it != tensor_producer.end() && it->second != op.id) {
        succ[it->second].push_back(op.id);
        indeg[op.id]++;
      }
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (auto &[id, d] : indeg)
    if (d == 0) ready.push(id);
  std::vector<int> order;
  while (!ready.empty()) {
    int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (int s : succ[id])
      if (--indeg[s] == 0) ready.push(s);
  }
  if (order.size() != g.ops.size())
    throw std::runtime_error("cycle detected in graph");
  return order;
}

namespace {

std::vector<std::int64_t> broadcast_shape(const std::vector<std::int64_t> &a,
                                          const std::vector<std::int64_t> &b) {
  std::size_t n = std::max(a.size(), b.size());
  std::vector<std::int64_t> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1)
      throw std::runtime_error("incompatible broadcast shapes");
    r[i] = std::max(da, db);
  }
  return r;
}

}  // namespace

void infer_shapes(Graph &g) {
  for (int t : g.inputs) {
    const auto &lt = g.t(t);
    if (lt.shape.empty())
      throw std::runtime_error("graph input tensor " + std::to_string(t) +
                               " has no shape");
    for (auto d : lt.shape)
      if (d <= 0) throw std::runtime_error("dynamic or non-positive dim rejected");
  }
  for (int id : topo_order(g)) {
    Op *op = nullptr;
    for (auto &o : g.ops)
      if (o.id == id) op = &o;
    const auto &in0 = g.t(op->inputs[0]);
    auto &out = g.t(op->outputs[0]);
    switch (op->kind) {
      case OpKind::MatMul: {
        const auto &a = in0.shape;
        const auto &b = g.t(op->inputs[1]).shape;
        if (a.size() < 2 || b.size() < 2)
          throw std::runtime_error("matmul inputs must be rank >= 2");
        if (a[a.size() - 1] != b[b.size() - 2])
          throw std::runtime_error("contraction dim mismatch");
        std::vector<std::int64_t> batch(a.begin(), a.end() - 2);
        std::vector<std::int64_t> bbatch(b.begin(), b.end() - 2);
        if (!bbatch.empty() && bbatch != batch)
          throw std::runtime_error("matmul batch dims mismatch");
        auto shape = batch;
        shape.push_back(a[a.size() - 2]);
        shape.push_back(b[b.size() - 1]);
        out.shape = shape;
        DataType ad = in0.dtype, bd = g.t(op->inputs[1]).dtype;
        if (ad == DataType::F32 && bd == DataType::F32)
          out.dtype = DataType::F32;
        else if ((ad == DataType::U8 || ad == DataType::S8) &&
                 (bd == DataType::S8 || bd == DataType::U8))
          out.dtype = DataType::S32;
        else
          throw std::runtime_error("unsupported matmul dtype pair");
        break;
      }
      case OpKind::BiasAdd: {
        out.shape = in0.shape;
        out.dtype = in0.dtype;
        break;
      }
      case OpKind::Cast: {
        out.shape = in0.shape;
        auto dt = dtype_from_name(std::get<std::string>(op->attrs.at("to")));
        if (!dt) throw std::runtime_error("cast: bad target dtype");
        out.dtype = *dt;
        break;
      }
      case OpKind::Broadcast: {
        auto tgt = std::get<std::vector<std::int64_t>>(op->attrs.at("shape"));
        out.shape = broadcast_shape(in0.shape, tgt);
        if (out.shape != tgt)
          throw std::runtime_error("broadcast: input not expandable to target");
        out.dtype = in0.dtype;
        break;
      }
      case OpKind::ReduceSum:
      case OpKind::ReduceMax: {
        std::int64_t axis = op->attr_i("axis", -1);
        if (axis < 0) axis += static_cast<std::int64_t>(in0.shape.size());
        if (axis < 0 || axis >= static_cast<std::int64_t>(in0.shape.size()))
          throw std::runtime_error("reduction axis out of range");
        out.shape = in0.shape;
        out.shape[axis] = 1;  // keepdim
        out.dtype = in0.dtype;
        break;
      }
      case OpKind::Transpose: {
        auto perm = std::get<std::vector<std::int64_t>>(op->attrs.at("perm"));
        if (perm.size() != in0.shape.size())
          throw std::runtime_error("transpose perm rank mismatch");
        out.shape.resize(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i)
          out.shape[i] = in0.shape[perm[i]];
        out.dtype = in0.dtype;
        break;
      }
      case OpKind::Reorder: {
        out.shape = in0.shape;
        out.dtype = in0.dtype;
        break;
      }
      case OpKind::Quantize: {
        out.shape = in0.shape;
        auto dt = dtype_from_name(std::get<std::string>(op->attrs.at("to")));
        if (!dt || (*dt != DataType::U8 && *dt != DataType::S8))
          throw std::runtime_error("quantize: target must be u8 or s8");
        out.dtype = *dt;
        break;
      }
      case OpKind::Dequantize: {
        out.shape = in0.shape;
        out.dtype = DataType::F32;
        break;
      }
      case OpKind::Softmax:
      case OpKind::ReLU:
      case OpKind::Exp:
      case OpKind::Round:
      case OpKind::Clamp: {
        out.shape = in0.shape;
        out.dtype = in0.dtype;
        break;
      }
      default: {  // binary elementwise
        const auto &b = g.t(op->inputs[1]);
        out.shape = broadcast_shape(in0.shape, b.shape);
        if (in0.dtype != b.dtype)
          throw std::runtime_error("binary op dtype mismatch");
        out.dtype = in0.dtype;
        break;
      }
    }
  }
}

std::vector<int> FusedOp::all_op_ids() const {
  std::vector<int> r;
  for (auto &[id, a] : pre_ops) r.push_back(id);
  if (tunable) r.push_back(*tunable);
  for (auto &[id, a] : post_ops) r.push_back(id);
  return r;
}

}  // namespace mtc
