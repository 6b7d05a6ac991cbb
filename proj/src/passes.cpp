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

#include "mtc/passes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

namespace mtc {

const Op *find_op(const Graph &g, int op_id) {
  for (const auto &op : g.ops)
    if (op.id == op_id) return &op;
  return nullptr;
}

namespace {

Op *find_op_mut(Graph &g, int op_id) {
  for (auto &op : g.ops)
    if (op.id == op_id) return &op;
  return nullptr;
}

void note(PassPipelineReport *r, const std::string &s) {
  if (r) r->notes.push_back(s);
}

void count_ops(PassPipelineReport *r, const std::string &pass,
               const Graph &g) {
  if (r) r->op_counts.emplace_back(pass, static_cast<int>(g.ops.size()));
}

int scalar_f32_const(Graph &g, double v) {
  int t = g.add_tensor(DataType::F32, {1}, TensorProperty::Constant);
  g.bind_f32(t, {static_cast<float>(v)});
  return t;
}

int vector_f32_const(Graph &g, const std::vector<double> &v) {
  std::vector<float> f(v.begin(), v.end());
  int t = g.add_tensor(DataType::F32, {static_cast<std::int64_t>(v.size())},
                       TensorProperty::Constant);
  g.bind_f32(t, f);
  return t;
}

int scalar_s32_const(Graph &g, std::int64_t v) {
  int t = g.add_tensor(DataType::S32, {1}, TensorProperty::Constant);
  g.bind_i(t, {v});
  return t;
}

bool const_scalar_value(const Graph &g, int tid, double *out) {
  auto it = g.const_data.find(tid);
  if (it == g.const_data.end()) return false;
  const auto &lt = g.t(tid);
  if (lt.elems() != 1) return false;
  switch (lt.dtype) {
    case DataType::F32: {
      float f;
      std::memcpy(&f, it->second.data(), 4);
      *out = f;
      return true;
    }
    case DataType::S32: {
      std::int32_t x;
      std::memcpy(&x, it->second.data(), 4);
      *out = x;
      return true;
    }
    case DataType::S8: {
      std::int8_t x;
      std::memcpy(&x, it->second.data(), 1);
      *out = x;
      return true;
    }
    case DataType::U8: {
      std::uint8_t x;
      std::memcpy(&x, it->second.data(), 1);
      *out = x;
      return true;
    }
  }
  return false;
}

bool const_vector_value(const Graph &g, int tid, std::vector<double> *out) {
  auto it = g.const_data.find(tid);
  if (it == g.const_data.end()) return false;
  const auto &lt = g.t(tid);
  if (lt.dtype != DataType::F32) return false;
  out->clear();
  for (std::int64_t i = 0; i < lt.elems(); ++i) {
    float f;
    std::memcpy(&f, it->second.data() + i * 4, 4);
    out->push_back(f);
  }
  return true;
}

void rewire_uses(Graph &g, int from, int to) {
  for (auto &op : g.ops)
    for (auto &in : op.inputs)
      if (in == from) in = to;
}

// Drops tensors referenced by nothing.
void prune_tensors(Graph &g) {
  std::set<int> used(g.inputs.begin(), g.inputs.end());
  used.insert(g.outputs.begin(), g.outputs.end());
  for (const auto &op : g.ops) {
    used.insert(op.inputs.begin(), op.inputs.end());
    used.insert(op.outputs.begin(), op.outputs.end());
  }
  for (auto it = g.tensors.begin(); it != g.tensors.end();) {
    if (!used.count(it->first)) {
      g.const_data.erase(it->first);
      it = g.tensors.erase(it);
    } else {
      ++it;
    }
  }
}

std::string attr_key(const Op &op) {
  std::ostringstream os;
  os << op_kind_name(op.kind);
  for (const auto &[k, v] : op.attrs) {
    os << ";" << k << "=";
    std::visit(
        [&](const auto &x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, std::string>) {
            os << x;
          } else if constexpr (std::is_same_v<T, std::int64_t> ||
                               std::is_same_v<T, double>) {
            os << x;
          } else {
            for (const auto &e : x) os << e << ",";
          }
        },
        v);
  }
  for (int i : op.inputs) os << ";" << i;
  return os.str();
}

}  // namespace

void cleanup_graph(Graph &g, PassPipelineReport *report) {
  bool changed = true;
  while (changed) {
    changed = false;

    // Algebraic identities on binary ops with a scalar constant rhs.
    for (auto &op : g.ops) {
      if (!is_binary(op.kind)) continue;
      double v;
      if (op.inputs.size() != 2 || !const_scalar_value(g, op.inputs[1], &v))
        continue;
      bool identity = ((op.kind == OpKind::Add || op.kind == OpKind::Sub) &&
                       v == 0.0) ||
                      ((op.kind == OpKind::Mul || op.kind == OpKind::Div) &&
                       v == 1.0);
      if (!identity) continue;
      if (g.is_graph_output(op.outputs[0])) continue;
      rewire_uses(g, op.outputs[0], op.inputs[0]);
      op.outputs.clear();  // mark dead; removed below
      changed = true;
    }
    g.ops.erase(std::remove_if(g.ops.begin(), g.ops.end(),
                               [](const Op &o) { return o.outputs.empty(); }),
                g.ops.end());

    // CSE over elementwise ops with identical kind/attrs/inputs.
    std::map<std::string, int> seen;  // key -> output tensor
    for (auto &op : g.ops) {
      if (!is_elementwise(op.kind)) continue;
      auto key = attr_key(op);
      auto it = seen.find(key);
      if (it == seen.end()) {
        seen[key] = op.outputs[0];
        continue;
      }
      if (g.is_graph_output(op.outputs[0])) continue;
      rewire_uses(g, op.outputs[0], it->second);
      op.outputs.clear();
      changed = true;
    }
    g.ops.erase(std::remove_if(g.ops.begin(), g.ops.end(),
                               [](const Op &o) { return o.outputs.empty(); }),
                g.ops.end());

    // Dead-op elimination.
    std::set<int> consumed;
    for (const auto &op : g.ops)
      consumed.insert(op.inputs.begin(), op.inputs.end());
    consumed.insert(g.outputs.begin(), g.outputs.end());
    auto dead = [&](const Op &o) {
      for (int t : o.outputs)
        if (consumed.count(t)) return false;
      return true;
    };
    std::size_t before = g.ops.size();
    g.ops.erase(std::remove_if(g.ops.begin(), g.ops.end(), dead), g.ops.end());
    if (g.ops.size() != before) changed = true;
  }
  prune_tensors(g);
  (void)report;
}

// ------------------------------------------------------------- decompose

Graph decompose_complex(const Graph &in, PassPipelineReport *report) {
  Graph g = in;
  infer_shapes(g);
  bool again = true;
  while (again) {
    again = false;
    for (std::size_t i = 0; i < g.ops.size(); ++i) {
      Op op = g.ops[i];
      if (category_of(op.kind) != OpCategory::Complex) continue;
      g.ops.erase(g.ops.begin() + i);
      const auto &x = g.t(op.inputs[0]);
      int y = op.outputs[0];
      switch (op.kind) {
        case OpKind::Dequantize: {
          // Cast to f32, subtract zero point, then scale.
          int t1 = g.add_tensor(DataType::F32, x.shape);
          g.add_op(OpKind::Cast, {op.inputs[0]}, {t1},
                   {{"to", std::string("f32")}});
          int zc = scalar_f32_const(g, static_cast<double>(op.attr_i("zp")));
          int t2 = g.add_tensor(DataType::F32, x.shape);
          g.add_op(OpKind::Sub, {t1, zc}, {t2});
          int sc;
          if (op.attrs.count("scale") &&
              std::holds_alternative<std::vector<double>>(
                  op.attrs.at("scale"))) {
            sc = vector_f32_const(g, op.attr_fv("scale"));
          } else {
            sc = scalar_f32_const(g, op.attr_f("scale", 1.0));
          }
          g.add_op(OpKind::Mul, {t2, sc}, {y});
          break;
        }
        case OpKind::Quantize: {
          auto to = std::get<std::string>(op.attrs.at("to"));
          auto dt = dtype_from_name(to);
          if (!dt || (*dt != DataType::U8 && *dt != DataType::S8))
            throw std::runtime_error("quantize: target must be u8 or s8");
          int sc = scalar_f32_const(g, op.attr_f("scale", 1.0));
          int t1 = g.add_tensor(DataType::F32, x.shape);
          g.add_op(OpKind::Div, {op.inputs[0], sc}, {t1});
          int t2 = g.add_tensor(DataType::F32, x.shape);
          g.add_op(OpKind::Round, {t1}, {t2});
          int zc = scalar_f32_const(g, static_cast<double>(op.attr_i("zp")));
          int t3 = g.add_tensor(DataType::F32, x.shape);
          g.add_op(OpKind::Add, {t2, zc}, {t3});
          auto [lo, hi] = dtype_range(*dt);
          int t4 = g.add_tensor(DataType::F32, x.shape);
          g.add_op(OpKind::Clamp, {t3}, {t4},
                   {{"min", static_cast<double>(lo)},
                    {"max", static_cast<double>(hi)}});
          g.add_op(OpKind::Cast, {t4}, {y}, {{"to", to}});
          break;
        }
        case OpKind::Softmax: {
          std::int64_t axis = op.attr_i("axis", -1);
          if (axis < 0) axis += static_cast<std::int64_t>(x.shape.size());
          int exp_in = op.inputs[0];
          if (!g.fast_softmax) {
            auto rshape = x.shape;
            rshape[axis] = 1;
            int rm = g.add_tensor(x.dtype, rshape);
            g.add_op(OpKind::ReduceMax, {op.inputs[0]}, {rm}, {{"axis", axis}});
            int t1 = g.add_tensor(x.dtype, x.shape);
            g.add_op(OpKind::Sub, {op.inputs[0], rm}, {t1});
            exp_in = t1;
          }
          int t2 = g.add_tensor(x.dtype, x.shape);
          g.add_op(OpKind::Exp, {exp_in}, {t2});
          auto rshape = x.shape;
          rshape[axis] = 1;
          int rs = g.add_tensor(x.dtype, rshape);
          g.add_op(OpKind::ReduceSum, {t2}, {rs}, {{"axis", axis}});
          g.add_op(OpKind::Div, {t2, rs}, {y});
          break;
        }
        case OpKind::BiasAdd: {
          int bc = g.add_tensor(g.t(op.inputs[1]).dtype, x.shape);
          g.add_op(OpKind::Broadcast, {op.inputs[1]}, {bc},
                   {{"shape", x.shape}});
          g.add_op(OpKind::Add, {op.inputs[0], bc}, {y});
          break;
        }
        default:
          throw std::runtime_error("unknown complex op");
      }
      again = true;
      break;
    }
  }
  infer_shapes(g);
  cleanup_graph(g, report);
  infer_shapes(g);
  count_ops(report, "decompose", g);
  return g;
}

// ---------------------------------------------------------- low precision

namespace {

struct DequantMatch {
  bool ok = false;
  int q_tensor = -1;  // quantized integer tensor
  double zp = 0.0;
  std::vector<double> scale = {1.0};
};

// Matches (post-decomposition) Mul(Sub(Cast(q), z), s) ending at `t`, with
// the Sub and Mul each optional.
DequantMatch match_dequant(const Graph &g, int t) {
  DequantMatch m;
  const Op *p = g.producer(t);
  if (p && p->kind == OpKind::Mul) {
    std::vector<double> sv;
    double s;
    if (const_vector_value(g, p->inputs[1], &sv))
      m.scale = sv;
    else if (const_scalar_value(g, p->inputs[1], &s))
      m.scale = {s};
    else
      return m;
    p = g.producer(p->inputs[0]);
  }
  if (p && p->kind == OpKind::Sub) {
    double z;
    if (!const_scalar_value(g, p->inputs[1], &z)) return m;
    m.zp = z;
    p = g.producer(p->inputs[0]);
  }
  if (!p || p->kind != OpKind::Cast) return m;
  DataType qd = g.t(p->inputs[0]).dtype;
  if (qd != DataType::U8 && qd != DataType::S8) return m;
  m.q_tensor = p->inputs[0];
  m.ok = true;
  return m;
}

const Op *single_consumer(const Graph &g, int t) {
  auto cs = g.consumers(t);
  if (cs.size() != 1 || g.is_graph_output(t)) return nullptr;
  return cs[0];
}

}  // namespace

Graph low_precision_convert(const Graph &in, PassPipelineReport *report) {
  Graph g = in;
  infer_shapes(g);
  bool any = false;
  for (std::size_t oi = 0; oi < g.ops.size(); ++oi) {
    if (g.ops[oi].kind != OpKind::MatMul) continue;
    Op &mm = g.ops[oi];
    if (g.t(mm.inputs[0]).dtype != DataType::F32) continue;

    DequantMatch da = match_dequant(g, mm.inputs[0]);
    DequantMatch db = match_dequant(g, mm.inputs[1]);
    if (!da.ok || !db.ok) continue;
    if (g.t(da.q_tensor).dtype != DataType::U8 ||
        g.t(db.q_tensor).dtype != DataType::S8)
      continue;
    if (g.t(db.q_tensor).property != TensorProperty::Constant) {
      note(report, "low_precision: matmul " + std::to_string(mm.id) +
                       " skipped (non-constant weight)");
      continue;
    }

    // Output side: Div(c_s) -> Round -> Add(c_z) -> Clamp -> Cast.
    const Op *div = single_consumer(g, mm.outputs[0]);
    if (!div || div->kind != OpKind::Div) continue;
    double c_s;
    if (!const_scalar_value(g, div->inputs[1], &c_s)) continue;
    const Op *rnd = single_consumer(g, div->outputs[0]);
    if (!rnd || rnd->kind != OpKind::Round) continue;
    // The zero-point Add drops out of the chain when c_z == 0.
    const Op *clamp = single_consumer(g, rnd->outputs[0]);
    if (clamp && clamp->kind == OpKind::Add)
      clamp = single_consumer(g, clamp->outputs[0]);
    if (!clamp || clamp->kind != OpKind::Clamp) continue;
    const Op *cast = single_consumer(g, clamp->outputs[0]);
    if (!cast || cast->kind != OpKind::Cast) continue;

    // Rewrite: int8 matmul with s32 accumulation.
    int a_q = da.q_tensor, b_q = db.q_tensor;
    auto out_shape = g.t(mm.outputs[0]).shape;
    int acc = g.add_tensor(DataType::S32, out_shape);
    int div_out = div->outputs[0];
    int mm_id = mm.id;
    {
      Op *m = find_op_mut(g, mm_id);
      m->inputs = {a_q, b_q};
      m->outputs = {acc};
    }

    int cur = acc;
    std::int64_t a_z = static_cast<std::int64_t>(da.zp);
    if (a_z != 0) {
      // Compensation: Acc - a_z * colsum(B_q); a constant chain.
      const auto &bshape = g.t(b_q).shape;
      int cb = g.add_tensor(DataType::S32, bshape, TensorProperty::Constant);
      g.add_op(OpKind::Cast, {b_q}, {cb}, {{"to", std::string("s32")}});
      auto cshape = bshape;
      cshape[cshape.size() - 2] = 1;
      int colsum =
          g.add_tensor(DataType::S32, cshape, TensorProperty::Constant);
      g.add_op(OpKind::ReduceSum, {cb}, {colsum},
               {{"axis", static_cast<std::int64_t>(bshape.size()) - 2}});
      int az = scalar_s32_const(g, a_z);
      int comp = g.add_tensor(DataType::S32, cshape, TensorProperty::Constant);
      g.add_op(OpKind::Mul, {colsum, az}, {comp});
      int sub = g.add_tensor(DataType::S32, out_shape);
      g.add_op(OpKind::Sub, {cur, comp}, {sub});
      cur = sub;
    }
    int cf = g.add_tensor(DataType::F32, out_shape);
    g.add_op(OpKind::Cast, {cur}, {cf}, {{"to", std::string("f32")}});
    // Combined output scale a_s * b_s[n] / c_s folds to one constant.
    std::vector<double> combined;
    double a_s = da.scale.empty() ? 1.0 : da.scale[0];
    for (double bs : db.scale) combined.push_back(a_s * bs / c_s);
    int scale_t = combined.size() == 1 ? scalar_f32_const(g, combined[0])
                                       : vector_f32_const(g, combined);
    // The Mul takes over the Div's output; Round/Add/Clamp/Cast stay.
    g.add_op(OpKind::Mul, {cf, scale_t}, {div_out});
    g.ops.erase(std::remove_if(
                    g.ops.begin(), g.ops.end(),
                    [&](const Op &o) { return o.kind == OpKind::Div &&
                                              !o.outputs.empty() &&
                                              o.outputs[0] == div_out &&
                                              o.inputs[0] != cf; }),
                g.ops.end());
    any = true;
    note(report, "low_precision: rewrote matmul " + std::to_string(mm_id));
  }
  if (!any) note(report, "low_precision: pattern not found (no-op)");
  cleanup_graph(g, report);
  infer_shapes(g);
  count_ops(report, "low_precision", g);
  return g;
}

// --------------------------------------------------------------- layouts

Graph propagate_layouts(const Graph &in, const MachineModel &mm,
                        std::map<int, MatmulParams> &params,
                        PassPipelineReport *report) {
  Graph g = in;
  infer_shapes(g);
  for (int id : topo_order(g)) {
    Op *op = find_op_mut(g, id);
    if (op->kind == OpKind::MatMul) {
      const auto &a = g.t(op->inputs[0]);
      const auto &b = g.t(op->inputs[1]);
      std::size_t ra = a.shape.size(), rb = b.shape.size();
      std::int64_t M = a.shape[ra - 2], K = a.shape[ra - 1],
                   N = b.shape[rb - 1];
      bool batched = ra > 2;
      MachineModel m2 = mm;
      if (batched) m2.num_cores = 1;  // the batch loop carries parallelism
      MatmulParams p = choose_params(M, N, K, a.dtype, m2);
      params[op->id] = p;
      DesiredLayouts dl = desired_layouts(g, *op, p);

      for (int side = 0; side < 2; ++side) {
        int t = op->inputs[side];
        const LayoutDesc &want = side == 0 ? dl.a : dl.b;
        if (g.t(t).layout == want) continue;
        int rt = g.add_tensor(g.t(t).dtype, g.t(t).shape, g.t(t).property,
                              want);
        Op &ro = g.add_op(OpKind::Reorder, {t}, {rt});
        if (report) report->inserted_reorders.push_back(ro.id);
        op = find_op_mut(g, id);  // add_op may reallocate
        op->inputs[side] = rt;
      }
      g.t(op->outputs[0]).layout = dl.c;
    } else if (is_elementwise(op->kind)) {
      g.t(op->outputs[0]).layout = g.t(op->inputs[0]).layout;
    }
    // Reductions, Broadcast, Transpose, Reorder outputs keep their layout
    // (plain unless explicitly created blocked).
  }

  // Graph boundary stays plain: demote blocked graph outputs via a reorder.
  for (int out_t : g.outputs) {
    if (!g.t(out_t).layout.is_blocked()) continue;
    LayoutDesc blocked = g.t(out_t).layout;
    int bt = g.add_tensor(g.t(out_t).dtype, g.t(out_t).shape,
                          TensorProperty::Variable, blocked);
    for (auto &op : g.ops)
      for (auto &o : op.outputs)
        if (o == out_t) o = bt;
    rewire_uses(g, out_t, bt);
    Op &ro = g.add_op(OpKind::Reorder, {bt}, {out_t});
    if (report) report->inserted_reorders.push_back(ro.id);
    g.t(out_t).layout = LayoutDesc::plain();
  }
  cleanup_graph(g, report);
  infer_shapes(g);
  count_ops(report, "layouts", g);
  return g;
}

// ------------------------------------------------------------- constants

std::pair<Graph, ConstCachePlan> preprocess_constants(
    const Graph &in, PassPipelineReport *report) {
  Graph g = in;
  infer_shapes(g);
  ConstCachePlan plan;
  std::set<int> fold_op_ids;
  std::set<int> fold_outputs;

  for (int id : topo_order(g)) {
    Op *op = find_op_mut(g, id);
    bool all_const = true;
    for (int t : op->inputs)
      if (g.t(t).property != TensorProperty::Constant) all_const = false;
    if (!all_const) continue;
    for (int t : op->outputs) {
      g.t(t).property = TensorProperty::Constant;
      fold_outputs.insert(t);
    }
    plan.fold_ops.push_back(*op);
    fold_op_ids.insert(id);
  }

  if (!fold_op_ids.empty()) {
    // Raw constants feeding the fold function.
    std::set<int> raw;
    for (const auto &op : plan.fold_ops)
      for (int t : op.inputs)
        if (!fold_outputs.count(t)) raw.insert(t);
    plan.fold_inputs.assign(raw.begin(), raw.end());

    g.ops.erase(std::remove_if(g.ops.begin(), g.ops.end(),
                               [&](const Op &o) {
                                 return fold_op_ids.count(o.id) != 0;
                               }),
                g.ops.end());
    // Slots: fold outputs the main graph still reads.
    std::set<int> read;
    for (const auto &op : g.ops)
      read.insert(op.inputs.begin(), op.inputs.end());
    read.insert(g.outputs.begin(), g.outputs.end());
    for (int t : fold_outputs)
      if (read.count(t)) {
        plan.cache_slots[t] = g.t(t).storage_bytes();
        // Slots carry fold results, not raw constant data.
        g.t(t).property = TensorProperty::Variable;
      }
    if (report) report->cache_slot_sizes = plan.cache_slots;
    note(report,
         "const_preprocess: " + std::to_string(plan.fold_ops.size()) +
             " ops moved to fold, " + std::to_string(plan.cache_slots.size()) +
             " cache slots");
  }
  // NOTE: no cleanup_graph here; it would prune slot tensors that now lack
  // producers. Fold-internal tensors stay in the tensor table for lowering.
  count_ops(report, "const_preprocess", g);
  return {g, plan};
}

// ---------------------------------------------------------------- fusion

namespace {

bool reduction_fusible(const Graph &g, const Op &op) {
  if (!is_reduction(op.kind)) return false;
  const auto &in = g.t(op.inputs[0]);
  std::int64_t axis = op.attr_i("axis", -1);
  if (axis < 0) axis += static_cast<std::int64_t>(in.shape.size());
  return axis == static_cast<std::int64_t>(in.shape.size()) - 1;
}

bool swap_last2_perm(const Op &op) {
  if (!op.has_attr("perm")) return false;
  auto perm = std::get<std::vector<std::int64_t>>(op.attrs.at("perm"));
  std::size_t r = perm.size();
  if (r < 2) return false;
  for (std::size_t i = 0; i + 2 < r; ++i)
    if (perm[i] != static_cast<std::int64_t>(i)) return false;
  return perm[r - 2] == static_cast<std::int64_t>(r - 1) &&
         perm[r - 1] == static_cast<std::int64_t>(r - 2);
}

std::int64_t padded_extent(std::int64_t dim, const LayoutDesc &l, int axis) {
  for (auto [a, b] : l.block_dims)
    if (a == axis) return (dim + b - 1) / b * b;
  return dim;
}

}  // namespace

std::vector<FusedOp> fine_grain_fuse(const Graph &g,
                                     const std::map<int, MatmulParams> &params,
                                     const MachineModel &mm,
                                     PassPipelineReport *report) {
  std::vector<FusedOp> out;
  std::set<int> claimed;
  auto topo = topo_order(g);

  std::map<int, FusedOp> regions;  // matmul op id -> region
  for (int id : topo) {
    const Op *op = find_op(g, id);
    if (op->kind != OpKind::MatMul) continue;
    FusedOp region;
    region.tunable = id;
    claimed.insert(id);
    const MatmulParams &p = params.at(id);

    // ---- post-op growth
    int cur = op->outputs[0];
    int n_post = 0, n_reorder = 0, n_reduction = 0;
    std::int64_t extra_budget = g.t(op->outputs[0]).storage_bytes();
    std::int64_t extra_used = 0;
    AnchorId floor = AnchorId::Post1;
    while (n_post < 16) {
      auto cons = g.consumers(cur);
      if (g.is_graph_output(cur) && !cons.empty()) break;
      if (cons.size() != 1) {
        if (cons.size() > 1)
          note(report, "fusion: multi-consumer tensor " + std::to_string(cur) +
                           " stops post-op growth");
        break;
      }
      const Op *cand = cons[0];
      if (claimed.count(cand->id)) break;
      if (category_of(cand->kind) != OpCategory::Fusible) break;

      bool is_red = is_reduction(cand->kind);
      bool is_reo = cand->kind == OpKind::Reorder;
      bool ok_kind = is_elementwise(cand->kind) || is_reo ||
                     (is_red && reduction_fusible(g, *cand));
      if (!ok_kind) break;
      if (is_reo && n_reorder >= 1) break;
      if (is_red && n_reduction >= 1) break;

      // Reorder legality: the padded destination region must be covered by
      // the source slice so padding lanes get written.
      if (is_reo) {
        const auto &src = g.t(cand->inputs[0]);
        const auto &dst = g.t(cand->outputs[0]);
        if (dst.layout.is_blocked()) {
          int r = static_cast<int>(dst.shape.size());
          bool covered = true;
          for (int ax : {r - 2, r - 1})
            if (padded_extent(dst.shape[ax], dst.layout, ax) >
                padded_extent(src.shape[ax], src.layout, ax))
              covered = false;
          if (!covered) {
            note(report, "fusion: reorder " + std::to_string(cand->id) +
                             " not fused (destination padding not covered)");
            break;
          }
        }
      }

      // Absorbable broadcast feeding the binary's second operand.
      int bcast_id = -1;
      std::int64_t extra = 0;
      if (is_binary(cand->kind)) {
        int other = cand->inputs[0] == cur ? cand->inputs[1] : cand->inputs[0];
        if (other != cur) {
          const Op *bp = g.producer(other);
          if (bp && bp->kind == OpKind::Broadcast &&
              g.consumers(other).size() == 1 && !claimed.count(bp->id)) {
            bcast_id = bp->id;
            extra = g.t(bp->inputs[0]).storage_bytes();
          } else {
            extra = g.t(other).storage_bytes();
          }
        }
      }
      if (extra_used + extra > extra_budget) {
        note(report, "fusion: op " + std::to_string(cand->id) +
                         " not fused (additional input budget exceeded)");
        break;
      }

      AnchorQuery q;
      q.is_pre = false;
      q.operand = 2;
      q.elem_size =
          static_cast<std::int64_t>(dtype_size(g.t(cand->outputs[0]).dtype));
      q.extra_input_bytes = extra;
      q.needs_full_n = is_red;
      q.min_anchor = floor;
      q.standalone_elems = g.t(cand->outputs[0]).elems();
      AnchorChoice c = select_anchor(q, p, mm);
      if (report)
        report->fusion_decisions.push_back({id, cand->id, false, c.fuse,
                                            c.fuse ? static_cast<int>(c.anchor)
                                                   : -1,
                                            c.cost, c.no_fuse_cost, ""});
      if (!c.fuse) break;

      if (bcast_id >= 0) {
        region.post_ops.emplace_back(bcast_id, static_cast<int>(c.anchor));
        claimed.insert(bcast_id);
      }
      region.post_ops.emplace_back(cand->id, static_cast<int>(c.anchor));
      claimed.insert(cand->id);
      floor = c.anchor;
      extra_used += extra;
      ++n_post;
      if (is_reo) ++n_reorder;
      if (is_red) ++n_reduction;
      cur = cand->outputs[0];
      // A reduction collapses the n axis, so later ops no longer run over
      // the accumulator blocking; the chain ends here.
      if (is_red) break;
    }

    // ---- pre-op growth (entry-point reorder/transpose chains only)
    for (int side = 0; side < 2; ++side) {
      int t = op->inputs[side];
      std::vector<const Op *> chain;
      bool ok = true;
      int walker = t;
      while (true) {
        const Op *pr = g.producer(walker);
        if (!pr) break;
        if (claimed.count(pr->id)) {
          ok = false;
          break;
        }
        if (pr->kind == OpKind::Reorder ||
            (pr->kind == OpKind::Transpose && swap_last2_perm(*pr))) {
          if (g.consumers(walker).size() != 1 || g.is_graph_output(walker)) {
            ok = false;
            break;
          }
          chain.push_back(pr);
          walker = pr->inputs[0];
          continue;
        }
        ok = false;
        break;
      }
      if (!ok || chain.empty()) continue;
      // Chain origin must be a graph input (entry-point rule).
      if (std::find(g.inputs.begin(), g.inputs.end(), walker) ==
          g.inputs.end())
        continue;
      if (chain.size() > 2) continue;  // at most reorder(+transpose)
      int n_reo = 0, n_tr = 0;
      for (const Op *c : chain) {
        if (c->kind == OpKind::Reorder) ++n_reo;
        if (c->kind == OpKind::Transpose) ++n_tr;
      }
      if (n_reo > 1 || n_tr > 1) continue;

      AnchorQuery q;
      q.is_pre = true;
      q.operand = side;
      q.elem_size =
          static_cast<std::int64_t>(dtype_size(g.t(op->inputs[side]).dtype));
      q.standalone_elems = g.t(op->inputs[side]).elems();
      AnchorChoice c = select_anchor(q, p, mm);
      if (report)
        report->fusion_decisions.push_back({id, chain[0]->id, true, c.fuse,
                                            c.fuse ? static_cast<int>(c.anchor)
                                                   : -1,
                                            c.cost, c.no_fuse_cost, ""});
      if (!c.fuse) continue;
      // Execution order: origin-most first.
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        region.pre_ops.emplace_back((*it)->id, static_cast<int>(c.anchor));
        claimed.insert((*it)->id);
      }
    }
    regions[id] = std::move(region);
  }

  for (int id : topo) {
    if (regions.count(id)) {
      out.push_back(std::move(regions[id]));
      continue;
    }
    if (claimed.count(id)) continue;
    FusedOp standalone;
    standalone.post_ops.emplace_back(id, -1);
    out.push_back(std::move(standalone));
  }
  return out;
}

// ------------------------------------------------------------ coarse grain

namespace {

int region_output_tensor(const Graph &g, const FusedOp &f) {
  if (!f.post_ops.empty() && f.tunable)
    return find_op(g, f.post_ops.back().first)->outputs[0];
  if (f.tunable) return find_op(g, *f.tunable)->outputs[0];
  return find_op(g, f.post_ops[0].first)->outputs[0];
}

}  // namespace

void mark_coarse_grain(std::vector<FusedOp> &fused, const Graph &g,
                       const std::map<int, MatmulParams> &params) {
  for (std::size_t i = 0; i + 1 < fused.size(); ++i) {
    FusedOp &a = fused[i];
    FusedOp &b = fused[i + 1];
    int out_t = region_output_tensor(g, a);
    int out_b = region_output_tensor(g, b);

    // The next region must read this region's output directly.
    bool consumes = false;
    bool via_a_input = false;
    std::set<int> b_internal;
    for (int oid : b.all_op_ids())
      for (int ot : find_op(g, oid)->outputs) b_internal.insert(ot);
    for (int oid : b.all_op_ids()) {
      const Op *op = find_op(g, oid);
      for (std::size_t k = 0; k < op->inputs.size(); ++k)
        if (op->inputs[k] == out_t) {
          consumes = true;
          if (b.tunable && oid == *b.tunable && k == 0) via_a_input = true;
        }
    }
    if (!consumes) continue;

    const auto &ash = g.t(out_t).shape;
    const auto &bsh = g.t(out_b).shape;
    bool a_batched = ash.size() > 2, b_batched = bsh.size() > 2;

    if (a_batched && b_batched && ash[0] == bsh[0]) {
      // Both outer loops iterate the shared leading batch dim.  The merged
      // body runs one batch slice of each region back to back, so every
      // tensor the next region reads that is produced elsewhere in the
      // graph must be sliced by that same leading dim.
      bool aligned = true;
      for (int oid : b.all_op_ids()) {
        const Op *op = find_op(g, oid);
        for (int in : op->inputs) {
          if (b_internal.count(in) || !g.producer(in)) continue;
          const auto &sh = g.t(in).shape;
          if (sh.size() < 3 || sh[0] != ash[0]) aligned = false;
        }
      }
      if (aligned) a.mergeable_with_next = true;
      continue;
    }
    if (a_batched || b_batched) continue;
    if (!a.tunable || !b.tunable) continue;

    // Non-batched: outer loops iterate mpi; require an identical,
    // row-aligned m partition and row-wise consumption (A input).
    const MatmulParams &pa = params.at(*a.tunable);
    const MatmulParams &pb = params.at(*b.tunable);
    if (!via_a_input) continue;
    if (pa.MPN == pb.MPN && pa.MSBN() == pb.MSBN() &&
        pa.padded_m == pb.padded_m && pa.MPN > 0)
      a.mergeable_with_next = true;
  }
}

}  // namespace mtc
