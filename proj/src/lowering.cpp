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

#include "mtc/lowering.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace mtc {

namespace {

using namespace tir;

std::string lower_name(const char *s) {
  std::string out(s);
  for (auto &c : out) c = static_cast<char>(std::tolower(c));
  return out;
}

struct Lower {
  const Graph &g;
  const std::vector<FusedOp> &fused;
  const std::map<int, MatmulParams> &params;
  const ConstCachePlan &cplan;
  LowerOptions opt;

  Module m;
  std::map<int, int> glob;  // graph tensor id -> global decl id
  std::vector<std::string> notes;
  std::map<int, int> op_region;  // op id -> region index
};

TensorDecl make_decl(const Graph &g, int gt, int id, Storage st,
                     std::string name) {
  const auto &t = g.t(gt);
  TensorDecl d;
  d.id = id;
  d.name = std::move(name);
  d.type = stype_of(t.dtype);
  d.dims = storage_dims(t.shape, t.layout);
  d.storage = st;
  return d;
}

// Per-function build context. All external tensors are accessed through
// Param decls in region functions; the fold function reads globals directly.
struct Fn {
  Lower &L;
  Function fn;
  std::map<int, int> tmap;      // graph tensor -> decl id in this function
  std::vector<int> call_args;   // module globals, in param order

  explicit Fn(Lower &l) : L(l) {}

  int var(const std::string &name) {
    int id = L.m.fresh_var();
    fn.vars.push_back({id, name, SType::I64});
    return id;
  }

  int param(int gt) {
    auto it = tmap.find(gt);
    if (it != tmap.end()) return it->second;
    int id = L.m.fresh_tensor();
    fn.decls.push_back(make_decl(L.g, gt, id, Storage::Param,
                                 "p" + std::to_string(gt)));
    fn.params.push_back(id);
    call_args.push_back(L.glob.at(gt));
    tmap[gt] = id;
    return id;
  }

  int local(int gt, Storage st, const std::string &name) {
    int id = L.m.fresh_tensor();
    fn.decls.push_back(make_decl(L.g, gt, id, st, name));
    tmap[gt] = id;
    return id;
  }

  int tid(int gt) const {
    auto it = tmap.find(gt);
    if (it != tmap.end()) return it->second;
    return L.glob.at(gt);
  }

  // Storage index expressions for logical coordinates under t's layout.
  std::vector<ExprP> layout_index(const LogicalTensor &t,
                                  const std::vector<ExprP> &coords) const {
    if (!t.layout.is_blocked()) return coords;
    std::vector<ExprP> idx;
    for (std::size_t a = 0; a < coords.size(); ++a) {
      std::int64_t b = 0;
      for (auto [axis, bs] : t.layout.block_dims)
        if (axis == static_cast<int>(a)) b = bs;
      idx.push_back(b ? floordiv(coords[a], ci(b)) : coords[a]);
    }
    for (auto [axis, b] : t.layout.block_dims)
      idx.push_back(mod(coords[axis], ci(b)));
    return idx;
  }

  // Loads one logical element of `gt`, broadcasting against ref_shape
  // (numpy-style, right-aligned).
  ExprP access(int gt, const std::vector<ExprP> &ref_coords,
               const std::vector<std::int64_t> &ref_shape) const {
    const auto &t = L.g.t(gt);
    std::size_t off = ref_shape.size() - t.shape.size();
    std::vector<ExprP> coords;
    for (std::size_t d = 0; d < t.shape.size(); ++d)
      coords.push_back(t.shape[d] == 1 && ref_shape[off + d] != 1
                           ? ci(0)
                           : ref_coords[off + d]);
    return load(tid(gt), stype_of(t.dtype), layout_index(t, coords));
  }
};

ExprP apply_unary(const Op &op, ExprP x, SType out_t) {
  switch (op.kind) {
    case OpKind::ReLU:
      return imax(x, cnum(x->type, 0));
    case OpKind::Exp:
      return un(UnOp::Exp, x, SType::F32);
    case OpKind::Round:
      return un(UnOp::Round, x, SType::F32);
    case OpKind::Clamp:
      return imin(imax(x, cf(op.attr_f("min"))), cf(op.attr_f("max")));
    case OpKind::Cast:
      return un(UnOp::Cast, x, out_t);
    default:
      throw std::runtime_error("not a unary elementwise op");
  }
}

ExprP apply_binary(OpKind k, ExprP a, ExprP b) {
  switch (k) {
    case OpKind::Add: return add(a, b);
    case OpKind::Sub: return sub(a, b);
    case OpKind::Mul: return mul(a, b);
    case OpKind::Div: return fdiv(a, b);
    case OpKind::Max: return imax(a, b);
    case OpKind::Min: return imin(a, b);
    default:
      throw std::runtime_error("not a binary op");
  }
}

bool is_c_blocked(const LogicalTensor &t, std::int64_t mb, std::int64_t nb) {
  int r = static_cast<int>(t.shape.size());
  return t.layout.is_blocked() && t.layout.block_dims.size() == 2 &&
         t.layout.block_dims[0] == std::make_pair(r - 2, mb) &&
         t.layout.block_dims[1] == std::make_pair(r - 1, nb);
}

// Leading (batch) coordinates of `gt` aligned against the reference batch
// extents, broadcasting size-1 dims.
std::vector<ExprP> batch_align(const Graph &g, int gt,
                               const std::vector<ExprP> &bco,
                               const std::vector<std::int64_t> &bd) {
  const auto &shape = g.t(gt).shape;
  std::size_t nb = shape.size() >= 2 ? shape.size() - 2 : 0;
  std::size_t off = bd.size() - nb;
  std::vector<ExprP> out;
  for (std::size_t d = 0; d < nb; ++d)
    out.push_back(shape[d] == 1 && bd[off + d] != 1 ? ci(0) : bco[off + d]);
  return out;
}

// --------------------------------------------------- generic op loop nests

ExprP op_value(Fn &fx, const Op &op, const std::vector<ExprP> &coords) {
  const Graph &g = fx.L.g;
  const auto &out = g.t(op.outputs[0]);
  if (is_binary(op.kind))
    return apply_binary(op.kind, fx.access(op.inputs[0], coords, out.shape),
                        fx.access(op.inputs[1], coords, out.shape));
  switch (op.kind) {
    case OpKind::ReLU:
    case OpKind::Exp:
    case OpKind::Round:
    case OpKind::Clamp:
    case OpKind::Cast:
      return apply_unary(op, fx.access(op.inputs[0], coords, out.shape),
                         stype_of(out.dtype));
    case OpKind::Broadcast:
    case OpKind::Reorder:
      return fx.access(op.inputs[0], coords, out.shape);
    case OpKind::Transpose: {
      const auto &in = g.t(op.inputs[0]);
      std::vector<std::int64_t> perm;
      if (op.has_attr("perm")) {
        perm = std::get<std::vector<std::int64_t>>(op.attrs.at("perm"));
      } else {
        for (std::size_t d = 0; d + 2 < out.shape.size(); ++d)
          perm.push_back(static_cast<std::int64_t>(d));
        perm.push_back(static_cast<std::int64_t>(out.shape.size()) - 1);
        perm.push_back(static_cast<std::int64_t>(out.shape.size()) - 2);
      }
      std::vector<ExprP> in_coords(coords.size());
      for (std::size_t d = 0; d < coords.size(); ++d)
        in_coords[perm[d]] = coords[d];
      return load(fx.tid(op.inputs[0]), stype_of(in.dtype),
                  fx.layout_index(in, in_coords));
    }
    default:
      throw std::runtime_error("cannot lower op " +
                               std::string(op_kind_name(op.kind)));
  }
}

std::vector<StmtP> emit_reduce(Fn &fx, const Op &op, bool parallel,
                               bool mergeable) {
  const Graph &g = fx.L.g;
  const auto &out = g.t(op.outputs[0]);
  const auto &in = g.t(op.inputs[0]);
  std::int64_t axis = op.attr_i("axis", -1);
  if (axis < 0) axis += static_cast<std::int64_t>(in.shape.size());
  if (out.layout.is_blocked())
    throw std::runtime_error("blocked reduction output unsupported");

  std::vector<int> lv;
  std::vector<ExprP> coords;
  for (std::size_t d = 0; d < out.shape.size(); ++d) {
    lv.push_back(fx.var("i" + std::to_string(d)));
    coords.push_back(vref(lv[d]));
  }
  int rv = fx.var("rv");
  std::vector<ExprP> in_coords = coords;
  in_coords[axis] = vref(rv);

  bool is_max = op.kind == OpKind::ReduceMax;
  SType t = stype_of(out.dtype);
  std::vector<ExprP> c0 = coords;
  c0[axis] = ci(0);
  ExprP init = is_max ? fx.access(op.inputs[0], c0, in.shape) : cnum(t, 0);
  ExprP cur = load(fx.tid(op.outputs[0]), t, coords);
  ExprP step = fx.access(op.inputs[0], in_coords, in.shape);
  ExprP comb = is_max ? imax(cur, step) : add(cur, step);

  std::vector<StmtP> body;
  body.push_back(make_store(fx.tid(op.outputs[0]), coords, init));
  body.push_back(make_for(
      rv, ci(0), ci(in.shape[axis]), 1,
      {make_store(fx.tid(op.outputs[0]), coords, comb)}));
  for (int d = static_cast<int>(out.shape.size()) - 1; d >= 0; --d)
    body = {make_for(lv[d], ci(0), ci(out.shape[d]), 1, std::move(body),
                     parallel && d == 0, mergeable && d == 0)};
  return body;
}

// Element loops over the output's storage space; blocked outputs mask the
// padding lanes to zero.
std::vector<StmtP> emit_op(Fn &fx, const Op &op, bool parallel,
                           bool mergeable) {
  if (is_reduction(op.kind)) return emit_reduce(fx, op, parallel, mergeable);
  const Graph &g = fx.L.g;
  const auto &out = g.t(op.outputs[0]);
  auto sd = storage_dims(out.shape, out.layout);

  std::vector<int> lv;
  for (std::size_t d = 0; d < sd.size(); ++d)
    lv.push_back(fx.var("i" + std::to_string(d)));

  std::vector<ExprP> coords(out.shape.size());
  std::vector<ExprP> sidx;
  ExprP valid;
  if (!out.layout.is_blocked()) {
    for (std::size_t d = 0; d < sd.size(); ++d) {
      coords[d] = vref(lv[d]);
      sidx.push_back(vref(lv[d]));
    }
  } else {
    std::size_t rank = out.shape.size();
    std::map<int, std::pair<int, std::int64_t>> blk;  // axis -> (tail pos, b)
    for (std::size_t k = 0; k < out.layout.block_dims.size(); ++k)
      blk[out.layout.block_dims[k].first] = {
          static_cast<int>(rank + k), out.layout.block_dims[k].second};
    for (std::size_t a = 0; a < rank; ++a) {
      if (blk.count(static_cast<int>(a))) {
        auto [tp, b] = blk[static_cast<int>(a)];
        coords[a] = add(mul(vref(lv[a]), ci(b)), vref(lv[tp]));
        ExprP c = lt(coords[a], ci(out.shape[a]));
        valid = valid ? land(valid, c) : c;
      } else {
        coords[a] = vref(lv[a]);
      }
    }
    for (std::size_t d = 0; d < sd.size(); ++d) sidx.push_back(vref(lv[d]));
  }

  ExprP val = op_value(fx, op, coords);
  if (valid) val = select(valid, val, cnum(stype_of(out.dtype), 0));
  std::vector<StmtP> body{make_store(fx.tid(op.outputs[0]), sidx, val)};
  for (int d = static_cast<int>(sd.size()) - 1; d >= 0; --d)
    body = {make_for(lv[d], ci(0), ci(sd[d]), 1, std::move(body),
                     parallel && d == 0, mergeable && d == 0)};
  return body;
}

// --------------------------------------------------------- matmul template

struct PreChain {
  bool present = false;
  std::vector<const Op *> ops;  // matmul-nearest first
  int origin = -1;
  bool transpose = false;
  AnchorId anchor = AnchorId::Pre1;
};

struct Seg {
  AnchorId anchor = AnchorId::Post1;
  enum Kind { Elt, Red, Reo } kind = Elt;
  std::vector<const Op *> ops;
  int in_t = -1;
  int out_t = -1;
};

void build_matmul_region(Lower &L, int ridx, const FusedOp &f) {
  const Graph &g = L.g;
  const Op &mm = *find_op(g, *f.tunable);
  const MatmulParams &p = L.params.at(mm.id);
  const auto &to0 = g.t(mm.outputs[0]);
  int rank = static_cast<int>(to0.shape.size());
  std::vector<std::int64_t> bd(to0.shape.begin(), to0.shape.end() - 2);
  bool batched = !bd.empty();
  const std::int64_t MB = p.MB, NB = p.NB, KB = p.KB, BS = p.BS;
  const std::int64_t MSN = p.MSN, NSN = p.NSN, KSN = p.KSN;
  const std::int64_t MPN = p.MPN, NPN = p.NPN, NPSN = p.NPSN();
  // Storage holds ceil(dim/block) blocks; the parallel grid may be padded
  // further (to a multiple of the core split), so grid cells beyond the
  // storage blocks must be skipped.
  const std::int64_t MBLKS = (p.M + MB - 1) / MB;
  const std::int64_t NBLKS = (p.N + NB - 1) / NB;
  const bool m_over = MPN * MSN > MBLKS;
  const bool n_over = NPN * NSN > NBLKS;
  auto block_guard = [&](ExprP mcond, ExprP ncond,
                         std::vector<StmtP> body) -> std::vector<StmtP> {
    ExprP cond;
    if (m_over && mcond) cond = mcond;
    if (n_over && ncond) cond = cond ? land(cond, ncond) : ncond;
    if (!cond) return body;
    return {make_if(cond, std::move(body))};
  };
  SType acc_t = stype_of(to0.dtype);

  // ---- region structure
  std::map<int, AnchorId> pre_anchor;
  std::set<int> pre_ids;
  for (auto [oid, a] : f.pre_ops) {
    pre_ids.insert(oid);
    pre_anchor[oid] = static_cast<AnchorId>(a);
  }
  PreChain pre[2];
  for (int side = 0; side < 2; ++side) {
    int w = mm.inputs[side];
    while (true) {
      const Op *pr = g.producer(w);
      if (!pr || !pre_ids.count(pr->id)) break;
      pre[side].ops.push_back(pr);
      if (pr->kind == OpKind::Transpose)
        pre[side].transpose = !pre[side].transpose;
      w = pr->inputs[0];
    }
    if (!pre[side].ops.empty()) {
      pre[side].present = true;
      pre[side].origin = w;
      pre[side].anchor = pre_anchor[pre[side].ops[0]->id];
    }
  }

  std::map<int, int> bcast_src;  // broadcast output tensor -> its input
  std::vector<Seg> segs;
  int cur = mm.outputs[0];
  for (auto [oid, a] : f.post_ops) {
    const Op *op = find_op(g, oid);
    if (op->kind == OpKind::Broadcast) {
      bcast_src[op->outputs[0]] = op->inputs[0];
      continue;
    }
    Seg::Kind k = is_reduction(op->kind)   ? Seg::Red
                  : op->kind == OpKind::Reorder ? Seg::Reo
                                                : Seg::Elt;
    AnchorId anchor = static_cast<AnchorId>(a);
    if (k == Seg::Elt && !segs.empty() && segs.back().kind == Seg::Elt &&
        segs.back().anchor == anchor) {
      segs.back().ops.push_back(op);
    } else {
      Seg s;
      s.anchor = anchor;
      s.kind = k;
      s.ops = {op};
      s.in_t = cur;
      segs.push_back(s);
    }
    segs.back().out_t = op->outputs[0];
    cur = op->outputs[0];
  }
  int final_out = cur;

  LoopOrder lo = p.loop_order;
  if (lo == LoopOrder::MNK && (pre[0].present || pre[1].present)) {
    lo = LoopOrder::MKN;
    L.notes.push_back("lowering: f" + std::to_string(ridx) +
                      " falls back to mkn order (fused pre-ops)");
  }

  // ---- function shell and params
  Fn fx(L);
  fx.fn.name = "f" + std::to_string(ridx) + "_matmul";
  std::set<int> internal;
  internal.insert(mm.outputs[0]);
  for (auto [oid, a] : f.post_ops)
    internal.insert(find_op(g, oid)->outputs[0]);
  for (auto [oid, a] : f.pre_ops)
    internal.insert(find_op(g, oid)->outputs[0]);

  fx.param(pre[0].present ? pre[0].origin : mm.inputs[0]);
  fx.param(pre[1].present ? pre[1].origin : mm.inputs[1]);
  for (const Seg &s : segs)
    for (const Op *op : s.ops)
      if (is_binary(op->kind))
        for (int in : op->inputs) {
          int src = bcast_src.count(in) ? bcast_src.at(in) : in;
          if (!internal.count(in) && !internal.count(src)) fx.param(src);
          else if (bcast_src.count(in) && !internal.count(src)) fx.param(src);
        }
  fx.param(final_out);

  // ---- locals
  int A = mm.inputs[0], B = mm.inputs[1];
  if (pre[0].present) fx.local(A, Storage::ThreadLocal, "a_pack");
  if (pre[1].present) fx.local(B, Storage::ThreadLocal, "b_pack");
  int cacc = L.m.fresh_tensor();
  {
    TensorDecl d;
    d.id = cacc;
    d.name = "c_acc";
    d.type = acc_t;
    d.dims = {NSN, MB, NB};
    d.storage = Storage::ThreadLocal;
    fx.fn.decls.push_back(d);
  }
  int bufno = 0;
  auto ensure_buf = [&](int gt) {
    if (fx.tmap.count(gt)) return;
    fx.local(gt, Storage::Temp, "c" + std::to_string(bufno++));
  };
  if (mm.outputs[0] != final_out) ensure_buf(mm.outputs[0]);
  for (const Seg &s : segs)
    if (s.out_t != final_out) ensure_buf(s.out_t);

  // ---- loop variables
  std::vector<int> bv;
  std::vector<ExprP> bco;
  for (std::size_t k = 0; k < bd.size(); ++k) {
    bv.push_back(fx.var("b" + std::to_string(k)));
    bco.push_back(vref(bv.back()));
  }
  int v_mpi = fx.var("mpi"), v_npi = fx.var("npi"), v_msi = fx.var("msi");
  int v_ksi = fx.var("ksi"), v_nsi = fx.var("nsi");
  int v_mpsi = fx.var("mpsi"), v_npsi = fx.var("npsi");
  ExprP mpi = vref(v_mpi), npi = vref(v_npi), msi = vref(v_msi);
  ExprP ksi = vref(v_ksi), nsi = vref(v_nsi);
  ExprP mpsi = vref(v_mpsi), npsi = vref(v_npsi);

  auto probe = [&](int op_id, AnchorId a, std::vector<StmtP> &out) {
    if (L.opt.instrument_anchors)
      out.push_back(make_intrinsic("anchor_probe", {},
                                   {ci(op_id), ci(static_cast<int>(a))}));
  };

  // ---- pre-op pack nests
  auto emit_pack = [&](int side, AnchorId a) -> std::vector<StmtP> {
    std::vector<StmtP> out;
    for (const Op *op : pre[side].ops) probe(op->id, a, out);
    const auto &origin_t = g.t(pre[side].origin);
    int packed = side == 0 ? A : B;
    std::vector<ExprP> bcoP = batch_align(g, packed, bco, bd);
    std::vector<ExprP> bcoO = batch_align(g, pre[side].origin, bco, bd);

    // Pure data-movement chains from a plain source pack whole blocks with
    // the reorder_pack kernel; anything with compute in it falls back to the
    // scalar nest below.
    bool movement_only = origin_t.layout.is_plain() &&
                         origin_t.shape.size() >= 2;
    for (const Op *op : pre[side].ops)
      if (op->kind != OpKind::Reorder && op->kind != OpKind::Transpose)
        movement_only = false;

    std::vector<std::pair<int, std::int64_t>> loops;  // (var, extent)
    ExprP rblk, kblk, cblk;
    if (side == 0) {
      int vm2 = fx.var("pm"), vk2 = fx.var("pk"), vb2 = fx.var("pb");
      switch (a) {
        case AnchorId::Pre1:
        case AnchorId::Pre2:
          loops = {{vm2, MSN}, {vk2, KSN}};
          rblk = add(mul(mpi, ci(MSN)), vref(vm2));
          kblk = vref(vk2);
          break;
        case AnchorId::Pre3:
          loops = {{vk2, KSN}};
          rblk = mpsi;
          kblk = vref(vk2);
          break;
        default:  // Pre4 / Pre5
          loops = {{vb2, BS}};
          rblk = mpsi;
          kblk = add(ksi, vref(vb2));
          break;
      }
      std::vector<StmtP> body;
      if (movement_only) {
        // A' block (rblk, kblk) is an [MB, KB] tile of the origin starting at
        // (rblk*MB, kblk*KB); the kernel zero-fills the padded remainder.
        ExprP rr0 = mul(rblk, ci(MB));
        ExprP cc0 = mul(kblk, ci(KB));
        BufArg bs_, bd_;
        bs_.tensor = fx.tid(pre[side].origin);
        bs_.idx = bcoO;
        if (pre[side].transpose) {
          bs_.idx.push_back(cc0);
          bs_.idx.push_back(rr0);
        } else {
          bs_.idx.push_back(rr0);
          bs_.idx.push_back(cc0);
        }
        bd_.tensor = fx.tid(packed);
        bd_.idx = bcoP;
        bd_.idx.push_back(rblk);
        bd_.idx.push_back(kblk);
        bd_.idx.push_back(ci(0));
        bd_.idx.push_back(ci(0));
        body = {make_intrinsic(
            "reorder_pack", {bs_, bd_},
            {ci(MB), ci(KB), imax(imin(sub(ci(p.M), rr0), ci(MB)), ci(0)),
             imax(imin(sub(ci(p.K), cc0), ci(KB)), ci(0)),
             ci(origin_t.shape.back()), ci(pre[side].transpose ? 1 : 0)})};
      } else {
        int vmb = fx.var("pmb"), vkb = fx.var("pkb");
        ExprP rr = add(mul(rblk, ci(MB)), vref(vmb));
        ExprP cc = add(mul(kblk, ci(KB)), vref(vkb));
        ExprP valid = land(lt(rr, ci(p.M)), lt(cc, ci(p.K)));
        std::vector<ExprP> oc = bcoO;
        if (pre[side].transpose) {
          oc.push_back(cc);
          oc.push_back(rr);
        } else {
          oc.push_back(rr);
          oc.push_back(cc);
        }
        ExprP v = select(valid,
                         load(fx.tid(pre[side].origin),
                              stype_of(origin_t.dtype),
                              fx.layout_index(origin_t, oc)),
                         cnum(stype_of(origin_t.dtype), 0));
        std::vector<ExprP> idx = bcoP;
        idx.push_back(rblk);
        idx.push_back(kblk);
        idx.push_back(vref(vmb));
        idx.push_back(vref(vkb));
        body = {make_store(fx.tid(packed), idx, v)};
        body = {make_for(vkb, ci(0), ci(KB), 1, std::move(body))};
        body = {make_for(vmb, ci(0), ci(MB), 1, std::move(body))};
      }
      body = block_guard(lt(rblk, ci(MBLKS)), nullptr, std::move(body));
      for (int i = static_cast<int>(loops.size()) - 1; i >= 0; --i)
        body = {make_for(loops[i].first, ci(0), ci(loops[i].second), 1,
                         std::move(body))};
      out.insert(out.end(), body.begin(), body.end());
    } else {
      int vn2 = fx.var("pn"), vk2 = fx.var("pk"), vb2 = fx.var("pb");
      switch (a) {
        case AnchorId::Pre1:
          loops = {{vk2, KSN}, {vn2, NPSN}};
          kblk = vref(vk2);
          cblk = vref(vn2);
          break;
        case AnchorId::Pre2:
        case AnchorId::Pre3:
          loops = {{vk2, KSN}, {vn2, NSN}};
          kblk = vref(vk2);
          cblk = add(mul(npi, ci(NSN)), vref(vn2));
          break;
        case AnchorId::Pre4:
          loops = {{vb2, BS}, {vn2, NSN}};
          kblk = add(ksi, vref(vb2));
          cblk = add(mul(npi, ci(NSN)), vref(vn2));
          break;
        default:  // Pre5
          loops = {{vb2, BS}};
          kblk = add(ksi, vref(vb2));
          cblk = npsi;
          break;
      }
      std::vector<StmtP> body;
      if (movement_only) {
        // B' block (kblk, cblk) holds dst[n][k] = B[kblk*KB+k][cblk*NB+n],
        // i.e. a transposed tile of a [K, N] origin (and a straight copy of
        // an already-[N, K] origin).
        ExprP kk0 = mul(kblk, ci(KB));
        ExprP nn0 = mul(cblk, ci(NB));
        BufArg bs_, bd_;
        bs_.tensor = fx.tid(pre[side].origin);
        bs_.idx = bcoO;
        if (pre[side].transpose) {
          bs_.idx.push_back(nn0);
          bs_.idx.push_back(kk0);
        } else {
          bs_.idx.push_back(kk0);
          bs_.idx.push_back(nn0);
        }
        bd_.tensor = fx.tid(packed);
        bd_.idx = bcoP;
        bd_.idx.push_back(kblk);
        bd_.idx.push_back(cblk);
        bd_.idx.push_back(ci(0));
        bd_.idx.push_back(ci(0));
        body = {make_intrinsic(
            "reorder_pack", {bs_, bd_},
            {ci(NB), ci(KB), imax(imin(sub(ci(p.N), nn0), ci(NB)), ci(0)),
             imax(imin(sub(ci(p.K), kk0), ci(KB)), ci(0)),
             ci(origin_t.shape.back()), ci(pre[side].transpose ? 0 : 1)})};
      } else {
        int vnb = fx.var("pnb"), vkb = fx.var("pkb");
        ExprP kk = add(mul(kblk, ci(KB)), vref(vkb));
        ExprP nn = add(mul(cblk, ci(NB)), vref(vnb));
        ExprP valid = land(lt(kk, ci(p.K)), lt(nn, ci(p.N)));
        std::vector<ExprP> oc = bcoO;
        if (pre[side].transpose) {
          oc.push_back(nn);
          oc.push_back(kk);
        } else {
          oc.push_back(kk);
          oc.push_back(nn);
        }
        ExprP v = select(valid,
                         load(fx.tid(pre[side].origin),
                              stype_of(origin_t.dtype),
                              fx.layout_index(origin_t, oc)),
                         cnum(stype_of(origin_t.dtype), 0));
        std::vector<ExprP> idx = bcoP;
        idx.push_back(kblk);
        idx.push_back(cblk);
        idx.push_back(vref(vnb));
        idx.push_back(vref(vkb));
        body = {make_store(fx.tid(packed), idx, v)};
        body = {make_for(vkb, ci(0), ci(KB), 1, std::move(body))};
        body = {make_for(vnb, ci(0), ci(NB), 1, std::move(body))};
      }
      body = block_guard(nullptr, lt(cblk, ci(NBLKS)), std::move(body));
      for (int i = static_cast<int>(loops.size()) - 1; i >= 0; --i)
        body = {make_for(loops[i].first, ci(0), ci(loops[i].second), 1,
                         std::move(body))};
      out.insert(out.end(), body.begin(), body.end());
    }
    return out;
  };

  auto splice_pre = [&](AnchorId site, std::vector<StmtP> &dst) {
    for (int side = 0; side < 2; ++side)
      if (pre[side].present && pre[side].anchor == site) {
        auto s = emit_pack(side, site);
        dst.insert(dst.end(), s.begin(), s.end());
      }
  };

  // ---- post-op segment nests
  // Loads a chain element at logical (r, c) given its block decomposition.
  auto chain_load = [&](int gt, ExprP rblk, ExprP mb2, ExprP cblk, ExprP nb2,
                        ExprP r, ExprP c) -> ExprP {
    const auto &t = g.t(gt);
    if (is_c_blocked(t, MB, NB)) {
      std::vector<ExprP> idx = batch_align(g, gt, bco, bd);
      idx.push_back(rblk);
      idx.push_back(cblk);
      idx.push_back(mb2);
      idx.push_back(nb2);
      return load(fx.tid(gt), stype_of(t.dtype), idx);
    }
    std::vector<ExprP> coords = bco;
    coords.push_back(r);
    coords.push_back(c);
    return fx.access(gt, coords, to0.shape);
  };

  auto emit_seg = [&](const Seg &s) -> std::vector<StmtP> {
    std::vector<StmtP> out;
    for (const Op *op : s.ops) probe(op->id, s.anchor, out);

    // Row-block domain.
    std::vector<std::pair<int, std::int64_t>> rloops;
    ExprP rblk;
    if (s.anchor == AnchorId::Post1) {
      rblk = mpsi;
    } else {
      int vm2 = fx.var("qm");
      rloops.push_back({vm2, MSN});
      rblk = add(mul(mpi, ci(MSN)), vref(vm2));
    }
    // Column-block domain.
    int vn2 = fx.var("qn");
    std::int64_t n_ext = s.anchor == AnchorId::Post3 ? NPSN : NSN;
    ExprP cblk = s.anchor == AnchorId::Post3
                     ? vref(vn2)
                     : add(mul(npi, ci(NSN)), vref(vn2));
    int vmb = fx.var("qmb"), vnb = fx.var("qnb");
    ExprP r = add(mul(rblk, ci(MB)), vref(vmb));
    ExprP c = add(mul(cblk, ci(NB)), vref(vnb));
    ExprP valid = land(lt(r, ci(p.M)), lt(c, ci(p.N)));

    if (s.kind == Seg::Red) {
      const Op *op = s.ops[0];
      const auto &ot = g.t(op->outputs[0]);
      bool is_max = op->kind == OpKind::ReduceMax;
      SType t = stype_of(ot.dtype);
      std::vector<ExprP> oidx = batch_align(g, op->outputs[0], bco, bd);
      oidx.push_back(r);
      oidx.push_back(ci(0));
      ExprP cur0 = load(fx.tid(op->outputs[0]), t, oidx);
      ExprP first =
          chain_load(s.in_t, rblk, vref(vmb), ci(0), ci(0), r, ci(0));
      ExprP init = is_max ? first : cnum(t, 0);
      ExprP stepv = chain_load(s.in_t, rblk, vref(vmb), cblk, vref(vnb), r, c);
      ExprP comb = is_max ? imax(cur0, stepv) : add(cur0, stepv);
      StmtP upd = make_if(lt(c, ci(p.N)),
                          {make_store(fx.tid(op->outputs[0]), oidx, comb)});
      StmtP inner = make_for(vn2, ci(0), ci(n_ext), 1,
                             {make_for(vnb, ci(0), ci(NB), 1, {upd})});
      std::vector<StmtP> row{
          make_if(lt(r, ci(p.M)),
                  {make_store(fx.tid(op->outputs[0]), oidx, init), inner})};
      row = {make_for(vmb, ci(0), ci(MB), 1, std::move(row))};
      for (int i = static_cast<int>(rloops.size()) - 1; i >= 0; --i)
        row = {make_for(rloops[i].first, ci(0), ci(rloops[i].second), 1,
                        std::move(row))};
      out.insert(out.end(), row.begin(), row.end());
      return out;
    }

    if (s.kind == Seg::Reo) {
      const Op *op = s.ops[0];
      const auto &dt = g.t(op->outputs[0]);
      // Blocked-to-plain boundary reorders unpack whole tiles with the
      // reorder_unpack kernel instead of element loops.
      if (dt.layout.is_plain() && dt.shape.size() >= 2 &&
          is_c_blocked(g.t(s.in_t), MB, NB)) {
        ExprP r0 = mul(rblk, ci(MB));
        ExprP c0 = mul(cblk, ci(NB));
        BufArg us, ud;
        us.tensor = fx.tid(s.in_t);
        us.idx = batch_align(g, s.in_t, bco, bd);
        us.idx.push_back(rblk);
        us.idx.push_back(cblk);
        us.idx.push_back(ci(0));
        us.idx.push_back(ci(0));
        ud.tensor = fx.tid(op->outputs[0]);
        ud.idx = batch_align(g, op->outputs[0], bco, bd);
        ud.idx.push_back(r0);
        ud.idx.push_back(c0);
        std::vector<StmtP> body = block_guard(
            lt(rblk, ci(MBLKS)), lt(cblk, ci(NBLKS)),
            {make_intrinsic(
                "reorder_unpack", {us, ud},
                {ci(MB), ci(NB), imax(imin(sub(ci(p.M), r0), ci(MB)), ci(0)),
                 imax(imin(sub(ci(p.N), c0), ci(NB)), ci(0)),
                 ci(dt.shape.back())})});
        body = {make_for(vn2, ci(0), ci(n_ext), 1, std::move(body))};
        for (int i = static_cast<int>(rloops.size()) - 1; i >= 0; --i)
          body = {make_for(rloops[i].first, ci(0), ci(rloops[i].second), 1,
                           std::move(body))};
        out.insert(out.end(), body.begin(), body.end());
        return out;
      }
      ExprP v = chain_load(s.in_t, rblk, vref(vmb), cblk, vref(vnb), r, c);
      std::vector<ExprP> coords = batch_align(g, op->outputs[0], bco, bd);
      coords.push_back(r);
      coords.push_back(c);
      StmtP st;
      if (!dt.layout.is_blocked()) {
        st = make_if(valid,
                     {make_store(fx.tid(op->outputs[0]), coords, v)});
      } else {
        auto sdd = storage_dims(dt.shape, dt.layout);
        int rr = static_cast<int>(dt.shape.size());
        std::int64_t pm = 1, pn = 1;
        for (auto [axis, b] : dt.layout.block_dims) {
          std::int64_t padded = (dt.shape[axis] + b - 1) / b * b;
          if (axis == rr - 2) pm = padded;
          else pn = padded;
        }
        ExprP in_range = land(lt(r, ci(pm)), lt(c, ci(pn)));
        ExprP masked = select(valid, v, cnum(stype_of(dt.dtype), 0));
        st = make_if(in_range, {make_store(fx.tid(op->outputs[0]),
                                           fx.layout_index(dt, coords),
                                           masked)});
        (void)sdd;
      }
      std::vector<StmtP> body{st};
      body = {make_for(vnb, ci(0), ci(NB), 1, std::move(body))};
      body = {make_for(vn2, ci(0), ci(n_ext), 1, std::move(body))};
      body = {make_for(vmb, ci(0), ci(MB), 1, std::move(body))};
      for (int i = static_cast<int>(rloops.size()) - 1; i >= 0; --i)
        body = {make_for(rloops[i].first, ci(0), ci(rloops[i].second), 1,
                         std::move(body))};
      out.insert(out.end(), body.begin(), body.end());
      return out;
    }

    // Elementwise run: compose the ops into one value expression.
    ExprP val = chain_load(s.in_t, rblk, vref(vmb), cblk, vref(vnb), r, c);
    int chain_t = s.in_t;
    for (const Op *op : s.ops) {
      if (is_binary(op->kind)) {
        auto operand = [&](int in) -> ExprP {
          if (in == chain_t) return val;
          int src = bcast_src.count(in) ? bcast_src.at(in) : in;
          std::vector<ExprP> coords = bco;
          coords.push_back(r);
          coords.push_back(c);
          return fx.access(src, coords, to0.shape);
        };
        val = apply_binary(op->kind, operand(op->inputs[0]),
                           operand(op->inputs[1]));
      } else {
        val = apply_unary(*op, val, stype_of(g.t(op->outputs[0]).dtype));
      }
      chain_t = op->outputs[0];
    }
    const auto &ot = g.t(s.out_t);
    if (!is_c_blocked(ot, MB, NB))
      throw std::runtime_error("elementwise post-op output must keep the "
                               "accumulator blocking");
    std::vector<ExprP> oidx = batch_align(g, s.out_t, bco, bd);
    oidx.push_back(rblk);
    oidx.push_back(cblk);
    oidx.push_back(vref(vmb));
    oidx.push_back(vref(vnb));
    ExprP masked = select(valid, val, cnum(stype_of(ot.dtype), 0));
    std::vector<StmtP> body =
        block_guard(lt(rblk, ci(MBLKS)), lt(cblk, ci(NBLKS)),
                    {make_store(fx.tid(s.out_t), oidx, masked)});
    body = {make_for(vnb, ci(0), ci(NB), 1, std::move(body))};
    body = {make_for(vmb, ci(0), ci(MB), 1, std::move(body))};
    body = {make_for(vn2, ci(0), ci(n_ext), 1, std::move(body))};
    for (int i = static_cast<int>(rloops.size()) - 1; i >= 0; --i)
      body = {make_for(rloops[i].first, ci(0), ci(rloops[i].second), 1,
                       std::move(body))};
    out.insert(out.end(), body.begin(), body.end());
    return out;
  };

  auto splice_post = [&](AnchorId site, std::vector<StmtP> &dst) {
    for (const Seg &s : segs)
      if (s.anchor == site) {
        auto v = emit_seg(s);
        dst.insert(dst.end(), v.begin(), v.end());
      }
  };

  // ---- microkernel
  std::string bname = g.t(A).dtype == DataType::U8 ? "brgemm_u8s8s32"
                                                   : "brgemm_f32";
  BufArg ba, bb, bc;
  ba.tensor = fx.tid(A);
  ba.idx = batch_align(g, A, bco, bd);
  ba.idx.push_back(mpsi);
  ba.idx.push_back(ksi);
  ba.idx.push_back(ci(0));
  ba.idx.push_back(ci(0));
  bb.tensor = fx.tid(B);
  bb.idx = batch_align(g, B, bco, bd);
  bb.idx.push_back(ksi);
  bb.idx.push_back(npsi);
  bb.idx.push_back(ci(0));
  bb.idx.push_back(ci(0));
  bc.tensor = cacc;
  bc.idx = {nsi, ci(0), ci(0)};
  // The first k-step initializes the accumulator (accumulate=0 zeroes the
  // block inside the kernel), so no separate zeroing nest is needed.
  StmtP brgemm = make_intrinsic(
      bname, {ba, bb, bc},
      {ci(MB), ci(NB), ci(KB), ci(BS), lt(ci(0), ksi)});

  // ---- inner nest
  StmtP inner_nest;
  if (lo == LoopOrder::MKN) {
    std::vector<StmtP> guarded;
    splice_pre(AnchorId::Pre5, guarded);
    guarded.push_back(brgemm);
    std::vector<StmtP> nsi_body;
    nsi_body.push_back(make_let(v_npsi, add(mul(npi, ci(NSN)), nsi)));
    for (auto &s : block_guard(nullptr, lt(npsi, ci(NBLKS)),
                               std::move(guarded)))
      nsi_body.push_back(std::move(s));
    std::vector<StmtP> ksi_body;
    splice_pre(AnchorId::Pre4, ksi_body);
    ksi_body.push_back(make_for(v_nsi, ci(0), ci(NSN), 1, std::move(nsi_body)));
    inner_nest = make_for(v_ksi, ci(0), ci(KSN), BS, std::move(ksi_body));
  } else {
    std::vector<StmtP> ksi_body{brgemm};
    std::vector<StmtP> nsi_body;
    nsi_body.push_back(make_let(v_npsi, add(mul(npi, ci(NSN)), nsi)));
    for (auto &s : block_guard(
             nullptr, lt(npsi, ci(NBLKS)),
             {make_for(v_ksi, ci(0), ci(KSN), BS, std::move(ksi_body))}))
      nsi_body.push_back(std::move(s));
    inner_nest = make_for(v_nsi, ci(0), ci(NSN), 1, std::move(nsi_body));
  }

  // ---- accumulator copy-out (whole-block copies via the pack kernel)
  std::vector<StmtP> copy;
  {
    int cn = fx.var("cn");
    ExprP cnb = add(mul(npi, ci(NSN)), vref(cn));
    BufArg cs, cd;
    cs.tensor = cacc;
    cs.idx = {vref(cn), ci(0), ci(0)};
    cd.tensor = fx.tid(mm.outputs[0]);
    cd.idx = batch_align(g, mm.outputs[0], bco, bd);
    cd.idx.push_back(mpsi);
    cd.idx.push_back(cnb);
    cd.idx.push_back(ci(0));
    cd.idx.push_back(ci(0));
    copy = {make_for(
        cn, ci(0), ci(NSN), 1,
        block_guard(nullptr, lt(cnb, ci(NBLKS)),
                    {make_intrinsic(
                        "reorder_pack", {cs, cd},
                        {ci(MB), ci(NB), ci(MB), ci(NB), ci(NB), ci(0)})}))};
  }

  // ---- assemble the template
  std::vector<StmtP> msi_guarded;
  splice_pre(AnchorId::Pre3, msi_guarded);
  msi_guarded.push_back(inner_nest);
  msi_guarded.insert(msi_guarded.end(), copy.begin(), copy.end());
  splice_post(AnchorId::Post1, msi_guarded);
  std::vector<StmtP> msi_body;
  msi_body.push_back(make_let(v_mpsi, add(mul(mpi, ci(MSN)), msi)));
  for (auto &s : block_guard(lt(mpsi, ci(MBLKS)), nullptr,
                             std::move(msi_guarded)))
    msi_body.push_back(std::move(s));

  std::vector<StmtP> npi_body;
  splice_pre(AnchorId::Pre2, npi_body);
  npi_body.push_back(make_for(v_msi, ci(0), ci(MSN), 1, std::move(msi_body)));
  splice_post(AnchorId::Post2, npi_body);

  std::vector<StmtP> mpi_body;
  splice_pre(AnchorId::Pre1, mpi_body);
  bool npi_par = !batched && NPN > 1;
  mpi_body.push_back(
      make_for(v_npi, ci(0), ci(NPN), 1, std::move(npi_body), npi_par));
  splice_post(AnchorId::Post3, mpi_body);

  StmtP grid = make_for(v_mpi, ci(0), ci(MPN), 1, std::move(mpi_body),
                        /*parallel=*/!batched,
                        /*mergeable=*/!batched && f.mergeable_with_next);
  if (batched) {
    std::vector<StmtP> body{grid};
    for (int k = static_cast<int>(bd.size()) - 1; k >= 0; --k)
      body = {make_for(bv[k], ci(0), ci(bd[k]), 1, std::move(body),
                       /*parallel=*/k < 2,
                       /*mergeable=*/k == 0 && f.mergeable_with_next)};
    fx.fn.body = std::move(body);
  } else {
    fx.fn.body = {grid};
  }

  L.m.funcs.push_back(std::move(fx.fn));
  Function *entry = L.m.find_func(L.m.entry);
  entry->body.push_back(
      make_call(L.m.funcs.back().name, fx.call_args));
}

void build_standalone_region(Lower &L, int ridx, const FusedOp &f) {
  const Graph &g = L.g;
  const Op &op = *find_op(g, f.post_ops[0].first);
  Fn fx(L);
  fx.fn.name =
      "f" + std::to_string(ridx) + "_" + lower_name(op_kind_name(op.kind));
  for (int in : op.inputs) fx.param(in);
  fx.param(op.outputs[0]);
  fx.fn.body = emit_op(fx, op, /*parallel=*/true, f.mergeable_with_next);
  L.m.funcs.push_back(std::move(fx.fn));
  Function *entry = L.m.find_func(L.m.entry);
  entry->body.push_back(make_call(L.m.funcs.back().name, fx.call_args));
}

void build_fold(Lower &L) {
  if (L.cplan.empty()) return;
  Fn fx(L);
  fx.fn.name = "fold";
  int n = 0;
  for (const Op &op : L.cplan.fold_ops) {
    // Fold-internal results (not cached, not raw) live as fold locals.
    for (int out : op.outputs)
      if (!L.glob.count(out))
        fx.local(out, Storage::Temp, "w" + std::to_string(n++));
    auto body = emit_op(fx, op, /*parallel=*/false, false);
    fx.fn.body.insert(fx.fn.body.end(), body.begin(), body.end());
  }
  L.m.funcs.push_back(std::move(fx.fn));
  L.m.fold = "fold";
}

}  // namespace

Lowered lower_module(const Graph &g, const std::vector<FusedOp> &fused,
                     const std::map<int, MatmulParams> &params,
                     const ConstCachePlan &cplan, const LowerOptions &opt) {
  Lower L{g, fused, params, cplan, opt};

  for (std::size_t i = 0; i < fused.size(); ++i)
    for (int oid : fused[i].all_op_ids())
      L.op_region[oid] = static_cast<int>(i);

  // Module globals: graph boundary tensors, constants, cache slots and
  // region-crossing temporaries.
  auto is_io = [&](int t) {
    return std::find(g.inputs.begin(), g.inputs.end(), t) != g.inputs.end() ||
           g.is_graph_output(t);
  };
  for (const auto &[id, t] : g.tensors) {
    Storage st;
    std::string name;
    if (cplan.cache_slots.count(id)) {
      st = Storage::ConstSlot;
      name = "slot" + std::to_string(id);
    } else if (g.const_data.count(id)) {
      st = Storage::Global;
      name = "c" + std::to_string(id);
    } else if (is_io(id)) {
      st = Storage::Global;
      name = "t" + std::to_string(id);
    } else {
      const Op *prod = g.producer(id);
      if (!prod) continue;  // fold-internal, handled as fold locals
      int pr = L.op_region.at(prod->id);
      bool crosses = false;
      for (const Op *c : g.consumers(id))
        if (L.op_region.at(c->id) != pr) crosses = true;
      if (!crosses) continue;  // region-internal
      st = Storage::Temp;
      name = "tmp" + std::to_string(id);
    }
    int gid = L.m.fresh_tensor();
    L.m.globals.push_back(make_decl(g, id, gid, st, name));
    L.glob[id] = gid;
  }

  Function entry;
  entry.name = "main";
  L.m.funcs.push_back(std::move(entry));
  L.m.entry = "main";

  build_fold(L);

  for (std::size_t i = 0; i < fused.size(); ++i) {
    if (fused[i].tunable)
      build_matmul_region(L, static_cast<int>(i), fused[i]);
    else
      build_standalone_region(L, static_cast<int>(i), fused[i]);
  }

  Lowered out;
  out.module = std::move(L.m);
  out.tensor_global = std::move(L.glob);
  out.notes = std::move(L.notes);
  return out;
}

}  // namespace mtc
