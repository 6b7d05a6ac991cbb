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

#include "mtc/runtime.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "mtc/kernels.hpp"

namespace mtc::rt {

namespace {

using namespace tir;

struct Val {
  double f = 0.0;
  std::int64_t i = 0;
};

std::int64_t flatten(const TensorDecl &d, const std::vector<std::int64_t> &ix) {
  std::int64_t off = 0;
  for (std::size_t k = 0; k < ix.size(); ++k) off = off * d.dims[k] + ix[k];
  return off;
}

struct Interp {
  Executor *ex;
  const std::vector<const TensorDecl *> &decls;
  const Function &fn;
  std::vector<std::byte *> buf;
  std::vector<std::int64_t> vars;

  Val eval(const ExprP &e) {
    const Expr &x = *e;
    switch (x.kind) {
      case Expr::Kind::ConstF: {
        Val v;
        v.f = static_cast<float>(x.fval);
        return v;
      }
      case Expr::Kind::ConstI: {
        Val v;
        if (is_float(x.type)) v.f = static_cast<float>(x.ival);
        v.i = x.ival;
        return v;
      }
      case Expr::Kind::Var: {
        Val v;
        v.i = vars[x.var];
        return v;
      }
      case Expr::Kind::Load:
        return load_elem(x);
      case Expr::Kind::Bin:
        return eval_bin(x);
      case Expr::Kind::Un:
        return eval_un(x);
      case Expr::Kind::Select: {
        Val c = eval(x.a);
        return c.i ? eval(x.b) : eval(x.c);
      }
    }
    throw std::runtime_error("bad expr");
  }

  Val load_elem(const Expr &x) {
    const TensorDecl &d = *decls[x.tensor];
    std::vector<std::int64_t> ix(x.idx.size());
    for (std::size_t k = 0; k < ix.size(); ++k) ix[k] = eval(x.idx[k]).i;
    std::int64_t off = flatten(d, ix);
    const std::byte *p = buf[x.tensor] + off * ssize(d.type);
    Val v;
    switch (d.type) {
      case SType::F32: {
        float f;
        std::memcpy(&f, p, 4);
        v.f = f;
        break;
      }
      case SType::S32: {
        std::int32_t i;
        std::memcpy(&i, p, 4);
        v.i = i;
        break;
      }
      case SType::S8:
        v.i = *reinterpret_cast<const std::int8_t *>(p);
        break;
      case SType::U8:
        v.i = *reinterpret_cast<const std::uint8_t *>(p);
        break;
      case SType::I64:
        std::memcpy(&v.i, p, 8);
        break;
    }
    return v;
  }

  Val eval_bin(const Expr &x) {
    Val a = eval(x.a), b = eval(x.b);
    Val r;
    if (x.bop == BinOp::Lt) {
      r.i = is_float(x.a->type) ? (static_cast<float>(a.f) <
                                   static_cast<float>(b.f))
                                : (a.i < b.i);
      return r;
    }
    if (x.bop == BinOp::And) {
      r.i = (a.i != 0) && (b.i != 0);
      return r;
    }
    if (is_float(x.type)) {
      // Compute in f32 so interpreted arithmetic matches the kernels bit for
      // bit.
      float fa = static_cast<float>(a.f), fb = static_cast<float>(b.f);
      float fr = 0.f;
      switch (x.bop) {
        case BinOp::Add: fr = fa + fb; break;
        case BinOp::Sub: fr = fa - fb; break;
        case BinOp::Mul: fr = fa * fb; break;
        case BinOp::Div: fr = fa / fb; break;
        case BinOp::Max: fr = fa > fb ? fa : fb; break;
        case BinOp::Min: fr = fa < fb ? fa : fb; break;
        default:
          throw std::runtime_error("float op unsupported");
      }
      r.f = fr;
      return r;
    }
    switch (x.bop) {
      case BinOp::Add: r.i = a.i + b.i; break;
      case BinOp::Sub: r.i = a.i - b.i; break;
      case BinOp::Mul: r.i = a.i * b.i; break;
      case BinOp::Div: r.i = a.i / b.i; break;
      case BinOp::Max: r.i = a.i > b.i ? a.i : b.i; break;
      case BinOp::Min: r.i = a.i < b.i ? a.i : b.i; break;
      case BinOp::FloorDiv: {
        std::int64_t q = a.i / b.i;
        if ((a.i % b.i) != 0 && ((a.i < 0) != (b.i < 0))) --q;
        r.i = q;
        break;
      }
      case BinOp::Mod: {
        std::int64_t m = a.i % b.i;
        if (m != 0 && ((m < 0) != (b.i < 0))) m += b.i;
        r.i = m;
        break;
      }
      default:
        throw std::runtime_error("int op unsupported");
    }
    return r;
  }

  Val eval_un(const Expr &x) {
    Val a = eval(x.a);
    Val r;
    switch (x.uop) {
      case UnOp::Exp:
        r.f = static_cast<float>(std::exp(static_cast<float>(a.f)));
        return r;
      case UnOp::Round:
        r.f = static_cast<float>(std::nearbyint(static_cast<float>(a.f)));
        return r;
      case UnOp::Neg:
        if (is_float(x.type)) r.f = -static_cast<float>(a.f);
        else r.i = -a.i;
        return r;
      case UnOp::Cast: {
        bool src_f = is_float(x.a->type), dst_f = is_float(x.type);
        if (src_f && dst_f) r.f = static_cast<float>(a.f);
        else if (src_f && !dst_f)
          r.i = static_cast<std::int64_t>(
              std::nearbyint(static_cast<float>(a.f)));
        else if (!src_f && dst_f)
          r.f = static_cast<float>(a.i);
        else
          r.i = a.i;
        return r;
      }
    }
    throw std::runtime_error("bad unop");
  }

  void store_elem(const Stmt &s) {
    const TensorDecl &d = *decls[s.tensor];
    std::vector<std::int64_t> ix(s.idx.size());
    for (std::size_t k = 0; k < ix.size(); ++k) ix[k] = eval(s.idx[k]).i;
    std::int64_t off = flatten(d, ix);
    std::byte *p = buf[s.tensor] + off * ssize(d.type);
    Val v = eval(s.value);
    switch (d.type) {
      case SType::F32: {
        float f = static_cast<float>(v.f);
        std::memcpy(p, &f, 4);
        break;
      }
      case SType::S32: {
        std::int32_t i = static_cast<std::int32_t>(v.i);
        std::memcpy(p, &i, 4);
        break;
      }
      case SType::S8:
        *reinterpret_cast<std::int8_t *>(p) = static_cast<std::int8_t>(v.i);
        break;
      case SType::U8:
        *reinterpret_cast<std::uint8_t *>(p) = static_cast<std::uint8_t>(v.i);
        break;
      case SType::I64:
        std::memcpy(p, &v.i, 8);
        break;
    }
  }

  std::byte *buf_ptr(const BufArg &b) {
    const TensorDecl &d = *decls[b.tensor];
    std::vector<std::int64_t> ix(b.idx.size());
    for (std::size_t k = 0; k < ix.size(); ++k) ix[k] = eval(b.idx[k]).i;
    return buf[b.tensor] + flatten(d, ix) * ssize(d.type);
  }

  // Block strides follow from the (possibly shrunk) declaration: consecutive
  // k-blocks of A' are adjacent [MB,KB] tiles; for B' they sit one row of
  // n-blocks apart unless the n dimension was shrunk away.
  static std::int64_t a_stride(const TensorDecl &d) {
    std::size_t r = d.dims.size();
    return d.dims[r - 1] * d.dims[r - 2];
  }
  static std::int64_t b_stride(const TensorDecl &d) {
    std::size_t r = d.dims.size();
    std::int64_t s = d.dims[r - 1] * d.dims[r - 2];
    if (r >= 4) s *= d.dims[r - 3];
    return s;
  }

  void intrinsic(const Stmt &s) {
    std::vector<std::int64_t> sc(s.scalars.size());
    for (std::size_t k = 0; k < sc.size(); ++k) sc[k] = eval(s.scalars[k]).i;
    if (s.iname == "brgemm_f32" || s.iname == "brgemm_u8s8s32") {
      const TensorDecl &da = *decls[s.bufs[0].tensor];
      const TensorDecl &db = *decls[s.bufs[1].tensor];
      std::byte *pa = buf_ptr(s.bufs[0]);
      std::byte *pb = buf_ptr(s.bufs[1]);
      std::byte *pc = buf_ptr(s.bufs[2]);
      if (s.iname == "brgemm_f32")
        kernels::brgemm_f32(reinterpret_cast<const float *>(pa),
                            reinterpret_cast<const float *>(pb),
                            reinterpret_cast<float *>(pc), sc[0], sc[1], sc[2],
                            sc[3], a_stride(da), b_stride(db), sc[4] != 0);
      else
        kernels::brgemm_u8s8s32(reinterpret_cast<const std::uint8_t *>(pa),
                                reinterpret_cast<const std::int8_t *>(pb),
                                reinterpret_cast<std::int32_t *>(pc), sc[0],
                                sc[1], sc[2], sc[3], a_stride(da),
                                b_stride(db), sc[4] != 0);
      return;
    }
    if (s.iname == "reorder_pack") {
      const TensorDecl &ds = *decls[s.bufs[0].tensor];
      kernels::reorder_pack(buf_ptr(s.bufs[0]), buf_ptr(s.bufs[1]),
                            ssize(ds.type), sc[0], sc[1], sc[2], sc[3], sc[4],
                            sc[5] != 0);
      return;
    }
    if (s.iname == "reorder_unpack") {
      const TensorDecl &ds = *decls[s.bufs[0].tensor];
      kernels::reorder_unpack(buf_ptr(s.bufs[0]), buf_ptr(s.bufs[1]),
                              ssize(ds.type), sc[0], sc[1], sc[2], sc[3],
                              sc[4]);
      return;
    }
    if (s.iname == "anchor_probe") {
      ex->note_probe(static_cast<int>(sc[0]), static_cast<int>(sc[1]));
      return;
    }
    throw std::runtime_error("unknown intrinsic " + s.iname);
  }

  void exec(const std::vector<StmtP> &body, bool allow_parallel);
  void exec_stmt(const Stmt &s, bool allow_parallel);
};

void Interp::exec(const std::vector<StmtP> &body, bool allow_parallel) {
  for (const StmtP &s : body) exec_stmt(*s, allow_parallel);
}

void Interp::exec_stmt(const Stmt &s, bool allow_parallel) {
  switch (s.kind) {
    case Stmt::Kind::For: {
      std::int64_t lo = eval(s.lo).i, hi = eval(s.hi).i;
      for (std::int64_t v = lo; v < hi; v += s.step) {
        vars[s.var] = v;
        exec(s.body, false);
      }
      return;
    }
    case Stmt::Kind::ParallelFor: {
      std::int64_t lo = eval(s.lo).i, hi = eval(s.hi).i;
      std::int64_t iters = s.step > 0 ? (hi - lo + s.step - 1) / s.step : 0;
      int w = ex->num_workers();
      if (!allow_parallel || w <= 1 || iters <= 1) {
        for (std::int64_t v = lo; v < hi; v += s.step) {
          vars[s.var] = v;
          exec(s.body, false);
        }
        return;
      }
      int nth = static_cast<int>(std::min<std::int64_t>(w, iters));
      std::int64_t chunk = (iters + nth - 1) / nth;
      std::vector<std::thread> threads;
      std::vector<std::vector<std::vector<std::byte>>> scratch(nth);
      for (int t = 0; t < nth; ++t) {
        std::int64_t b0 = t * chunk, b1 = std::min<std::int64_t>(iters,
                                                                 b0 + chunk);
        if (b0 >= b1) break;
        threads.emplace_back([this, &s, &scratch, t, b0, b1, lo]() {
          Interp sub{ex, decls, fn, buf, vars};
          // Fresh per-worker copies of the function's thread-local buffers.
          for (const TensorDecl &d : fn.decls)
            if (d.storage == Storage::ThreadLocal) {
              scratch[t].emplace_back(d.bytes());
              sub.buf[d.id] = scratch[t].back().data();
            }
          for (std::int64_t k = b0; k < b1; ++k) {
            sub.vars[s.var] = lo + k * s.step;
            sub.exec(s.body, false);
          }
        });
      }
      for (auto &th : threads) th.join();
      return;
    }
    case Stmt::Kind::Store:
      store_elem(s);
      return;
    case Stmt::Kind::LetVar:
      vars[s.var] = eval(s.value).i;
      return;
    case Stmt::Kind::Intrinsic:
      intrinsic(s);
      return;
    case Stmt::Kind::If:
      if (eval(s.cond).i) exec(s.body, false);
      return;
    case Stmt::Kind::Call:
      throw std::runtime_error("nested calls unsupported");
  }
}

}  // namespace

void Executor::bind(int global_id, void *data) {
  global_buf_[global_id] = static_cast<std::byte *>(data);
}

void *Executor::global_data(int global_id) { return global_buf_[global_id]; }

void Executor::note_probe(int op_id, int anchor) {
  std::lock_guard<std::mutex> g(probe_mu_);
  ++anchor_counts_[{op_id, anchor}];
}

Executor::Executor(const tir::Module &m, const tir::BufferPlan &plan,
                   int num_workers)
    : m_(m), plan_(plan), workers_(num_workers < 1 ? 1 : num_workers) {
  decls_.assign(m.next_tensor_id, nullptr);
  for (const auto &d : m.globals) decls_[d.id] = &d;
  for (const auto &f : m.funcs)
    for (const auto &d : f.decls) decls_[d.id] = &d;

  global_buf_.assign(m.next_tensor_id, nullptr);
  arena_.assign(static_cast<std::size_t>(plan_.arena_size), std::byte{0});
  for (const auto &d : m.globals) {
    if (d.storage == tir::Storage::Temp) {
      auto it = plan_.placements.find(d.id);
      if (it == plan_.placements.end())
        throw std::runtime_error("temp " + d.name + " missing from plan");
      global_buf_[d.id] = arena_.data() + it->second.offset;
    } else {
      // ConstSlot and unbound Globals get owned zero-initialized storage;
      // bind() overrides Globals.
      owned_.emplace_back(static_cast<std::size_t>(d.bytes()), std::byte{0});
      global_buf_[d.id] = owned_.back().data();
    }
  }
}

void Executor::run_function(const tir::Function &f,
                            const std::vector<std::byte *> &args,
                            bool parallel) {
  Interp in{this, decls_, f, global_buf_, {}};
  in.vars.assign(static_cast<std::size_t>(m_.next_var_id), 0);
  if (args.size() != f.params.size())
    throw std::runtime_error("call arity mismatch for " + f.name);
  for (std::size_t k = 0; k < args.size(); ++k) in.buf[f.params[k]] = args[k];
  std::vector<std::vector<std::byte>> scratch;
  for (const auto &d : f.decls)
    if (d.storage == tir::Storage::Temp ||
        d.storage == tir::Storage::ThreadLocal) {
      scratch.emplace_back(static_cast<std::size_t>(d.bytes()), std::byte{0});
      in.buf[d.id] = scratch.back().data();
    }
  in.exec(f.body, parallel && workers_ > 1);
}

void Executor::run(Profile *prof) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  auto t0 = clock::now();
  if (!folded_ && !m_.fold.empty()) {
    const tir::Function *ff = m_.find_func(m_.fold);
    if (!ff) throw std::runtime_error("missing fold function");
    run_function(*ff, {}, /*parallel=*/false);
    folded_ = true;
    ++fold_runs_;
  }
  auto t1 = clock::now();
  const tir::Function *entry = m_.find_func(m_.entry);
  if (!entry) throw std::runtime_error("missing entry function");
  for (const auto &st : entry->body) {
    if (st->kind != tir::Stmt::Kind::Call)
      throw std::runtime_error("entry must contain only calls");
    const tir::Function *callee = m_.find_func(st->callee);
    if (!callee) throw std::runtime_error("missing function " + st->callee);
    std::vector<std::byte *> args;
    for (int g : st->args) args.push_back(global_buf_[g]);
    auto c0 = clock::now();
    run_function(*callee, args, /*parallel=*/true);
    auto c1 = clock::now();
    if (prof) prof->call_ms.emplace_back(st->callee, ms(c0, c1));
  }
  auto t2 = clock::now();
  if (prof) {
    prof->fold_ms += ms(t0, t1);
    prof->total_ms += ms(t0, t2);
    prof->arena_bytes = plan_.arena_size;
  }
}

}  // namespace mtc::rt
