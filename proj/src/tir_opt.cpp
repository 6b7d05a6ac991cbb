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

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "mtc/tir.hpp"

namespace mtc::tir {

namespace {

// ------------------------------------------------------------- merge pass

struct Remap {
  std::map<int, int> tensors;
  std::map<int, int> vars;
};

ExprP remap_expr(const ExprP &e, const Remap &r) {
  if (!e) return e;
  auto n = std::make_shared<Expr>(*e);
  if (e->kind == Expr::Kind::Var) {
    auto it = r.vars.find(e->var);
    if (it != r.vars.end()) n->var = it->second;
    return n;
  }
  if (e->kind == Expr::Kind::Load) {
    auto it = r.tensors.find(e->tensor);
    if (it != r.tensors.end()) n->tensor = it->second;
    n->idx.clear();
    for (const auto &i : e->idx) n->idx.push_back(remap_expr(i, r));
    return n;
  }
  n->a = remap_expr(e->a, r);
  n->b = remap_expr(e->b, r);
  n->c = remap_expr(e->c, r);
  return n;
}

StmtP remap_stmt(const StmtP &s, const Remap &r) {
  auto n = std::make_shared<Stmt>(*s);
  auto mt = [&](int t) {
    auto it = r.tensors.find(t);
    return it != r.tensors.end() ? it->second : t;
  };
  auto mv = [&](int v) {
    auto it = r.vars.find(v);
    return it != r.vars.end() ? it->second : v;
  };
  n->var = s->var >= 0 ? mv(s->var) : s->var;
  n->tensor = s->tensor >= 0 ? mt(s->tensor) : s->tensor;
  n->lo = remap_expr(s->lo, r);
  n->hi = remap_expr(s->hi, r);
  n->cond = remap_expr(s->cond, r);
  n->value = remap_expr(s->value, r);
  n->idx.clear();
  for (const auto &i : s->idx) n->idx.push_back(remap_expr(i, r));
  n->bufs.clear();
  for (const auto &b : s->bufs) {
    BufArg nb;
    nb.tensor = mt(b.tensor);
    for (const auto &i : b.idx) nb.idx.push_back(remap_expr(i, r));
    n->bufs.push_back(std::move(nb));
  }
  n->scalars.clear();
  for (const auto &sc : s->scalars) n->scalars.push_back(remap_expr(sc, r));
  n->body.clear();
  for (const auto &b : s->body) n->body.push_back(remap_stmt(b, r));
  return n;
}

bool const_val(const ExprP &e, std::int64_t *out) {
  if (e && e->kind == Expr::Kind::ConstI) {
    *out = e->ival;
    return true;
  }
  return false;
}

// Outermost statement must be a lone ParallelFor for a function to take part
// in coarse-grain merging.
const Stmt *outer_parallel(const Function &f) {
  if (f.body.size() != 1) return nullptr;
  const Stmt *s = f.body[0].get();
  return s->kind == Stmt::Kind::ParallelFor ? s : nullptr;
}

bool same_range(const Stmt *a, const Stmt *b) {
  std::int64_t alo, ahi, blo, bhi;
  return const_val(a->lo, &alo) && const_val(a->hi, &ahi) &&
         const_val(b->lo, &blo) && const_val(b->hi, &bhi) && alo == blo &&
         ahi == bhi && a->step == b->step;
}

}  // namespace

Module merge_parallel_loops(const Module &m, std::vector<std::string> *report) {
  Module out = m;
  const Function *entry_probe = out.find_func(out.entry);
  if (!entry_probe) return out;
  // Adding merged functions reallocates out.funcs, so work on a copy of the
  // entry body and write it back at the end.
  std::vector<StmtP> body = entry_probe->body;

  std::vector<StmtP> new_body;
  int merged_count = 0;
  std::size_t i = 0;
  while (i < body.size()) {
    const StmtP &s = body[i];
    if (s->kind != Stmt::Kind::Call) {
      new_body.push_back(s);
      ++i;
      continue;
    }
    // Grow a run of mergeable, range-identical consecutive calls.
    std::size_t j = i;
    while (j + 1 < body.size()) {
      const StmtP &cur = body[j];
      const StmtP &nxt = body[j + 1];
      if (cur->kind != Stmt::Kind::Call || nxt->kind != Stmt::Kind::Call) break;
      const Function *fc = out.find_func(cur->callee);
      const Function *fn = out.find_func(nxt->callee);
      if (!fc || !fn) break;
      const Stmt *pc = outer_parallel(*fc);
      const Stmt *pn = outer_parallel(*fn);
      if (!pc || !pn || !pc->mergeable) break;
      if (!same_range(pc, pn)) {
        if (report)
          report->push_back("coarse-grain: not merging '" + cur->callee +
                            "' with '" + nxt->callee +
                            "': outer loop ranges differ");
        break;
      }
      ++j;
    }
    if (j == i) {
      new_body.push_back(s);
      ++i;
      continue;
    }

    // Build the merged function.
    Function mf;
    mf.name = "merged_" + std::to_string(merged_count++);
    int outer_var = out.fresh_var();
    mf.vars.push_back({outer_var, "ci", SType::I64});
    StmtP outer;
    std::vector<int> call_args;
    std::set<int> seen_args;
    std::vector<std::string> names;
    for (std::size_t k = i; k <= j; ++k) {
      const StmtP &call = body[k];
      const Function &callee = *out.find_func(call->callee);
      names.push_back(call->callee);
      Remap r;
      for (std::size_t pi = 0; pi < callee.params.size(); ++pi) {
        int g = call->args[pi];
        r.tensors[callee.params[pi]] = g;
        if (seen_args.insert(g).second) {
          call_args.push_back(g);
          TensorDecl pd = *out.find_global(g);
          pd.storage = Storage::Param;
          mf.params.push_back(g);
          mf.decls.push_back(pd);
        }
      }
      for (const auto &d : callee.decls) {
        if (d.storage == Storage::Param) continue;
        TensorDecl nd = d;
        nd.id = out.fresh_tensor();
        nd.name = callee.name + "_" + d.name;
        r.tensors[d.id] = nd.id;
        mf.decls.push_back(nd);
      }
      const Stmt *pl = outer_parallel(callee);
      for (const auto &v : callee.vars) {
        if (v.id == pl->var) {
          r.vars[v.id] = outer_var;
          continue;
        }
        int nv = out.fresh_var();
        mf.vars.push_back({nv, v.name, v.type});
        r.vars[v.id] = nv;
      }
      if (!outer) {
        outer = std::make_shared<Stmt>(*pl);
        outer->var = outer_var;
        outer->mergeable = false;
        outer->body.clear();
      }
      for (const auto &b : pl->body) outer->body.push_back(remap_stmt(b, r));
    }
    mf.body.push_back(outer);
    out.funcs.push_back(std::move(mf));
    new_body.push_back(make_call("merged_" + std::to_string(merged_count - 1),
                                 call_args));
    if (report) {
      std::string line = "coarse-grain: merged";
      for (const auto &n : names) line += " " + n;
      report->push_back(line);
    }
    i = j + 1;
  }
  out.find_func(out.entry)->body = std::move(new_body);
  return out;
}

// ------------------------------------------------------------ shrink pass

namespace {

struct Affine {
  bool ok = true;
  std::map<int, std::int64_t> terms;  // loop var -> coefficient
  std::int64_t c = 0;
};

struct LoopInfo {
  std::int64_t extent = -1;  // iteration count; -1: non-constant bounds
  std::int64_t step = 1;
  bool parallel = false;
};

struct Access {
  std::vector<int> stack;    // enclosing loop vars, outer to inner
  std::vector<Affine> idx;   // per original dim
  int wholesale_from;        // dims >= this index are bulk-accessed
  int phantom_dim = -1;      // brgemm batch dim carrying extra extent
  std::int64_t phantom = 0;
};

struct ShrinkCtx {
  Function *f;
  const Module *m;
  std::map<int, LoopInfo> loops;
  std::map<int, Affine> lets;
  std::vector<int> stack;
  std::map<int, std::vector<Access>> accesses;  // target tensor id -> uses
  std::set<int> targets;

  Affine affine_of(const ExprP &e) {
    Affine a;
    if (!e) {
      a.ok = false;
      return a;
    }
    switch (e->kind) {
      case Expr::Kind::ConstI:
        a.c = e->ival;
        return a;
      case Expr::Kind::Var: {
        if (loops.count(e->var)) {
          a.terms[e->var] = 1;
          return a;
        }
        auto it = lets.find(e->var);
        if (it != lets.end()) return it->second;
        a.ok = false;
        return a;
      }
      case Expr::Kind::Bin: {
        Affine x = affine_of(e->a), y = affine_of(e->b);
        if (!x.ok || !y.ok) {
          a.ok = false;
          return a;
        }
        if (e->bop == BinOp::Add || e->bop == BinOp::Sub) {
          a = x;
          std::int64_t sgn = e->bop == BinOp::Add ? 1 : -1;
          a.c += sgn * y.c;
          for (auto [v, cc] : y.terms) a.terms[v] += sgn * cc;
          for (auto it2 = a.terms.begin(); it2 != a.terms.end();)
            it2 = it2->second == 0 ? a.terms.erase(it2) : std::next(it2);
          return a;
        }
        if (e->bop == BinOp::Mul) {
          const Affine *cst = y.terms.empty() ? &y : x.terms.empty() ? &x
                                                                     : nullptr;
          const Affine *var = cst == &y ? &x : &y;
          if (!cst || !cst->terms.empty()) {
            a.ok = false;
            return a;
          }
          a.c = var->c * cst->c;
          for (auto [v, cc] : var->terms) a.terms[v] = cc * cst->c;
          return a;
        }
        a.ok = false;
        return a;
      }
      default:
        a.ok = false;
        return a;
    }
  }

  void record(int tensor, const std::vector<ExprP> &idx, int wholesale_from,
              int phantom_dim, std::int64_t phantom) {
    if (!targets.count(tensor)) return;
    Access acc;
    acc.stack = stack;
    acc.wholesale_from = wholesale_from;
    acc.phantom_dim = phantom_dim;
    acc.phantom = phantom;
    for (const auto &i : idx) acc.idx.push_back(affine_of(i));
    accesses[tensor].push_back(std::move(acc));
  }

  void scan_expr(const ExprP &e) {
    if (!e) return;
    if (e->kind == Expr::Kind::Load) {
      record(e->tensor, e->idx, std::numeric_limits<int>::max(), -1, 0);
      for (const auto &i : e->idx) scan_expr(i);
      return;
    }
    scan_expr(e->a);
    scan_expr(e->b);
    scan_expr(e->c);
    if (e->kind == Expr::Kind::Bin || e->kind == Expr::Kind::Un) return;
  }

  void scan(const std::vector<StmtP> &stmts) {
    for (const auto &s : stmts) {
      switch (s->kind) {
        case Stmt::Kind::For:
        case Stmt::Kind::ParallelFor: {
          scan_expr(s->lo);
          scan_expr(s->hi);
          LoopInfo li;
          li.parallel = s->kind == Stmt::Kind::ParallelFor;
          std::int64_t lo, hi;
          if (const_val(s->lo, &lo) && const_val(s->hi, &hi) && s->step >= 1)
            li.extent = (hi - lo + s->step - 1) / s->step;
          li.step = s->step;
          loops[s->var] = li;
          stack.push_back(s->var);
          scan(s->body);
          stack.pop_back();
          break;
        }
        case Stmt::Kind::LetVar:
          scan_expr(s->value);
          lets[s->var] = affine_of(s->value);
          break;
        case Stmt::Kind::Store:
          record(s->tensor, s->idx, std::numeric_limits<int>::max(), -1, 0);
          for (const auto &i : s->idx) scan_expr(i);
          scan_expr(s->value);
          break;
        case Stmt::Kind::If:
          scan_expr(s->cond);
          scan(s->body);
          break;
        case Stmt::Kind::Intrinsic: {
          bool brg = s->iname.rfind("brgemm", 0) == 0;
          std::int64_t bs = 0;
          if (brg && s->scalars.size() >= 4) const_val(s->scalars[3], &bs);
          for (std::size_t bi = 0; bi < s->bufs.size(); ++bi) {
            const auto &b = s->bufs[bi];
            int rank = static_cast<int>(b.idx.size());
            // The brgemm batch dim (extra extent BS-1) is the A operand's
            // k-block axis (rank-3) resp. the B operand's (rank-4).
            int phantom_dim = -1;
            std::int64_t phantom = 0;
            if (brg && bi < 2 && bs > 1) {
              phantom_dim = bi == 0 ? rank - 3 : rank - 4;
              phantom = bs - 1;
            }
            record(b.tensor, b.idx, std::max(0, rank - 2), phantom_dim,
                   phantom);
            for (const auto &i : b.idx) scan_expr(i);
          }
          for (const auto &sc : s->scalars) scan_expr(sc);
          break;
        }
        case Stmt::Kind::Call:
          break;
      }
    }
  }
};

struct DimPlan {
  bool drop = false;
  bool rebase = false;          // replace index by its inner affine part
  std::int64_t new_extent = 0;  // when rebasing
};

struct TensorPlan {
  std::vector<DimPlan> dims;
  bool make_thread_local = false;
  bool any_change = false;
};

bool affine_equal(const Affine &a, const Affine &b) {
  return a.ok && b.ok && a.c == b.c && a.terms == b.terms;
}

// Splits an affine form into (outer base, inner part) relative to a prefix.
void split_affine(const Affine &a, const std::set<int> &inner_vars,
                  Affine *outer, Affine *inner) {
  *outer = Affine{};
  *inner = Affine{};
  outer->c = a.c;
  for (auto [v, c] : a.terms)
    (inner_vars.count(v) ? inner : outer)->terms[v] = c;
}

}  // namespace

void shrink_temporaries(Function &f, const Module &m) {
  ShrinkCtx ctx;
  ctx.f = &f;
  ctx.m = &m;
  for (const auto &d : f.decls)
    if (d.storage == Storage::Temp || d.storage == Storage::ThreadLocal)
      ctx.targets.insert(d.id);
  if (ctx.targets.empty()) return;
  ctx.scan(f.body);

  std::map<int, TensorPlan> plans;
  for (int tid : ctx.targets) {
    auto it = ctx.accesses.find(tid);
    if (it == ctx.accesses.end() || it->second.empty()) continue;
    const auto &accs = it->second;
    TensorDecl *decl = f.find_decl(tid);
    int rank = static_cast<int>(decl->dims.size());

    // Common loop prefix of all accesses.
    std::size_t lca = accs[0].stack.size();
    for (const auto &a : accs) {
      lca = std::min(lca, a.stack.size());
      for (std::size_t k = 0; k < lca; ++k)
        if (a.stack[k] != accs[0].stack[k]) {
          lca = k;
          break;
        }
    }
    std::set<int> prefix(accs[0].stack.begin(), accs[0].stack.begin() + lca);

    TensorPlan plan;
    plan.dims.resize(rank);
    bool bad = false;
    for (const auto &a : accs)
      if (static_cast<int>(a.idx.size()) != rank) bad = true;
    if (bad) continue;

    for (int d = 0; d < rank && !bad; ++d) {
      // Per-access inner split; all outer bases must coincide to shrink.
      bool all_ok = true;
      Affine base0;
      bool have_base = false;
      bool bases_equal = true;
      std::int64_t max_extent = 0;
      bool extent_known = true;
      bool any_inner = false;
      bool wholesale = false;
      std::int64_t phantom = 0;

      for (const auto &a : accs) {
        if (d >= a.wholesale_from) wholesale = true;
        std::int64_t acc_phantom = d == a.phantom_dim ? a.phantom : 0;
        phantom = std::max(phantom, acc_phantom);
        const Affine &af = a.idx[d];
        if (!af.ok) {
          all_ok = false;
          continue;
        }
        std::set<int> inner_vars(a.stack.begin() + lca, a.stack.end());
        Affine outer, inner;
        split_affine(af, inner_vars, &outer, &inner);
        if (!have_base) {
          base0 = outer;
          have_base = true;
        } else if (!affine_equal(base0, outer)) {
          bases_equal = false;
        }
        if (!inner.terms.empty()) any_inner = true;
        std::int64_t ext = 1 + acc_phantom;
        for (auto [v, c] : inner.terms) {
          auto li = ctx.loops.find(v);
          if (li == ctx.loops.end() || li->second.extent < 1 || c < 0) {
            extent_known = false;
            break;
          }
          // The loop var's maximum value accounts for a non-unit step.
          ext += c * (li->second.extent - 1) * li->second.step;
        }
        max_extent = std::max(max_extent, ext);
      }

      DimPlan &dp = plan.dims[d];
      if (wholesale || !all_ok || !have_base || !bases_equal) continue;
      if (!any_inner && phantom == 0) {
        dp.drop = true;
        // A dropped dimension whose base distinguished parallel iterations
        // forces per-worker storage.
        for (auto [v, c] : base0.terms)
          if (c != 0 && ctx.loops.count(v) && ctx.loops[v].parallel)
            plan.make_thread_local = true;
        plan.any_change = true;
        continue;
      }
      if (extent_known && max_extent < decl->dims[d]) {
        dp.rebase = true;
        dp.new_extent = max_extent;
        for (auto [v, c] : base0.terms)
          if (c != 0 && ctx.loops.count(v) && ctx.loops[v].parallel)
            plan.make_thread_local = true;
        plan.any_change = true;
      }
    }

    // Never drop every dimension of a tensor used by an intrinsic; keep the
    // last kept dim as extent 1 instead.
    bool all_dropped = true;
    for (const auto &dp : plan.dims)
      if (!dp.drop) all_dropped = false;
    if (all_dropped && rank > 0) {
      plan.dims[rank - 1].drop = false;
      plan.dims[rank - 1].rebase = true;
      plan.dims[rank - 1].new_extent = 1;
    }
    if (plan.any_change) plans[tid] = plan;
  }
  if (plans.empty()) return;

  // Rewrite pass: same traversal, rebuilding indices per plan.
  struct Rewriter {
    Function &f;
    std::map<int, TensorPlan> &plans;
    ShrinkCtx &ctx;  // reuse loop/let affine info gathered during scan

    std::vector<int> stack;

    std::vector<ExprP> rewrite_idx(int tensor, const std::vector<ExprP> &idx) {
      auto it = plans.find(tensor);
      if (it == plans.end()) {
        std::vector<ExprP> out;
        for (const auto &i : idx) out.push_back(rewrite(i));
        return out;
      }
      const TensorPlan &p = it->second;
      std::vector<ExprP> out;
      for (std::size_t d = 0; d < idx.size(); ++d) {
        const DimPlan &dp = p.dims[d];
        if (dp.drop) continue;
        if (!dp.rebase) {
          out.push_back(rewrite(idx[d]));
          continue;
        }
        // Rebuild from the inner affine part.
        Affine af = ctx.affine_of(idx[d]);
        std::set<int> inner_vars;
        // Inner = vars not in this site's enclosing prefix is unknowable here
        // without the per-tensor LCA; recompute: inner vars are those loop
        // vars in af that are NOT in the access's common prefix. The prefix
        // is whatever part of the current stack is shared; since rebased
        // dims required identical outer bases, subtracting the base is
        // equivalent: inner terms = terms on vars deeper than the base vars.
        // We conservatively treat vars present in the current stack beyond
        // the base as inner. Practical approach: drop terms that appear in
        // the recorded base (recomputed below).
        (void)inner_vars;
        ExprP e = nullptr;
        // Determine base terms: outer part = af minus inner; we rebuild the
        // inner expression as af - base, where base terms are those whose
        // vars are NOT inside the innermost region. We reuse the plan's
        // extent decision: keep only terms of vars whose loop extent
        // contributes to new_extent, i.e. vars strictly inside the LCA.
        for (auto [v, c] : af.terms) {
          if (!inner_of.count(tensor) || !inner_of[tensor].count(v)) continue;
          ExprP t = c == 1 ? vref(v) : mul(ci(c), vref(v));
          e = e ? add(e, t) : t;
        }
        if (!e) e = ci(0);
        out.push_back(e);
      }
      return out;
    }

    std::map<int, std::set<int>> inner_of;  // tensor -> inner loop vars

    ExprP rewrite(const ExprP &e) {
      if (!e) return e;
      if (e->kind == Expr::Kind::Load) {
        auto n = std::make_shared<Expr>(*e);
        n->idx = rewrite_idx(e->tensor, e->idx);
        return n;
      }
      if (e->kind == Expr::Kind::Var || e->kind == Expr::Kind::ConstF ||
          e->kind == Expr::Kind::ConstI)
        return e;
      auto n = std::make_shared<Expr>(*e);
      n->a = rewrite(e->a);
      n->b = rewrite(e->b);
      n->c = rewrite(e->c);
      return n;
    }

    void run(std::vector<StmtP> &stmts) {
      for (auto &s : stmts) {
        switch (s->kind) {
          case Stmt::Kind::For:
          case Stmt::Kind::ParallelFor:
            s->lo = rewrite(s->lo);
            s->hi = rewrite(s->hi);
            run(s->body);
            break;
          case Stmt::Kind::LetVar:
            s->value = rewrite(s->value);
            break;
          case Stmt::Kind::Store:
            s->idx = rewrite_idx(s->tensor, s->idx);
            s->value = rewrite(s->value);
            break;
          case Stmt::Kind::If:
            s->cond = rewrite(s->cond);
            run(s->body);
            break;
          case Stmt::Kind::Intrinsic:
            for (auto &b : s->bufs) b.idx = rewrite_idx(b.tensor, b.idx);
            for (auto &sc : s->scalars) sc = rewrite(sc);
            break;
          case Stmt::Kind::Call:
            break;
        }
      }
    }
  };

  Rewriter rw{f, plans, ctx, {}, {}};
  // Inner-var sets per tensor: loop vars strictly inside the LCA prefix.
  for (auto &[tid, plan] : plans) {
    const auto &accs = ctx.accesses[tid];
    std::size_t lca = accs[0].stack.size();
    for (const auto &a : accs) {
      lca = std::min(lca, a.stack.size());
      for (std::size_t k = 0; k < lca; ++k)
        if (a.stack[k] != accs[0].stack[k]) {
          lca = k;
          break;
        }
    }
    std::set<int> inner;
    for (const auto &a : accs)
      for (std::size_t k = lca; k < a.stack.size(); ++k)
        inner.insert(a.stack[k]);
    rw.inner_of[tid] = inner;
  }
  rw.run(f.body);

  for (auto &[tid, plan] : plans) {
    TensorDecl *d = f.find_decl(tid);
    std::vector<std::int64_t> nd;
    for (std::size_t i = 0; i < d->dims.size(); ++i) {
      if (plan.dims[i].drop) continue;
      nd.push_back(plan.dims[i].rebase ? plan.dims[i].new_extent : d->dims[i]);
    }
    if (nd.empty()) nd.push_back(1);
    d->dims = nd;
    if (plan.make_thread_local) d->storage = Storage::ThreadLocal;
  }
}

void shrink_all(Module &m) {
  for (auto &f : m.funcs) shrink_temporaries(f, m);
}

// ------------------------------------------------------------ buffer plan

BufferPlan plan_buffers(const Module &m, bool reuse) {
  BufferPlan plan;
  const Function *entry = m.find_func(m.entry);

  // Per-function scratch: local temporaries live for one call.
  for (const auto &f : m.funcs) {
    std::int64_t bytes = 0;
    for (const auto &d : f.decls)
      if (d.storage == Storage::Temp || d.storage == Storage::ThreadLocal)
        bytes += (d.bytes() + 63) / 64 * 64;
    plan.scratch_bytes[f.name] = bytes;
  }

  if (!entry) return plan;

  // Lifetimes of module-level temps over the entry call sequence.
  struct Life {
    int first = -1, last = -1;
    std::int64_t size = 0;
  };
  std::map<int, Life> lives;
  std::vector<int> order;  // temps in first-use order
  for (int ci = 0; ci < static_cast<int>(entry->body.size()); ++ci) {
    const StmtP &s = entry->body[ci];
    if (s->kind != Stmt::Kind::Call) continue;
    for (int a : s->args) {
      const TensorDecl *g = m.find_global(a);
      if (!g || g->storage != Storage::Temp) continue;
      auto &l = lives[a];
      if (l.first < 0) {
        l.first = ci;
        l.size = (g->bytes() + 63) / 64 * 64;
        order.push_back(a);
      }
      l.last = ci;
    }
  }

  struct Slot {
    std::int64_t offset, size;
  };
  std::vector<Slot> free_list;  // most recently freed first
  std::map<int, std::int64_t> slot_extent;  // full extent backing each temp
  std::int64_t arena_end = 0;
  std::int64_t live_now = 0;

  int max_call = entry->body.empty()
                     ? -1
                     : static_cast<int>(entry->body.size()) - 1;
  for (int ci = 0; ci <= max_call; ++ci) {
    for (int tid : order) {
      auto &l = lives[tid];
      if (l.first != ci) continue;
      Placement pl;
      pl.size = l.size;
      pl.first_def = l.first;
      pl.last_use = l.last;
      bool placed = false;
      if (reuse) {
        for (std::size_t k = 0; k < free_list.size(); ++k) {
          if (free_list[k].size >= l.size) {
            pl.offset = free_list[k].offset;
            slot_extent[tid] = free_list[k].size;  // slot keeps its extent
            free_list.erase(free_list.begin() + k);
            placed = true;
            break;
          }
        }
      }
      if (!placed) {
        pl.offset = arena_end;
        arena_end += l.size;
        slot_extent[tid] = l.size;
      }
      plan.placements[tid] = pl;
      live_now += l.size;
      plan.peak_live_bytes = std::max(plan.peak_live_bytes, live_now);
      plan.total_temp_bytes += l.size;
    }
    // Free temps whose last consumer just ran.
    for (int tid : order) {
      auto &l = lives[tid];
      if (l.last != ci) continue;
      const Placement &pl = plan.placements[tid];
      free_list.insert(free_list.begin(), Slot{pl.offset, slot_extent[tid]});
      live_now -= l.size;
    }
  }
  plan.arena_size = arena_end;
  return plan;
}

}  // namespace mtc::tir
