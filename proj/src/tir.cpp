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

#include "mtc/tir.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace mtc::tir {

SType stype_of(DataType dt) {
  switch (dt) {
    case DataType::F32: return SType::F32;
    case DataType::S32: return SType::S32;
    case DataType::S8: return SType::S8;
    case DataType::U8: return SType::U8;
  }
  return SType::F32;
}

std::size_t ssize(SType t) {
  switch (t) {
    case SType::F32:
    case SType::S32: return 4;
    case SType::S8:
    case SType::U8: return 1;
    case SType::I64: return 8;
  }
  return 4;
}

const char *stype_name(SType t) {
  switch (t) {
    case SType::F32: return "f32";
    case SType::S32: return "s32";
    case SType::S8: return "s8";
    case SType::U8: return "u8";
    case SType::I64: return "i64";
  }
  return "?";
}

bool is_float(SType t) { return t == SType::F32; }

ExprP cf(double v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::ConstF;
  e->type = SType::F32;
  e->fval = v;
  return e;
}

ExprP ci(std::int64_t v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::ConstI;
  e->type = SType::I64;
  e->ival = v;
  return e;
}

ExprP cnum(SType t, double v) {
  if (t == SType::F32) return cf(v);
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::ConstI;
  e->type = t;
  e->ival = static_cast<std::int64_t>(v);
  return e;
}

ExprP vref(int var, SType t) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Var;
  e->type = t;
  e->var = var;
  return e;
}

ExprP load(int tensor, SType t, std::vector<ExprP> idx) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Load;
  e->type = t;
  e->tensor = tensor;
  e->idx = std::move(idx);
  return e;
}

ExprP bin(BinOp op, ExprP a, ExprP b) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Bin;
  e->type = (op == BinOp::Lt || op == BinOp::And) ? SType::I64 : a->type;
  e->bop = op;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

ExprP un(UnOp op, ExprP a, SType result) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Un;
  e->type = result;
  e->uop = op;
  e->a = std::move(a);
  return e;
}

ExprP select(ExprP cond, ExprP then_v, ExprP else_v) {
  auto e = std::make_shared<Expr>();
  e->kind = Expr::Kind::Select;
  e->type = then_v->type;
  e->a = std::move(cond);
  e->b = std::move(then_v);
  e->c = std::move(else_v);
  return e;
}

StmtP make_for(int var, ExprP lo, ExprP hi, std::int64_t step,
               std::vector<StmtP> body, bool parallel, bool mergeable) {
  auto s = std::make_shared<Stmt>();
  s->kind = parallel ? Stmt::Kind::ParallelFor : Stmt::Kind::For;
  s->var = var;
  s->lo = std::move(lo);
  s->hi = std::move(hi);
  s->step = step;
  s->mergeable = mergeable;
  s->body = std::move(body);
  return s;
}

StmtP make_store(int tensor, std::vector<ExprP> idx, ExprP value) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Kind::Store;
  s->tensor = tensor;
  s->idx = std::move(idx);
  s->value = std::move(value);
  return s;
}

StmtP make_let(int var, ExprP value) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Kind::LetVar;
  s->var = var;
  s->value = std::move(value);
  return s;
}

StmtP make_if(ExprP cond, std::vector<StmtP> body) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Kind::If;
  s->cond = std::move(cond);
  s->body = std::move(body);
  return s;
}

StmtP make_intrinsic(std::string name, std::vector<BufArg> bufs,
                     std::vector<ExprP> scalars) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Kind::Intrinsic;
  s->iname = std::move(name);
  s->bufs = std::move(bufs);
  s->scalars = std::move(scalars);
  return s;
}

StmtP make_call(std::string callee, std::vector<int> args) {
  auto s = std::make_shared<Stmt>();
  s->kind = Stmt::Kind::Call;
  s->callee = std::move(callee);
  s->args = std::move(args);
  return s;
}

const TensorDecl *Function::find_decl(int id) const {
  for (const auto &d : decls)
    if (d.id == id) return &d;
  return nullptr;
}

TensorDecl *Function::find_decl(int id) {
  for (auto &d : decls)
    if (d.id == id) return &d;
  return nullptr;
}

Function *Module::find_func(const std::string &name) {
  for (auto &f : funcs)
    if (f.name == name) return &f;
  return nullptr;
}

const Function *Module::find_func(const std::string &name) const {
  for (const auto &f : funcs)
    if (f.name == name) return &f;
  return nullptr;
}

const TensorDecl *Module::find_global(int id) const {
  for (const auto &g : globals)
    if (g.id == id) return &g;
  return nullptr;
}

TensorDecl *Module::find_global(int id) {
  for (auto &g : globals)
    if (g.id == id) return &g;
  return nullptr;
}

// ---------------------------------------------------------------- printer

namespace {

struct Printer {
  const Module &m;
  const Function *f = nullptr;
  std::ostringstream os;

  const TensorDecl *decl(int id) const {
    if (f)
      if (const auto *d = f->find_decl(id)) return d;
    return m.find_global(id);
  }

  std::string tname(int id) const {
    const auto *d = decl(id);
    if (d && !d->name.empty()) return d->name;
    return "t" + std::to_string(id);
  }

  std::string vname(int id) const {
    if (f)
      for (const auto &v : f->vars)
        if (v.id == id && !v.name.empty()) return v.name;
    return "v" + std::to_string(id);
  }

  static std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
  }

  void expr(const ExprP &e) {
    switch (e->kind) {
      case Expr::Kind::ConstF: os << num(e->fval); break;
      case Expr::Kind::ConstI: os << e->ival; break;
      case Expr::Kind::Var: os << vname(e->var); break;
      case Expr::Kind::Load:
        os << tname(e->tensor) << "[";
        for (std::size_t i = 0; i < e->idx.size(); ++i) {
          if (i) os << ", ";
          expr(e->idx[i]);
        }
        os << "]";
        break;
      case Expr::Kind::Bin: {
        const char *op = nullptr;
        switch (e->bop) {
          case BinOp::Add: op = "+"; break;
          case BinOp::Sub: op = "-"; break;
          case BinOp::Mul: op = "*"; break;
          case BinOp::Div: op = "/"; break;
          case BinOp::FloorDiv: op = "/"; break;
          case BinOp::Mod: op = "%"; break;
          case BinOp::Lt: op = "<"; break;
          case BinOp::And: op = "&&"; break;
          case BinOp::Max:
          case BinOp::Min: op = nullptr; break;
        }
        if (!op) {
          os << (e->bop == BinOp::Max ? "max(" : "min(");
          expr(e->a);
          os << ", ";
          expr(e->b);
          os << ")";
        } else {
          os << "(";
          expr(e->a);
          os << " " << op << " ";
          expr(e->b);
          os << ")";
        }
        break;
      }
      case Expr::Kind::Un:
        switch (e->uop) {
          case UnOp::Exp: os << "exp("; expr(e->a); os << ")"; break;
          case UnOp::Round: os << "round("; expr(e->a); os << ")"; break;
          case UnOp::Neg: os << "(-"; expr(e->a); os << ")"; break;
          case UnOp::Cast:
            os << "cast<" << stype_name(e->type) << ">(";
            expr(e->a);
            os << ")";
            break;
        }
        break;
      case Expr::Kind::Select:
        os << "select(";
        expr(e->a);
        os << ", ";
        expr(e->b);
        os << ", ";
        expr(e->c);
        os << ")";
        break;
    }
  }

  void indent(int n) {
    for (int i = 0; i < n; ++i) os << "  ";
  }

  void stmt(const StmtP &s, int depth) {
    indent(depth);
    switch (s->kind) {
      case Stmt::Kind::For:
      case Stmt::Kind::ParallelFor:
        os << (s->kind == Stmt::Kind::ParallelFor ? "parallel_for " : "for ")
           << vname(s->var) << " = ";
        expr(s->lo);
        os << " to ";
        expr(s->hi);
        os << " step " << s->step << " {";
        if (s->mergeable) os << "  // mergeable";
        os << "\n";
        for (const auto &b : s->body) stmt(b, depth + 1);
        indent(depth);
        os << "}\n";
        break;
      case Stmt::Kind::Store:
        os << tname(s->tensor) << "[";
        for (std::size_t i = 0; i < s->idx.size(); ++i) {
          if (i) os << ", ";
          expr(s->idx[i]);
        }
        os << "] = ";
        expr(s->value);
        os << "\n";
        break;
      case Stmt::Kind::LetVar:
        os << "let " << vname(s->var) << " = ";
        expr(s->value);
        os << "\n";
        break;
      case Stmt::Kind::If:
        os << "if ";
        expr(s->cond);
        os << " {\n";
        for (const auto &b : s->body) stmt(b, depth + 1);
        indent(depth);
        os << "}\n";
        break;
      case Stmt::Kind::Intrinsic:
        os << s->iname << "(";
        for (std::size_t i = 0; i < s->bufs.size(); ++i) {
          if (i) os << ", ";
          os << "&" << tname(s->bufs[i].tensor) << "[";
          for (std::size_t j = 0; j < s->bufs[i].idx.size(); ++j) {
            if (j) os << ", ";
            expr(s->bufs[i].idx[j]);
          }
          os << "]";
        }
        for (const auto &sc : s->scalars) {
          os << ", ";
          expr(sc);
        }
        os << ")\n";
        break;
      case Stmt::Kind::Call:
        os << "call " << s->callee << "(";
        for (std::size_t i = 0; i < s->args.size(); ++i) {
          if (i) os << ", ";
          os << tname(s->args[i]);
        }
        os << ")\n";
        break;
    }
  }

  static const char *storage_name(Storage st) {
    switch (st) {
      case Storage::Param: return "param";
      case Storage::Global: return "global";
      case Storage::Temp: return "temp";
      case Storage::ThreadLocal: return "threadlocal";
      case Storage::ConstSlot: return "constslot";
    }
    return "?";
  }

  void decl_line(const TensorDecl &d, int depth) {
    indent(depth);
    os << "tensor " << stype_name(d.type) << " "
       << (d.name.empty() ? "t" + std::to_string(d.id) : d.name) << "[";
    for (std::size_t i = 0; i < d.dims.size(); ++i) {
      if (i) os << ", ";
      os << d.dims[i];
    }
    os << "] " << storage_name(d.storage) << "\n";
  }

  void function(const Function &fn) {
    f = &fn;
    os << "func " << fn.name << "(";
    for (std::size_t i = 0; i < fn.params.size(); ++i) {
      if (i) os << ", ";
      os << tname(fn.params[i]);
    }
    os << ") {\n";
    for (const auto &d : fn.decls)
      if (d.storage != Storage::Param) decl_line(d, 1);
    for (const auto &s : fn.body) stmt(s, 1);
    os << "}\n";
    f = nullptr;
  }
};

}  // namespace

std::string print_function(const Function &f, const Module &m) {
  Printer p{m};
  p.function(f);
  return p.os.str();
}

std::string print_module(const Module &m) {
  Printer p{m};
  p.os << "module {\n";
  p.os << "  entry: " << m.entry << "\n";
  if (!m.fold.empty()) p.os << "  fold: " << m.fold << "\n";
  for (const auto &g : m.globals) p.decl_line(g, 1);
  p.os << "}\n";
  std::string head = p.os.str();
  for (const auto &f : m.funcs) head += "\n" + print_function(f, m);
  return head;
}

// ---------------------------------------------------------------- verifier

namespace {

const std::set<std::string> kIntrinsics = {
    "brgemm_f32", "brgemm_u8s8s32", "reorder_pack", "reorder_unpack",
    "anchor_probe"};

struct Verifier {
  const Module &m;
  const Function *f = nullptr;
  std::vector<std::string> errs;
  // Variable scope stack and, inside an outermost ParallelFor, the closure
  // of vars that depend on its loop variable.
  std::vector<int> scope;
  std::set<int> par_dep;
  int outer_par_var = -1;
  int loop_depth = 0;

  void err(const std::string &s) {
    errs.push_back("func " + (f ? f->name : std::string("<module>")) + ": " +
                   s);
  }

  const TensorDecl *decl(int id) const {
    if (f)
      if (const auto *d = f->find_decl(id)) return d;
    return m.find_global(id);
  }

  bool var_in_scope(int v) const {
    return std::find(scope.begin(), scope.end(), v) != scope.end();
  }

  bool depends_on_par(const ExprP &e) const {
    if (!e) return false;
    switch (e->kind) {
      case Expr::Kind::Var:
        return e->var == outer_par_var || par_dep.count(e->var) != 0;
      case Expr::Kind::Load: {
        for (const auto &i : e->idx)
          if (depends_on_par(i)) return true;
        return false;
      }
      default:
        return depends_on_par(e->a) || depends_on_par(e->b) ||
               depends_on_par(e->c);
    }
  }

  void check_index(int tensor, const std::vector<ExprP> &idx,
                   const char *what) {
    const auto *d = decl(tensor);
    if (!d) {
      err(std::string(what) + ": undeclared tensor t" + std::to_string(tensor));
      return;
    }
    if (idx.size() != d->dims.size()) {
      err(std::string(what) + " on " + d->name + ": rank mismatch");
      return;
    }
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i]->kind == Expr::Kind::ConstI &&
          (idx[i]->ival < 0 || idx[i]->ival >= d->dims[i]))
        err(std::string(what) + " on " + d->name + ": constant index " +
            std::to_string(idx[i]->ival) + " out of bounds for dim " +
            std::to_string(i));
  }

  void check_expr(const ExprP &e) {
    if (!e) return;
    switch (e->kind) {
      case Expr::Kind::Var:
        if (!var_in_scope(e->var))
          err("use of out-of-scope variable v" + std::to_string(e->var));
        break;
      case Expr::Kind::Load:
        check_index(e->tensor, e->idx, "load");
        for (const auto &i : e->idx) check_expr(i);
        break;
      default:
        check_expr(e->a);
        check_expr(e->b);
        check_expr(e->c);
        break;
    }
  }

  void check_write_disjoint(int tensor, const std::vector<ExprP> &idx) {
    if (outer_par_var < 0) return;
    const auto *d = decl(tensor);
    if (!d) return;
    if (d->storage == Storage::ThreadLocal) return;
    for (const auto &i : idx)
      if (depends_on_par(i)) return;
    err("overlapping parallel writes to " +
        (d->name.empty() ? "t" + std::to_string(d->id) : d->name));
  }

  void check_stmts(const std::vector<StmtP> &stmts, int par_depth) {
    std::size_t scope_mark = scope.size();
    for (const auto &s : stmts) {
      switch (s->kind) {
        case Stmt::Kind::For:
        case Stmt::Kind::ParallelFor: {
          check_expr(s->lo);
          check_expr(s->hi);
          // Parallelism is confined to the two outermost loop levels; the
          // runtime only distributes the outermost one.
          if (s->kind == Stmt::Kind::ParallelFor && loop_depth >= 2)
            err("parallel_for v" + std::to_string(s->var) +
                " nested below the two outermost loop levels");
          bool starts_par =
              s->kind == Stmt::Kind::ParallelFor && par_depth == 0;
          if (starts_par) outer_par_var = s->var;
          scope.push_back(s->var);
          ++loop_depth;
          check_stmts(s->body,
                      par_depth + (s->kind == Stmt::Kind::ParallelFor ? 1 : 0));
          --loop_depth;
          scope.pop_back();
          if (starts_par) {
            outer_par_var = -1;
            par_dep.clear();
          }
          break;
        }
        case Stmt::Kind::LetVar:
          check_expr(s->value);
          if (outer_par_var >= 0 && depends_on_par(s->value))
            par_dep.insert(s->var);
          scope.push_back(s->var);
          break;
        case Stmt::Kind::Store: {
          check_index(s->tensor, s->idx, "store");
          for (const auto &i : s->idx) check_expr(i);
          check_expr(s->value);
          const auto *d = decl(s->tensor);
          if (d && s->value && s->value->type != d->type)
            err("store dtype mismatch on " + d->name);
          check_write_disjoint(s->tensor, s->idx);
          break;
        }
        case Stmt::Kind::If:
          check_expr(s->cond);
          check_stmts(s->body, par_depth);
          break;
        case Stmt::Kind::Intrinsic: {
          if (kIntrinsics.count(s->iname) == 0)
            err("unknown intrinsic '" + s->iname + "'");
          for (const auto &b : s->bufs) {
            check_index(b.tensor, b.idx, "intrinsic arg");
            for (const auto &i : b.idx) check_expr(i);
          }
          for (const auto &sc : s->scalars) check_expr(sc);
          // The last buffer argument is by convention the written one.
          if (!s->bufs.empty() && s->iname.rfind("brgemm", 0) == 0)
            check_write_disjoint(s->bufs.back().tensor, s->bufs.back().idx);
          if (s->iname.rfind("reorder", 0) == 0 && s->bufs.size() == 2)
            check_write_disjoint(s->bufs[1].tensor, s->bufs[1].idx);
          break;
        }
        case Stmt::Kind::Call: {
          const auto *callee = m.find_func(s->callee);
          if (!callee) {
            err("call to unknown function '" + s->callee + "'");
            break;
          }
          if (callee->params.size() != s->args.size())
            err("call to '" + s->callee + "': arg count mismatch");
          for (int a : s->args)
            if (!m.find_global(a))
              err("call to '" + s->callee + "': arg t" + std::to_string(a) +
                  " is not a module global");
          break;
        }
      }
    }
    scope.resize(scope_mark);
  }
};

}  // namespace

std::vector<std::string> verify_module(const Module &m) {
  Verifier v{m};
  if (!m.entry.empty() && !m.find_func(m.entry))
    v.errs.push_back("module: entry function '" + m.entry + "' missing");
  if (!m.fold.empty() && !m.find_func(m.fold))
    v.errs.push_back("module: fold function '" + m.fold + "' missing");
  for (const auto &f : m.funcs) {
    v.f = &f;
    v.scope.clear();
    v.par_dep.clear();
    v.outer_par_var = -1;
    v.check_stmts(f.body, 0);
  }
  v.f = nullptr;
  return v.errs;
}

}  // namespace mtc::tir
