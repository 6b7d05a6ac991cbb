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
#include <memory>
#include <string>
#include <vector>

#include "mtc/graph.hpp"

namespace mtc::tir {

enum class SType { F32, S32, S8, U8, I64 };

SType stype_of(DataType dt);
std::size_t ssize(SType t);
const char *stype_name(SType t);
bool is_float(SType t);

enum class BinOp { Add, Sub, Mul, Div, Max, Min, FloorDiv, Mod, Lt, And };
enum class UnOp { Exp, Round, Neg, Cast };

struct Expr;
using ExprP = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { ConstF, ConstI, Var, Load, Bin, Un, Select };
  Kind kind = Kind::ConstI;
  SType type = SType::I64;
  double fval = 0.0;
  std::int64_t ival = 0;
  int var = -1;
  int tensor = -1;
  std::vector<ExprP> idx;  // Load
  BinOp bop = BinOp::Add;
  UnOp uop = UnOp::Neg;
  ExprP a, b, c;  // operands; Select uses all three (cond, then, else)
};

ExprP cf(double v);
ExprP ci(std::int64_t v);
ExprP cnum(SType t, double v);  // typed numeric literal
ExprP vref(int var, SType t = SType::I64);
ExprP load(int tensor, SType t, std::vector<ExprP> idx);
ExprP bin(BinOp op, ExprP a, ExprP b);
ExprP un(UnOp op, ExprP a, SType result);
ExprP select(ExprP cond, ExprP then_v, ExprP else_v);

inline ExprP add(ExprP a, ExprP b) { return bin(BinOp::Add, a, b); }
inline ExprP sub(ExprP a, ExprP b) { return bin(BinOp::Sub, a, b); }
inline ExprP mul(ExprP a, ExprP b) { return bin(BinOp::Mul, a, b); }
inline ExprP fdiv(ExprP a, ExprP b) { return bin(BinOp::Div, a, b); }
inline ExprP imin(ExprP a, ExprP b) { return bin(BinOp::Min, a, b); }
inline ExprP imax(ExprP a, ExprP b) { return bin(BinOp::Max, a, b); }
inline ExprP floordiv(ExprP a, ExprP b) { return bin(BinOp::FloorDiv, a, b); }
inline ExprP mod(ExprP a, ExprP b) { return bin(BinOp::Mod, a, b); }
inline ExprP lt(ExprP a, ExprP b) { return bin(BinOp::Lt, a, b); }
inline ExprP land(ExprP a, ExprP b) { return bin(BinOp::And, a, b); }

struct Stmt;
using StmtP = std::shared_ptr<Stmt>;

struct BufArg {
  int tensor = -1;
  std::vector<ExprP> idx;
};

struct Stmt {
  enum class Kind { For, ParallelFor, Store, LetVar, Intrinsic, If, Call };
  Kind kind = Kind::For;
  // For / ParallelFor
  int var = -1;
  ExprP lo, hi;
  std::int64_t step = 1;
  bool mergeable = false;
  std::vector<StmtP> body;  // also If-then body
  // Store / LetVar
  int tensor = -1;
  std::vector<ExprP> idx;
  ExprP value;
  // Intrinsic
  std::string iname;
  std::vector<BufArg> bufs;
  std::vector<ExprP> scalars;
  // If
  ExprP cond;
  // Call
  std::string callee;
  std::vector<int> args;  // module-global tensor ids bound to callee params
};

StmtP make_for(int var, ExprP lo, ExprP hi, std::int64_t step,
               std::vector<StmtP> body, bool parallel = false,
               bool mergeable = false);
StmtP make_store(int tensor, std::vector<ExprP> idx, ExprP value);
StmtP make_let(int var, ExprP value);
StmtP make_if(ExprP cond, std::vector<StmtP> body);
StmtP make_intrinsic(std::string name, std::vector<BufArg> bufs,
                     std::vector<ExprP> scalars);
StmtP make_call(std::string callee, std::vector<int> args);

enum class Storage {
  Param,       // bound to a caller tensor at call time
  Global,      // externally bound (graph inputs/outputs, raw constants)
  Temp,        // compiler temporary (module level: arena; function level: scratch)
  ThreadLocal, // per-worker scratch
  ConstSlot,   // constant cache, filled once by the fold function
};

struct TensorDecl {
  int id = -1;
  std::string name;
  SType type = SType::F32;
  std::vector<std::int64_t> dims;
  Storage storage = Storage::Temp;

  std::int64_t elems() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  std::int64_t bytes() const {
    return elems() * static_cast<std::int64_t>(ssize(type));
  }
};

struct VarDecl {
  int id = -1;
  std::string name;
  SType type = SType::I64;
};

struct Function {
  std::string name;
  std::vector<int> params;  // decl ids, in call-arg order
  std::vector<TensorDecl> decls;
  std::vector<VarDecl> vars;
  std::vector<StmtP> body;

  const TensorDecl *find_decl(int id) const;
  TensorDecl *find_decl(int id);
};

struct Module {
  std::vector<TensorDecl> globals;
  std::vector<Function> funcs;
  std::string entry;
  std::string fold;  // empty when no constant preprocessing
  int next_tensor_id = 0;
  int next_var_id = 0;

  Function *find_func(const std::string &name);
  const Function *find_func(const std::string &name) const;
  const TensorDecl *find_global(int id) const;
  TensorDecl *find_global(int id);
  int fresh_tensor() { return next_tensor_id++; }
  int fresh_var() { return next_var_id++; }
};

// Deterministic pretty-printer; one statement per line, indentation = nesting.
std::string print_function(const Function &f, const Module &m);
std::string print_module(const Module &m);

// Structural verification: declarations/scoping, dtype consistency, constant
// index bounds, intrinsic names, and (affine, provable cases only) disjoint
// writes across outermost ParallelFor iterations.
std::vector<std::string> verify_module(const Module &m);

/// Arena layout for module-level temporaries after liveness-based reuse.
struct Placement {
  std::int64_t offset = 0;
  std::int64_t size = 0;
  int first_def = -1;  // entry statement index
  int last_use = -1;
};

struct BufferPlan {
  std::int64_t arena_size = 0;
  std::map<int, Placement> placements;            // temp tensor id -> slot
  std::map<std::string, std::int64_t> scratch_bytes;  // per-function locals
  std::int64_t peak_live_bytes = 0;
  std::int64_t total_temp_bytes = 0;
};

// Linear scan over entry call order; MRU free-list reuse (first sufficiently
// large entry in most-recently-freed order), 64-byte aligned offsets. With
// reuse disabled every temp gets its own extent.
BufferPlan plan_buffers(const Module &m, bool reuse = true);

// Inlines consecutive entry calls whose outermost ParallelFors are flagged
// mergeable and range-identical into one function with a single outer loop.
// Range mismatches downgrade to no-merge with a report line.
Module merge_parallel_loops(const Module &m,
                            std::vector<std::string> *report = nullptr);

// Tensor size optimization: shrinks each function-local temporary to the
// extents actually live at its def/use common loop level; single-element
// leftovers indexed only by inner loops become scalar variables.
void shrink_temporaries(Function &f, const Module &m);
void shrink_all(Module &m);

}  // namespace mtc::tir
