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

#include "mtc/compile.hpp"

#include <sstream>
#include <stdexcept>

namespace mtc {

namespace {

std::string join_errors(const char *what,
                        const std::vector<std::string> &errs) {
  std::ostringstream os;
  os << what << ":";
  for (const auto &e : errs) os << "\n  " << e;
  return os.str();
}

std::vector<FusedOp> no_fuse_regions(const Graph &g) {
  std::vector<FusedOp> out;
  for (int oid : topo_order(g)) {
    const Op *op = find_op(g, oid);
    FusedOp f;
    if (op->kind == OpKind::MatMul)
      f.tunable = oid;
    else
      f.post_ops.emplace_back(oid, -1);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

CompiledModule compile(const Graph &g_in, const CompileOptions &opt) {
  CompiledModule cm;
  cm.options = opt;
  PassPipelineReport &rep = cm.report;

  Graph g = g_in;
  infer_shapes(g);
  if (auto errs = validate_graph(g); !errs.empty())
    throw std::runtime_error(join_errors("invalid graph", errs));

  cm.stage_graphs.emplace_back("input", g);
  g = decompose_complex(g, &rep);
  cleanup_graph(g, &rep);
  cm.stage_graphs.emplace_back("decompose", g);
  g = low_precision_convert(g, &rep);
  cleanup_graph(g, &rep);
  cm.stage_graphs.emplace_back("low_precision", g);
  g = propagate_layouts(g, opt.machine, cm.params, &rep);
  cleanup_graph(g, &rep);
  cm.stage_graphs.emplace_back("layout", g);
  auto [main_g, cplan] = preprocess_constants(g, &rep);
  g = std::move(main_g);
  cm.cache_plan = std::move(cplan);
  cm.stage_graphs.emplace_back("const_preprocess", g);

  cm.fused = opt.fuse ? fine_grain_fuse(g, cm.params, opt.machine, &rep)
                      : no_fuse_regions(g);
  if (opt.coarse) mark_coarse_grain(cm.fused, g, cm.params);

  LowerOptions lo;
  lo.instrument_anchors = opt.instrument_anchors;
  Lowered lowered = lower_module(g, cm.fused, cm.params, cm.cache_plan, lo);
  cm.module = std::move(lowered.module);
  cm.tensor_global = std::move(lowered.tensor_global);
  for (auto &n : lowered.notes) rep.notes.push_back(n);

  cm.stage_modules.emplace_back("lowered", cm.module);
  if (opt.shrink) tir::shrink_all(cm.module);
  cm.stage_modules.emplace_back("shrunk", cm.module);
  if (opt.coarse) {
    std::vector<std::string> merge_report;
    cm.module = tir::merge_parallel_loops(cm.module, &merge_report);
    for (auto &n : merge_report) rep.notes.push_back(n);
  }
  cm.stage_modules.emplace_back("final", cm.module);
  if (auto errs = tir::verify_module(cm.module); !errs.empty())
    throw std::runtime_error(join_errors("tensor IR verification failed",
                                         errs));
  cm.plan = tir::plan_buffers(cm.module, opt.buffer_reuse);
  cm.graph = std::move(g);
  return cm;
}

std::unique_ptr<rt::Executor> CompiledModule::make_executor(
    int num_workers) const {
  auto ex = std::make_unique<rt::Executor>(module, plan, num_workers);
  for (const auto &[tid, bytes] : graph.const_data) {
    auto it = tensor_global.find(tid);
    if (it == tensor_global.end()) continue;
    ex->bind(it->second,
             const_cast<void *>(static_cast<const void *>(bytes.data())));
  }
  return ex;
}

}  // namespace mtc
