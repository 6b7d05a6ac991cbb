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

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "mtc/tir.hpp"

namespace mtc::rt {

struct Profile {
  std::vector<std::pair<std::string, double>> call_ms;  // entry calls, in order
  double fold_ms = 0.0;
  double total_ms = 0.0;
  std::int64_t arena_bytes = 0;
};

// Interprets a verified Tensor IR module. Only the outermost ParallelFor of a
// statement tree is distributed across workers (contiguous chunks); nested
// parallel loops run sequentially inside their chunk.
class Executor {
 public:
  Executor(const tir::Module &m, const tir::BufferPlan &plan,
           int num_workers = 1);

  // Binds external storage to a Global decl. Unbound globals (and all
  // ConstSlots/arena temps) are owned, zero-initialized allocations.
  void bind(int global_id, void *data);
  void *global_data(int global_id);

  // Runs the fold function on the first call only, then the entry function.
  void run(Profile *prof = nullptr);

  int fold_executions() const { return fold_runs_; }
  int num_workers() const { return workers_; }
  void note_probe(int op_id, int anchor);
  // (op id, anchor id) -> anchor_probe hits, accumulated over runs.
  const std::map<std::pair<int, int>, std::int64_t> &anchor_counts() const {
    return anchor_counts_;
  }

 private:
  const tir::Module &m_;
  tir::BufferPlan plan_;
  int workers_;
  std::vector<const tir::TensorDecl *> decls_;  // decl id -> decl
  std::vector<std::byte *> global_buf_;         // decl id -> storage (globals)
  std::vector<std::vector<std::byte>> owned_;
  std::vector<std::byte> arena_;
  bool folded_ = false;
  int fold_runs_ = 0;
  std::map<std::pair<int, int>, std::int64_t> anchor_counts_;
  std::mutex probe_mu_;

  void run_function(const tir::Function &f,
                    const std::vector<std::byte *> &args, bool parallel);
};

}  // namespace mtc::rt
