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

#include <json.hpp>

#include "mtc/graph.hpp"

namespace mtc {

// JSON graph format:
//   { "tensors": [{id, dtype, shape, property, data?}],
//     "ops": [{id, kind, attrs, inputs, outputs}],
//     "inputs": [...], "outputs": [...], "fast_softmax": bool }
// Layout never appears in input files (plain at the boundary); serialization
// of post-pass graphs adds a "layout" string for inspection.
nlohmann::json graph_to_json(const Graph &g);
Graph graph_from_json(const nlohmann::json &j);

}  // namespace mtc
