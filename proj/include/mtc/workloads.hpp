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
#include <random>
#include <string>
#include <vector>

#include "mtc/graph.hpp"

namespace mtc::workloads {

// Chained MatMul+BiasAdd+ReLU layers; widths[0] is the input feature size.
Graph make_mlp_f32(std::int64_t batch, const std::vector<std::int64_t> &widths,
                   std::uint64_t seed);

// Per-layer dequantize -> matmul -> quantize with u8 activations, per-channel
// s8 constant weights and u8 requantized outputs.
Graph make_mlp_int8(std::int64_t batch,
                    const std::vector<std::int64_t> &widths,
                    std::uint64_t seed);

// Scaled dot-product attention: Q.K^T / sqrt(d) + mask -> softmax -> .V with
// per-head inputs [B, heads, seq, d] and a broadcastable [B,1,1,seq] mask.
Graph make_mha_f32(std::int64_t batch, std::int64_t seq, std::int64_t hidden,
                   std::int64_t heads, std::uint64_t seed);

// Same shape with quantize/dequantize around both batch matmuls; the softmax
// stays in f32.
Graph make_mha_int8(std::int64_t batch, std::int64_t seq, std::int64_t hidden,
                    std::int64_t heads, std::uint64_t seed);

// Benchmark-table rows by name (mlp1, mlp2, mha1..mha4). `scale` divides the
// MLP batch and the MHA sequence length.
std::vector<std::string> workload_names();
Graph make_workload(const std::string &name, DataType dtype,
                    std::int64_t batch, std::int64_t scale, std::uint64_t seed);

// Uniform random input data: f32 in [0,1) (positive keeps f32-vs-f64
// comparisons free of cancellation), u8 in [0,255], s8 in [-127,127].
std::vector<std::byte> random_bytes(DataType dt, std::int64_t elems,
                                    std::mt19937_64 &rng);

}  // namespace mtc::workloads
