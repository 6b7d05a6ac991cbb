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

namespace mtc::kernels {

// Batch-reduce GEMM, f32 path. Blocks are contiguous: each A block is
// [MB, KB] row-major, each B block is [NB, KB] with k fastest (the B' layout
// interior), C is [MB, NB]. Consecutive blocks sit a_stride/b_stride elements
// apart. Fixed summation order (batch outer, k inner) keeps results bitwise
// deterministic.
void brgemm_f32(const float *a, const float *b, float *c, std::int64_t MB,
                std::int64_t NB, std::int64_t KB, std::int64_t BS,
                std::int64_t a_stride, std::int64_t b_stride, bool accumulate);

// u8 activations x s8 weights -> exact s32 accumulation.
void brgemm_u8s8s32(const std::uint8_t *a, const std::int8_t *b,
                    std::int32_t *c, std::int64_t MB, std::int64_t NB,
                    std::int64_t KB, std::int64_t BS, std::int64_t a_stride,
                    std::int64_t b_stride, bool accumulate);

// Packs one plain-layout block into a contiguous [rows, cols] tile, zero
// padding past the valid region. With `transpose`, dst[i][j] = src[j][i]
// (src strides swap roles). src_stride is in elements.
void reorder_pack(const void *src, void *dst, std::size_t esize,
                  std::int64_t rows, std::int64_t cols, std::int64_t valid_r,
                  std::int64_t valid_c, std::int64_t src_stride,
                  bool transpose);

// Inverse: copies the valid region of a contiguous [rows, cols] tile back to
// a plain buffer with dst_stride elements per row.
void reorder_unpack(const void *src, void *dst, std::size_t esize,
                    std::int64_t rows, std::int64_t cols, std::int64_t valid_r,
                    std::int64_t valid_c, std::int64_t dst_stride);

}  // namespace mtc::kernels
