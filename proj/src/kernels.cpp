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

#include "mtc/kernels.hpp"

#include <cstring>

namespace mtc::kernels {

void brgemm_f32(const float *a, const float *b, float *c, std::int64_t MB,
                std::int64_t NB, std::int64_t KB, std::int64_t BS,
                std::int64_t a_stride, std::int64_t b_stride,
                bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < MB * NB; ++i) c[i] = 0.0f;
  for (std::int64_t bi = 0; bi < BS; ++bi) {
    const float *ab = a + bi * a_stride;
    const float *bb = b + bi * b_stride;
    for (std::int64_t m = 0; m < MB; ++m) {
      const float *ar = ab + m * KB;
      float *cr = c + m * NB;
      for (std::int64_t n = 0; n < NB; ++n) {
        const float *br = bb + n * KB;
        // 4-way split accumulation in a fixed order; unit-stride over k on
        // both operands so the compiler can vectorize.
        float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
        std::int64_t k = 0;
        for (; k + 4 <= KB; k += 4) {
          s0 += ar[k] * br[k];
          s1 += ar[k + 1] * br[k + 1];
          s2 += ar[k + 2] * br[k + 2];
          s3 += ar[k + 3] * br[k + 3];
        }
        for (; k < KB; ++k) s0 += ar[k] * br[k];
        cr[n] += (s0 + s1) + (s2 + s3);
      }
    }
  }
}

void brgemm_u8s8s32(const std::uint8_t *a, const std::int8_t *b,
                    std::int32_t *c, std::int64_t MB, std::int64_t NB,
                    std::int64_t KB, std::int64_t BS, std::int64_t a_stride,
                    std::int64_t b_stride, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < MB * NB; ++i) c[i] = 0;
  for (std::int64_t bi = 0; bi < BS; ++bi) {
    const std::uint8_t *ab = a + bi * a_stride;
    const std::int8_t *bb = b + bi * b_stride;
    for (std::int64_t m = 0; m < MB; ++m) {
      const std::uint8_t *ar = ab + m * KB;
      std::int32_t *cr = c + m * NB;
      for (std::int64_t n = 0; n < NB; ++n) {
        const std::int8_t *br = bb + n * KB;
        std::int32_t s = 0;
        for (std::int64_t k = 0; k < KB; ++k)
          s += static_cast<std::int32_t>(ar[k]) *
               static_cast<std::int32_t>(br[k]);
        cr[n] += s;
      }
    }
  }
}

namespace {

template <typename T>
void pack_t(const T *src, T *dst, std::int64_t rows, std::int64_t cols,
            std::int64_t valid_r, std::int64_t valid_c,
            std::int64_t src_stride, bool transpose) {
  for (std::int64_t i = 0; i < rows; ++i) {
    T *d = dst + i * cols;
    if (i >= valid_r) {
      std::memset(d, 0, sizeof(T) * cols);
      continue;
    }
    if (!transpose) {
      const T *s = src + i * src_stride;
      std::int64_t vc = valid_c < cols ? valid_c : cols;
      std::memcpy(d, s, sizeof(T) * vc);
      if (vc < cols) std::memset(d + vc, 0, sizeof(T) * (cols - vc));
    } else {
      for (std::int64_t j = 0; j < cols; ++j)
        d[j] = j < valid_c ? src[j * src_stride + i] : T(0);
    }
  }
}

template <typename T>
void unpack_t(const T *src, T *dst, std::int64_t rows, std::int64_t cols,
              std::int64_t valid_r, std::int64_t valid_c,
              std::int64_t dst_stride) {
  for (std::int64_t i = 0; i < valid_r; ++i)
    std::memcpy(dst + i * dst_stride, src + i * cols,
                sizeof(T) * (valid_c < cols ? valid_c : cols));
}

}  // namespace

void reorder_pack(const void *src, void *dst, std::size_t esize,
                  std::int64_t rows, std::int64_t cols, std::int64_t valid_r,
                  std::int64_t valid_c, std::int64_t src_stride,
                  bool transpose) {
  if (esize == 4)
    pack_t(static_cast<const std::uint32_t *>(src),
           static_cast<std::uint32_t *>(dst), rows, cols, valid_r, valid_c,
           src_stride, transpose);
  else
    pack_t(static_cast<const std::uint8_t *>(src),
           static_cast<std::uint8_t *>(dst), rows, cols, valid_r, valid_c,
           src_stride, transpose);
}

void reorder_unpack(const void *src, void *dst, std::size_t esize,
                    std::int64_t rows, std::int64_t cols, std::int64_t valid_r,
                    std::int64_t valid_c, std::int64_t dst_stride) {
  if (esize == 4)
    unpack_t(static_cast<const std::uint32_t *>(src),
             static_cast<std::uint32_t *>(dst), rows, cols, valid_r, valid_c,
             dst_stride);
  else
    unpack_t(static_cast<const std::uint8_t *>(src),
             static_cast<std::uint8_t *>(dst), rows, cols, valid_r, valid_c,
             dst_stride);
}

}  // namespace mtc::kernels
