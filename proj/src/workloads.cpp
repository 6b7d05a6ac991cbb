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

#include "mtc/workloads.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mtc::workloads {

namespace {

std::vector<float> uniform_f32(std::mt19937_64 &rng, std::int64_t n,
                               float scale) {
  std::uniform_real_distribution<float> d(0.f, 1.f);
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto &x : v) x = d(rng) * scale;
  return v;
}

std::vector<std::int64_t> uniform_s8(std::mt19937_64 &rng, std::int64_t n) {
  std::uniform_int_distribution<int> d(-127, 127);
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  for (auto &x : v) x = d(rng);
  return v;
}

}  // namespace

std::vector<std::byte> random_bytes(DataType dt, std::int64_t elems,
                                    std::mt19937_64 &rng) {
  std::vector<std::byte> out(static_cast<std::size_t>(elems) * dtype_size(dt));
  switch (dt) {
    case DataType::F32: {
      std::uniform_real_distribution<float> d(0.f, 1.f);
      auto *p = reinterpret_cast<float *>(out.data());
      for (std::int64_t i = 0; i < elems; ++i) p[i] = d(rng);
      break;
    }
    case DataType::U8: {
      std::uniform_int_distribution<int> d(0, 255);
      auto *p = reinterpret_cast<std::uint8_t *>(out.data());
      for (std::int64_t i = 0; i < elems; ++i)
        p[i] = static_cast<std::uint8_t>(d(rng));
      break;
    }
    case DataType::S8: {
      std::uniform_int_distribution<int> d(-127, 127);
      auto *p = reinterpret_cast<std::int8_t *>(out.data());
      for (std::int64_t i = 0; i < elems; ++i)
        p[i] = static_cast<std::int8_t>(d(rng));
      break;
    }
    case DataType::S32: {
      std::uniform_int_distribution<std::int32_t> d(-1000, 1000);
      auto *p = reinterpret_cast<std::int32_t *>(out.data());
      for (std::int64_t i = 0; i < elems; ++i) p[i] = d(rng);
      break;
    }
    default:
      throw std::runtime_error("random_bytes: unsupported dtype");
  }
  return out;
}

Graph make_mlp_f32(std::int64_t batch, const std::vector<std::int64_t> &widths,
                   std::uint64_t seed) {
  if (widths.size() < 2) throw std::runtime_error("mlp needs >= 2 widths");
  std::mt19937_64 rng(seed);
  Graph g;
  int x = g.add_tensor(DataType::F32, {batch, widths[0]});
  g.inputs.push_back(x);
  for (std::size_t l = 1; l < widths.size(); ++l) {
    std::int64_t k = widths[l - 1], n = widths[l];
    int w = g.add_tensor(DataType::F32, {k, n}, TensorProperty::Constant);
    g.bind_f32(w, uniform_f32(rng, k * n, 1.f / static_cast<float>(k)));
    int b = g.add_tensor(DataType::F32, {n}, TensorProperty::Constant);
    g.bind_f32(b, uniform_f32(rng, n, 1.f));
    int mm = g.add_tensor(DataType::F32, {batch, n});
    g.add_op(OpKind::MatMul, {x, w}, {mm});
    int ba = g.add_tensor(DataType::F32, {batch, n});
    g.add_op(OpKind::BiasAdd, {mm, b}, {ba});
    int rl = g.add_tensor(DataType::F32, {batch, n});
    g.add_op(OpKind::ReLU, {ba}, {rl});
    x = rl;
  }
  g.outputs.push_back(x);
  infer_shapes(g);
  return g;
}

Graph make_mlp_int8(std::int64_t batch,
                    const std::vector<std::int64_t> &widths,
                    std::uint64_t seed) {
  if (widths.size() < 2) throw std::runtime_error("mlp needs >= 2 widths");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sd(0.01, 0.03);
  Graph g;
  int x = g.add_tensor(DataType::U8, {batch, widths[0]});
  g.inputs.push_back(x);
  const double a_s = 1.0 / 16.0;
  const std::int64_t a_z = 10;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    std::int64_t k = widths[l - 1], n = widths[l];
    int dq_a = g.add_tensor(DataType::F32, {batch, k});
    g.add_op(OpKind::Dequantize, {x}, {dq_a},
             {{"scale", a_s}, {"zp", a_z}});
    int wq = g.add_tensor(DataType::S8, {k, n}, TensorProperty::Constant);
    g.bind_i(wq, uniform_s8(rng, k * n));
    std::vector<double> b_s(static_cast<std::size_t>(n));
    for (auto &s : b_s) s = sd(rng);
    int dq_w = g.add_tensor(DataType::F32, {k, n});
    g.add_op(OpKind::Dequantize, {wq}, {dq_w},
             {{"scale", b_s}, {"zp", std::int64_t{0}}});
    int mm = g.add_tensor(DataType::F32, {batch, n});
    g.add_op(OpKind::MatMul, {dq_a, dq_w}, {mm});
    // Requantization scale keeps typical magnitudes inside u8; zero point 0
    // doubles as a fused ReLU since negatives clamp away.
    double c_s = static_cast<double>(k) * 0.04;
    int q = g.add_tensor(DataType::U8, {batch, n});
    g.add_op(OpKind::Quantize, {mm}, {q},
             {{"to", std::string("u8")}, {"scale", c_s},
              {"zp", std::int64_t{0}}});
    x = q;
  }
  g.outputs.push_back(x);
  infer_shapes(g);
  return g;
}

namespace {

// Shared attention skeleton; `quant` wraps both matmuls in q/dq pairs.
Graph make_mha(std::int64_t batch, std::int64_t seq, std::int64_t hidden,
               std::int64_t heads, bool quant, std::uint64_t seed) {
  if (hidden % heads != 0) throw std::runtime_error("hidden % heads != 0");
  std::int64_t d = hidden / heads;
  (void)seed;
  Graph g;
  DataType in_dt = quant ? DataType::U8 : DataType::F32;
  int q_in = g.add_tensor(in_dt, {batch, heads, seq, d});
  int k_in = g.add_tensor(in_dt, {batch, heads, seq, d});
  int v_in = g.add_tensor(in_dt, {batch, heads, seq, d});
  int mask = g.add_tensor(DataType::F32, {batch, 1, 1, seq});
  g.inputs = {q_in, k_in, v_in, mask};

  const double act_s = 1.0 / 64.0;
  auto dequant = [&](int t) {
    if (!quant) return t;
    int f = g.add_tensor(DataType::F32, g.t(t).shape);
    g.add_op(OpKind::Dequantize, {t}, {f},
             {{"scale", act_s}, {"zp", std::int64_t{8}}});
    return f;
  };

  int qf = dequant(q_in), kf = dequant(k_in), vf = dequant(v_in);
  int kt = g.add_tensor(DataType::F32, {batch, heads, d, seq});
  g.add_op(OpKind::Transpose, {kf}, {kt},
           {{"perm", std::vector<std::int64_t>{0, 1, 3, 2}}});
  int s0 = g.add_tensor(DataType::F32, {batch, heads, seq, seq});
  g.add_op(OpKind::MatMul, {qf, kt}, {s0});

  int scale = g.add_tensor(DataType::F32, {1}, TensorProperty::Constant);
  g.bind_f32(scale, {static_cast<float>(std::sqrt(double(d)))});
  int s1 = g.add_tensor(DataType::F32, {batch, heads, seq, seq});
  g.add_op(OpKind::Div, {s0, scale}, {s1});
  int s2 = g.add_tensor(DataType::F32, {batch, heads, seq, seq});
  g.add_op(OpKind::Add, {s1, mask}, {s2});
  int sm = g.add_tensor(DataType::F32, {batch, heads, seq, seq});
  g.add_op(OpKind::Softmax, {s2}, {sm}, {{"axis", std::int64_t{-1}}});

  int attn = sm;
  if (quant) {
    int qsm = g.add_tensor(DataType::U8, {batch, heads, seq, seq});
    g.add_op(OpKind::Quantize, {sm}, {qsm},
             {{"to", std::string("u8")}, {"scale", 1.0 / 255.0},
              {"zp", std::int64_t{0}}});
    attn = dequant(qsm);
  }
  int out = g.add_tensor(DataType::F32, {batch, heads, seq, d});
  g.add_op(OpKind::MatMul, {attn, vf}, {out});
  int final_t = out;
  if (quant) {
    int qo = g.add_tensor(DataType::U8, {batch, heads, seq, d});
    g.add_op(OpKind::Quantize, {out}, {qo},
             {{"to", std::string("u8")}, {"scale", act_s},
              {"zp", std::int64_t{0}}});
    final_t = qo;
  }
  g.outputs.push_back(final_t);
  infer_shapes(g);
  return g;
}

}  // namespace

Graph make_mha_f32(std::int64_t batch, std::int64_t seq, std::int64_t hidden,
                   std::int64_t heads, std::uint64_t seed) {
  return make_mha(batch, seq, hidden, heads, false, seed);
}

Graph make_mha_int8(std::int64_t batch, std::int64_t seq, std::int64_t hidden,
                    std::int64_t heads, std::uint64_t seed) {
  return make_mha(batch, seq, hidden, heads, true, seed);
}

std::vector<std::string> workload_names() {
  return {"mlp1", "mlp2", "mha1", "mha2", "mha3", "mha4"};
}

Graph make_workload(const std::string &name, DataType dtype,
                    std::int64_t batch, std::int64_t scale,
                    std::uint64_t seed) {
  if (scale < 1) throw std::runtime_error("scale must be >= 1");
  bool i8 = dtype == DataType::U8 || dtype == DataType::S8;
  if (!i8 && dtype != DataType::F32)
    throw std::runtime_error("workload dtype must be f32 or int8");
  auto div = [&](std::int64_t v) {
    std::int64_t s = v / scale;
    return s < 1 ? 1 : s;
  };
  if (name == "mlp1" || name == "mlp2") {
    std::vector<std::int64_t> w =
        name == "mlp1" ? std::vector<std::int64_t>{13, 512, 256, 128}
                       : std::vector<std::int64_t>{479, 1024, 1024, 512, 256,
                                                   1};
    std::int64_t b = div(batch);
    return i8 ? make_mlp_int8(b, w, seed) : make_mlp_f32(b, w, seed);
  }
  std::int64_t seq = 0, hidden = 0, heads = 0;
  if (name == "mha1") seq = 128, hidden = 768, heads = 8;
  else if (name == "mha2") seq = 128, hidden = 768, heads = 12;
  else if (name == "mha3") seq = 384, hidden = 1024, heads = 8;
  else if (name == "mha4") seq = 512, hidden = 1024, heads = 16;
  else throw std::runtime_error("unknown workload '" + name + "'");
  seq = div(seq);
  return i8 ? make_mha_int8(batch, seq, hidden, heads, seed)
            : make_mha_f32(batch, seq, hidden, heads, seed);
}

}  // namespace mtc::workloads
