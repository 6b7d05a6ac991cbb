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

#include "mtc/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace mtc::oracle {

DenseValue DenseValue::zeros(DataType dt, std::vector<std::int64_t> shape) {
  DenseValue v;
  v.dtype = dt;
  v.shape = std::move(shape);
  if (dt == DataType::F32)
    v.f.assign(v.elems(), 0.0);
  else
    v.i.assign(v.elems(), 0);
  return v;
}

DenseValue from_bytes(DataType dt, const std::vector<std::int64_t> &shape,
                      const std::byte *data) {
  DenseValue v = DenseValue::zeros(dt, shape);
  std::int64_t n = v.elems();
  for (std::int64_t k = 0; k < n; ++k) {
    switch (dt) {
      case DataType::F32: {
        float x;
        std::memcpy(&x, data + k * 4, 4);
        v.f[k] = x;
        break;
      }
      case DataType::S32: {
        std::int32_t x;
        std::memcpy(&x, data + k * 4, 4);
        v.i[k] = x;
        break;
      }
      case DataType::S8: {
        std::int8_t x;
        std::memcpy(&x, data + k, 1);
        v.i[k] = x;
        break;
      }
      case DataType::U8: {
        std::uint8_t x;
        std::memcpy(&x, data + k, 1);
        v.i[k] = x;
        break;
      }
    }
  }
  return v;
}

std::vector<std::byte> to_bytes(const DenseValue &v) {
  std::vector<std::byte> buf(v.elems() * dtype_size(v.dtype));
  for (std::int64_t k = 0; k < v.elems(); ++k) {
    switch (v.dtype) {
      case DataType::F32: {
        float x = static_cast<float>(v.f[k]);
        std::memcpy(buf.data() + k * 4, &x, 4);
        break;
      }
      case DataType::S32: {
        std::int32_t x = static_cast<std::int32_t>(v.i[k]);
        std::memcpy(buf.data() + k * 4, &x, 4);
        break;
      }
      case DataType::S8: {
        std::int8_t x = static_cast<std::int8_t>(v.i[k]);
        std::memcpy(buf.data() + k, &x, 1);
        break;
      }
      case DataType::U8: {
        std::uint8_t x = static_cast<std::uint8_t>(v.i[k]);
        std::memcpy(buf.data() + k, &x, 1);
        break;
      }
    }
  }
  return buf;
}

std::int64_t round_half_even(double x) {
  double r = std::nearbyint(x);  // FE_TONEAREST is half-to-even
  return static_cast<std::int64_t>(r);
}

namespace {

std::vector<std::int64_t> row_strides(const std::vector<std::int64_t> &shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d)
    s[d] = s[d + 1] * shape[d + 1];
  return s;
}

// Strides of `in` aligned (right-justified) against `out_shape`, with 0 for
// broadcast dims.
std::vector<std::int64_t> bcast_strides(const std::vector<std::int64_t> &in,
                                        const std::vector<std::int64_t> &out) {
  auto is = row_strides(in);
  std::vector<std::int64_t> r(out.size(), 0);
  std::size_t off = out.size() - in.size();
  for (std::size_t d = 0; d < in.size(); ++d)
    r[off + d] = in[d] == 1 ? 0 : is[d];
  return r;
}

double get_f(const DenseValue &v, std::int64_t k) {
  return v.dtype == DataType::F32 ? v.f[k] : static_cast<double>(v.i[k]);
}

template <typename Fn>
DenseValue binary_map(const DenseValue &a, const DenseValue &b,
                      const std::vector<std::int64_t> &out_shape, DataType out_dt,
                      Fn fn) {
  DenseValue r = DenseValue::zeros(out_dt, out_shape);
  auto sa = bcast_strides(a.shape, out_shape);
  auto sb = bcast_strides(b.shape, out_shape);
  std::vector<std::int64_t> idx(out_shape.size(), 0);
  std::int64_t n = r.elems();
  for (std::int64_t k = 0; k < n; ++k) {
    std::int64_t ka = 0, kb = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      ka += idx[d] * sa[d];
      kb += idx[d] * sb[d];
    }
    if (out_dt == DataType::F32)
      r.f[k] = fn(get_f(a, ka), get_f(b, kb));
    else
      r.i[k] = static_cast<std::int64_t>(fn(static_cast<double>(a.i[ka]),
                                            static_cast<double>(b.i[kb])));
    for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return r;
}

// Exact integer variant so s32 paths never round-trip through double.
template <typename Fn>
DenseValue binary_map_int(const DenseValue &a, const DenseValue &b,
                          const std::vector<std::int64_t> &out_shape,
                          DataType out_dt, Fn fn) {
  DenseValue r = DenseValue::zeros(out_dt, out_shape);
  auto sa = bcast_strides(a.shape, out_shape);
  auto sb = bcast_strides(b.shape, out_shape);
  std::vector<std::int64_t> idx(out_shape.size(), 0);
  for (std::int64_t k = 0; k < r.elems(); ++k) {
    std::int64_t ka = 0, kb = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      ka += idx[d] * sa[d];
      kb += idx[d] * sb[d];
    }
    r.i[k] = fn(a.i[ka], b.i[kb]);
    for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return r;
}

std::vector<std::int64_t> out_shape_of(const Graph &g, const Op &op) {
  return g.t(op.outputs[0]).shape;
}

DenseValue matmul(const DenseValue &a, const DenseValue &b, DataType out_dt,
                  const std::vector<std::int64_t> &out_shape) {
  std::int64_t M = a.shape[a.shape.size() - 2];
  std::int64_t K = a.shape[a.shape.size() - 1];
  std::int64_t N = b.shape[b.shape.size() - 1];
  std::int64_t batch = 1;
  for (std::size_t d = 0; d + 2 < a.shape.size(); ++d) batch *= a.shape[d];
  std::int64_t bbatch = 1;
  for (std::size_t d = 0; d + 2 < b.shape.size(); ++d) bbatch *= b.shape[d];
  DenseValue r = DenseValue::zeros(out_dt, out_shape);
  for (std::int64_t bt = 0; bt < batch; ++bt) {
    std::int64_t ao = bt * M * K;
    std::int64_t bo = (bbatch == 1 ? 0 : bt) * K * N;
    std::int64_t co = bt * M * N;
    for (std::int64_t m = 0; m < M; ++m)
      for (std::int64_t n = 0; n < N; ++n) {
        if (out_dt == DataType::F32) {
          double acc = 0.0;
          for (std::int64_t k = 0; k < K; ++k)
            acc += a.f[ao + m * K + k] * b.f[bo + k * N + n];
          r.f[co + m * N + n] = acc;
        } else {
          std::int64_t acc = 0;
          for (std::int64_t k = 0; k < K; ++k)
            acc += a.i[ao + m * K + k] * b.i[bo + k * N + n];
          r.i[co + m * N + n] = acc;
        }
      }
  }
  return r;
}

DenseValue reduce(const DenseValue &a, std::int64_t axis, bool is_sum) {
  auto out_shape = a.shape;
  out_shape[axis] = 1;
  DenseValue r = DenseValue::zeros(a.dtype, out_shape);
  std::int64_t outer = 1, inner = 1, red = a.shape[axis];
  for (std::int64_t d = 0; d < axis; ++d) outer *= a.shape[d];
  for (std::size_t d = axis + 1; d < a.shape.size(); ++d) inner *= a.shape[d];
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      if (a.dtype == DataType::F32) {
        double acc = is_sum ? 0.0 : -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < red; ++k) {
          double x = a.f[(o * red + k) * inner + in];
          acc = is_sum ? acc + x : std::max(acc, x);
        }
        r.f[o * inner + in] = acc;
      } else {
        std::int64_t acc = is_sum ? 0 : std::numeric_limits<std::int64_t>::min();
        for (std::int64_t k = 0; k < red; ++k) {
          std::int64_t x = a.i[(o * red + k) * inner + in];
          acc = is_sum ? acc + x : std::max(acc, x);
        }
        r.i[o * inner + in] = acc;
      }
    }
  return r;
}

DenseValue softmax(const DenseValue &a, std::int64_t axis, bool fast) {
  DenseValue r = DenseValue::zeros(DataType::F32, a.shape);
  std::int64_t outer = 1, inner = 1, red = a.shape[axis];
  for (std::int64_t d = 0; d < axis; ++d) outer *= a.shape[d];
  for (std::size_t d = axis + 1; d < a.shape.size(); ++d) inner *= a.shape[d];
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t in = 0; in < inner; ++in) {
      double mx = 0.0;
      if (!fast) {
        mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < red; ++k)
          mx = std::max(mx, a.f[(o * red + k) * inner + in]);
      }
      double sum = 0.0;
      for (std::int64_t k = 0; k < red; ++k)
        sum += std::exp(a.f[(o * red + k) * inner + in] - mx);
      for (std::int64_t k = 0; k < red; ++k)
        r.f[(o * red + k) * inner + in] =
            std::exp(a.f[(o * red + k) * inner + in] - mx) / sum;
    }
  return r;
}

std::int64_t norm_axis(const Op &op, const DenseValue &a) {
  std::int64_t axis = op.attr_i("axis", -1);
  if (axis < 0) axis += static_cast<std::int64_t>(a.shape.size());
  return axis;
}

DenseValue quantize(const DenseValue &a, const Op &op, DataType to) {
  auto scales = op.attr_fv("scale");
  std::int64_t zp = op.attr_i("zp", 0);
  std::int64_t axis = op.attr_i("axis", -1);
  auto [lo, hi] = dtype_range(to);
  DenseValue r = DenseValue::zeros(to, a.shape);
  std::int64_t inner = 1;
  if (scales.size() > 1) {
    if (axis < 0) axis += static_cast<std::int64_t>(a.shape.size());
    for (std::size_t d = axis + 1; d < a.shape.size(); ++d) inner *= a.shape[d];
  }
  for (std::int64_t k = 0; k < a.elems(); ++k) {
    double s = scales.size() > 1
                   ? scales[(k / inner) % static_cast<std::int64_t>(scales.size())]
                   : scales[0];
    std::int64_t q = round_half_even(a.f[k] / s) + zp;
    r.i[k] = std::clamp(q, lo, hi);
  }
  return r;
}

DenseValue dequantize(const DenseValue &a, const Op &op) {
  auto scales = op.attr_fv("scale");
  std::int64_t zp = op.attr_i("zp", 0);
  std::int64_t axis = op.attr_i("axis", -1);
  DenseValue r = DenseValue::zeros(DataType::F32, a.shape);
  std::int64_t inner = 1;
  if (scales.size() > 1) {
    if (axis < 0) axis += static_cast<std::int64_t>(a.shape.size());
    for (std::size_t d = axis + 1; d < a.shape.size(); ++d) inner *= a.shape[d];
  }
  for (std::int64_t k = 0; k < a.elems(); ++k) {
    double s = scales.size() > 1
                   ? scales[(k / inner) % static_cast<std::int64_t>(scales.size())]
                   : scales[0];
    r.f[k] = (static_cast<double>(a.i[k]) - static_cast<double>(zp)) * s;
  }
  return r;
}

}  // namespace

DenseValue eval_op(const Graph &g, const Op &op,
                   const std::vector<DenseValue> &ins) {
  const DenseValue &a = ins[0];
  auto out_shape = out_shape_of(g, op);
  DataType out_dt = g.t(op.outputs[0]).dtype;
  switch (op.kind) {
    case OpKind::MatMul:
      return matmul(a, ins[1], out_dt, out_shape);
    case OpKind::Add:
      if (out_dt != DataType::F32)
        return binary_map_int(a, ins[1], out_shape, out_dt,
                              [](std::int64_t x, std::int64_t y) { return x + y; });
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return x + y; });
    case OpKind::Sub:
      if (out_dt != DataType::F32)
        return binary_map_int(a, ins[1], out_shape, out_dt,
                              [](std::int64_t x, std::int64_t y) { return x - y; });
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return x - y; });
    case OpKind::Mul:
      if (out_dt != DataType::F32)
        return binary_map_int(a, ins[1], out_shape, out_dt,
                              [](std::int64_t x, std::int64_t y) { return x * y; });
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return x * y; });
    case OpKind::Div:
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return x / y; });
    case OpKind::Max:
      if (out_dt != DataType::F32)
        return binary_map_int(a, ins[1], out_shape, out_dt,
                              [](std::int64_t x, std::int64_t y) { return std::max(x, y); });
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return std::max(x, y); });
    case OpKind::Min:
      if (out_dt != DataType::F32)
        return binary_map_int(a, ins[1], out_shape, out_dt,
                              [](std::int64_t x, std::int64_t y) { return std::min(x, y); });
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return std::min(x, y); });
    case OpKind::ReLU: {
      DenseValue r = a;
      if (a.dtype == DataType::F32)
        for (auto &x : r.f) x = std::max(x, 0.0);
      else
        for (auto &x : r.i) x = std::max<std::int64_t>(x, 0);
      return r;
    }
    case OpKind::Exp: {
      DenseValue r = a;
      for (auto &x : r.f) x = std::exp(x);
      return r;
    }
    case OpKind::Round: {
      DenseValue r = a;
      for (auto &x : r.f) x = static_cast<double>(round_half_even(x));
      return r;
    }
    case OpKind::Clamp: {
      double lo = op.attr_f("min"), hi = op.attr_f("max");
      DenseValue r = a;
      if (a.dtype == DataType::F32)
        for (auto &x : r.f) x = std::clamp(x, lo, hi);
      else
        for (auto &x : r.i)
          x = std::clamp(x, static_cast<std::int64_t>(lo),
                         static_cast<std::int64_t>(hi));
      return r;
    }
    case OpKind::Cast: {
      DenseValue r = DenseValue::zeros(out_dt, a.shape);
      for (std::int64_t k = 0; k < a.elems(); ++k) {
        if (out_dt == DataType::F32)
          r.f[k] = a.dtype == DataType::F32 ? a.f[k] : static_cast<double>(a.i[k]);
        else
          r.i[k] = a.dtype == DataType::F32 ? static_cast<std::int64_t>(a.f[k])
                                            : a.i[k];
      }
      return r;
    }
    case OpKind::Broadcast: {
      return binary_map(a, DenseValue::zeros(a.dtype, out_shape), out_shape,
                        out_dt, [](double x, double) { return x; });
    }
    case OpKind::ReduceSum:
      return reduce(a, norm_axis(op, a), true);
    case OpKind::ReduceMax:
      return reduce(a, norm_axis(op, a), false);
    case OpKind::Reorder: {
      DenseValue r = a;  // layout change only, logical identity
      r.shape = out_shape;
      return r;
    }
    case OpKind::Transpose: {
      auto perm = std::get<std::vector<std::int64_t>>(op.attrs.at("perm"));
      DenseValue r = DenseValue::zeros(out_dt, out_shape);
      auto in_str = row_strides(a.shape);
      std::vector<std::int64_t> idx(out_shape.size(), 0);
      for (std::int64_t k = 0; k < r.elems(); ++k) {
        std::int64_t ka = 0;
        for (std::size_t d = 0; d < idx.size(); ++d)
          ka += idx[d] * in_str[perm[d]];
        if (out_dt == DataType::F32)
          r.f[k] = a.f[ka];
        else
          r.i[k] = a.i[ka];
        for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
          if (++idx[d] < out_shape[d]) break;
          idx[d] = 0;
        }
      }
      return r;
    }
    case OpKind::Quantize:
      return quantize(a, op, out_dt);
    case OpKind::Dequantize:
      return dequantize(a, op);
    case OpKind::Softmax:
      return softmax(a, norm_axis(op, a), g.fast_softmax);
    case OpKind::BiasAdd:
      return binary_map(a, ins[1], out_shape, out_dt,
                        [](double x, double y) { return x + y; });
  }
  throw std::runtime_error("oracle: unhandled op kind");
}

std::map<int, DenseValue> eval_graph(const Graph &g,
                                     const std::map<int, DenseValue> &inputs) {
  std::map<int, DenseValue> env = inputs;
  for (const auto &[id, lt] : g.tensors) {
    if (env.count(id)) continue;
    auto it = g.const_data.find(id);
    if (it != g.const_data.end())
      env[id] = from_bytes(lt.dtype, lt.shape, it->second.data());
  }
  for (int t : g.inputs)
    if (!env.count(t))
      throw std::runtime_error("oracle: missing input tensor " + std::to_string(t));
  std::map<int, const Op *> by_id;
  for (const auto &op : g.ops) by_id[op.id] = &op;
  for (int id : topo_order(g)) {
    const Op *op = by_id[id];
    std::vector<DenseValue> ins;
    for (int t : op->inputs) {
      auto it = env.find(t);
      if (it == env.end())
        throw std::runtime_error("oracle: unbound tensor " + std::to_string(t));
      ins.push_back(it->second);
    }
    env[op->outputs[0]] = eval_op(g, *op, ins);
  }
  return env;
}

}  // namespace mtc::oracle
