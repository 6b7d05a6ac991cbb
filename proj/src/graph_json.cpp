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

#include "mtc/graph_json.hpp"

#include <cstring>
#include <stdexcept>

namespace mtc {

using nlohmann::json;

namespace {

json attr_to_json(const AttrValue &v) {
  return std::visit([](const auto &x) { return json(x); }, v);
}

AttrValue attr_from_json(const json &j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    bool all_int = true;
    for (const auto &e : j)
      if (!e.is_number_integer()) all_int = false;
    if (all_int) return j.get<std::vector<std::int64_t>>();
    return j.get<std::vector<double>>();
  }
  throw std::runtime_error("unsupported attr value: " + j.dump());
}

json const_data_to_json(const LogicalTensor &lt,
                        const std::vector<std::byte> &buf) {
  json arr = json::array();
  std::size_t n = buf.size() / dtype_size(lt.dtype);
  for (std::size_t i = 0; i < n; ++i) {
    switch (lt.dtype) {
      case DataType::F32: {
        float x;
        std::memcpy(&x, buf.data() + i * 4, 4);
        arr.push_back(x);
        break;
      }
      case DataType::S32: {
        std::int32_t x;
        std::memcpy(&x, buf.data() + i * 4, 4);
        arr.push_back(x);
        break;
      }
      case DataType::S8: {
        std::int8_t x;
        std::memcpy(&x, buf.data() + i, 1);
        arr.push_back(static_cast<int>(x));
        break;
      }
      case DataType::U8: {
        std::uint8_t x;
        std::memcpy(&x, buf.data() + i, 1);
        arr.push_back(static_cast<int>(x));
        break;
      }
    }
  }
  return arr;
}

}  // namespace

json graph_to_json(const Graph &g) {
  json j;
  j["tensors"] = json::array();
  for (const auto &[id, lt] : g.tensors) {
    json t;
    t["id"] = id;
    t["dtype"] = dtype_name(lt.dtype);
    t["shape"] = lt.shape;
    t["property"] =
        lt.property == TensorProperty::Constant ? "constant" : "variable";
    if (!lt.layout.is_plain()) t["layout"] = lt.layout.str();
    auto it = g.const_data.find(id);
    if (it != g.const_data.end()) t["data"] = const_data_to_json(lt, it->second);
    j["tensors"].push_back(t);
  }
  j["ops"] = json::array();
  for (const auto &op : g.ops) {
    json o;
    o["id"] = op.id;
    o["kind"] = op_kind_name(op.kind);
    json attrs = json::object();
    for (const auto &[k, v] : op.attrs) attrs[k] = attr_to_json(v);
    o["attrs"] = attrs;
    o["inputs"] = op.inputs;
    o["outputs"] = op.outputs;
    j["ops"].push_back(o);
  }
  j["inputs"] = g.inputs;
  j["outputs"] = g.outputs;
  if (g.fast_softmax) j["fast_softmax"] = true;
  return j;
}

Graph graph_from_json(const json &j) {
  Graph g;
  if (!j.contains("tensors") || !j.contains("ops"))
    throw std::runtime_error("graph json: missing 'tensors' or 'ops'");
  for (const auto &t : j.at("tensors")) {
    LogicalTensor lt;
    lt.id = t.at("id").get<int>();
    auto dt = dtype_from_name(t.at("dtype").get<std::string>());
    if (!dt)
      throw std::runtime_error("graph json: bad dtype '" +
                               t.at("dtype").get<std::string>() +
                               "' on tensor " + std::to_string(lt.id));
    lt.dtype = *dt;
    if (t.contains("shape")) lt.shape = t.at("shape").get<std::vector<std::int64_t>>();
    for (auto d : lt.shape)
      if (d <= 0)
        throw std::runtime_error("graph json: non-positive dim on tensor " +
                                 std::to_string(lt.id));
    lt.property = t.value("property", std::string("variable")) == "constant"
                      ? TensorProperty::Constant
                      : TensorProperty::Variable;
    g.tensors[lt.id] = lt;
    g.next_tensor_id = std::max(g.next_tensor_id, lt.id + 1);
    if (t.contains("data")) {
      std::vector<std::byte> buf;
      const auto &arr = t.at("data");
      std::size_t es = dtype_size(lt.dtype);
      buf.resize(arr.size() * es);
      for (std::size_t i = 0; i < arr.size(); ++i) {
        switch (lt.dtype) {
          case DataType::F32: {
            float x = arr[i].get<float>();
            std::memcpy(buf.data() + i * 4, &x, 4);
            break;
          }
          case DataType::S32: {
            std::int32_t x = arr[i].get<std::int32_t>();
            std::memcpy(buf.data() + i * 4, &x, 4);
            break;
          }
          case DataType::S8: {
            std::int8_t x = static_cast<std::int8_t>(arr[i].get<int>());
            std::memcpy(buf.data() + i, &x, 1);
            break;
          }
          case DataType::U8: {
            std::uint8_t x = static_cast<std::uint8_t>(arr[i].get<int>());
            std::memcpy(buf.data() + i, &x, 1);
            break;
          }
        }
      }
      g.const_data[lt.id] = std::move(buf);
    }
  }
  for (const auto &o : j.at("ops")) {
    Op op;
    op.id = o.at("id").get<int>();
    auto k = op_kind_from_name(o.at("kind").get<std::string>());
    if (!k)
      throw std::runtime_error("graph json: unknown op kind '" +
                               o.at("kind").get<std::string>() + "'");
    op.kind = *k;
    if (o.contains("attrs"))
      for (auto it = o.at("attrs").begin(); it != o.at("attrs").end(); ++it)
        op.attrs[it.key()] = attr_from_json(it.value());
    op.inputs = o.at("inputs").get<std::vector<int>>();
    op.outputs = o.at("outputs").get<std::vector<int>>();
    g.next_op_id = std::max(g.next_op_id, op.id + 1);
    g.ops.push_back(std::move(op));
  }
  g.inputs = j.at("inputs").get<std::vector<int>>();
  g.outputs = j.at("outputs").get<std::vector<int>>();
  g.fast_softmax = j.value("fast_softmax", false);
  return g;
}

}  // namespace mtc
