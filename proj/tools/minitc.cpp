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

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "mtc/compile.hpp"
#include "mtc/graph_json.hpp"
#include "mtc/oracle.hpp"
#include "mtc/workloads.hpp"

namespace {

using nlohmann::json;
using namespace mtc;

constexpr int kExitUsage = 2;
constexpr int kExitVerify = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VerifyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_json_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception &e) {
    throw UsageError("invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

MachineModel load_machine(const std::string &path) {
  json j = load_json_file(path);
  MachineModel m;
  if (j.contains("cores")) m.num_cores = j["cores"].get<int>();
  if (j.contains("l1")) m.l1_bytes = j["l1"].get<std::int64_t>();
  if (j.contains("l2")) m.l2_bytes = j["l2"].get<std::int64_t>();
  if (j.contains("llc")) m.llc_bytes = j["llc"].get<std::int64_t>();
  if (j.contains("vector_lanes")) m.vector_lanes = j["vector_lanes"].get<int>();
  if (j.contains("level_costs")) {
    auto v = j["level_costs"].get<std::vector<double>>();
    if (v.size() != 4)
      throw UsageError("machine model: level_costs must have 4 entries");
    m.w_l1 = v[0];
    m.w_l2 = v[1];
    m.w_llc = v[2];
    m.w_dram = v[3];
  }
  return m;
}

struct CommonFlags {
  bool no_fuse = false, no_coarse = false, no_reuse = false, no_shrink = false;
  bool fast_softmax = false;
  int cores = 0;
  std::string machine_path;

  void attach(CLI::App *app) {
    app->add_flag("--no-fuse", no_fuse, "disable fine-grain fusion");
    app->add_flag("--no-coarse-grain", no_coarse,
                  "disable coarse-grain loop merging");
    app->add_flag("--no-buffer-reuse", no_reuse, "disable arena buffer reuse");
    app->add_flag("--no-shrink", no_shrink, "disable temporary shrinking");
    app->add_flag("--fast-softmax", fast_softmax,
                  "skip the max-subtraction in softmax");
    app->add_option("--cores", cores, "machine model core count override");
    app->add_option("--machine", machine_path, "machine model JSON file");
  }

  CompileOptions options() const {
    CompileOptions o;
    o.fuse = !no_fuse;
    o.coarse = !no_coarse;
    o.buffer_reuse = !no_reuse;
    o.shrink = !no_shrink;
    if (!machine_path.empty()) o.machine = load_machine(machine_path);
    if (cores > 0) o.machine.num_cores = cores;
    return o;
  }
};

Graph load_graph(const std::string &path, bool fast_softmax) {
  json j = load_json_file(path);
  Graph g;
  try {
    g = graph_from_json(j);
    infer_shapes(g);
  } catch (const std::exception &e) {
    throw UsageError(std::string("graph ingestion failed: ") + e.what());
  }
  if (fast_softmax) g.fast_softmax = true;
  if (auto errs = validate_graph(g); !errs.empty()) {
    std::string msg = "graph validation failed:";
    for (auto &e : errs) msg += "\n  " + e;
    throw UsageError(msg);
  }
  return g;
}

CompiledModule compile_or_throw(const Graph &g, const CompileOptions &opt) {
  try {
    return compile(g, opt);
  } catch (const std::runtime_error &e) {
    if (std::string(e.what()).rfind("tensor IR verification", 0) == 0)
      throw VerifyError(e.what());
    throw UsageError(e.what());
  }
}

json params_json(const CompiledModule &cm) {
  json out = json::array();
  for (const auto &[op_id, p] : cm.params) {
    json row;
    row["op"] = op_id;
    row["M"] = p.M;
    row["N"] = p.N;
    row["K"] = p.K;
    row["MB"] = p.MB;
    row["NB"] = p.NB;
    row["KB"] = p.KB;
    row["BS"] = p.BS;
    row["MPN"] = p.MPN;
    row["NPN"] = p.NPN;
    row["loop_order"] = loop_order_name(p.loop_order);
    json table = json::array();
    for (const auto &r : anchor_table(p)) {
      table.push_back({{"anchor", anchor_name(r.anchor)},
                       {"invocations_per_core", r.invocations_per_core},
                       {"a_working_set", r.a_working_set},
                       {"a_total", r.a_total},
                       {"b_working_set", r.b_working_set},
                       {"b_total", r.b_total},
                       {"c_working_set", r.c_working_set},
                       {"c_total", r.c_total}});
    }
    row["anchor_table"] = std::move(table);
    out.push_back(std::move(row));
  }
  return out;
}

json report_json(const PassPipelineReport &rep) {
  json out;
  out["op_counts"] = json::array();
  for (auto &[pass, n] : rep.op_counts)
    out["op_counts"].push_back({{"pass", pass}, {"ops", n}});
  out["fusion_decisions"] = json::array();
  for (auto &d : rep.fusion_decisions)
    out["fusion_decisions"].push_back(
        {{"tunable_op", d.tunable_op},
         {"fusible_op", d.fusible_op},
         {"is_pre", d.is_pre},
         {"fused", d.fused},
         {"anchor", d.fused ? anchor_name(static_cast<AnchorId>(d.anchor))
                            : "none"},
         {"cost", d.cost},
         {"no_fuse_cost", d.no_fuse_cost},
         {"reason", d.reason}});
  out["inserted_reorders"] = rep.inserted_reorders;
  out["notes"] = rep.notes;
  return out;
}

// ------------------------------------------------------------------ binding

struct BoundRun {
  std::vector<std::vector<std::byte>> input_bytes;
  std::vector<std::vector<std::byte>> output_bytes;
  std::map<int, oracle::DenseValue> oracle_inputs;
};

BoundRun bind_io(const Graph &g, const CompiledModule &cm, rt::Executor &ex,
                 std::uint64_t seed,
                 const std::map<int, std::string> &input_files) {
  BoundRun b;
  std::mt19937_64 rng(seed);
  for (int t : g.inputs) {
    const auto &lt = g.t(t);
    std::vector<std::byte> bytes;
    auto it = input_files.find(t);
    if (it != input_files.end()) {
      std::ifstream in(it->second, std::ios::binary);
      if (!in) throw UsageError("cannot open input file " + it->second);
      std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
      bytes.resize(raw.size());
      std::memcpy(bytes.data(), raw.data(), raw.size());
      if (static_cast<std::int64_t>(bytes.size()) !=
          lt.elems() * static_cast<std::int64_t>(dtype_size(lt.dtype)))
        throw UsageError("input file " + it->second +
                         " does not match tensor " + std::to_string(t) +
                         " shape");
    } else {
      bytes = workloads::random_bytes(lt.dtype, lt.elems(), rng);
    }
    b.oracle_inputs[t] = oracle::from_bytes(lt.dtype, lt.shape, bytes.data());
    b.input_bytes.push_back(std::move(bytes));
    ex.bind(cm.tensor_global.at(t), b.input_bytes.back().data());
  }
  for (int t : g.outputs) {
    const auto &lt = g.t(t);
    b.output_bytes.emplace_back(
        static_cast<std::size_t>(lt.elems()) * dtype_size(lt.dtype),
        std::byte{0});
    ex.bind(cm.tensor_global.at(t), b.output_bytes.back().data());
  }
  return b;
}

struct DiffStats {
  double max_abs = 0.0, max_rel = 0.0;
  std::int64_t max_int = 0;
  bool ok = true;
};

DiffStats compare_output(const LogicalTensor &lt, const std::byte *got,
                         const oracle::DenseValue &want) {
  DiffStats d;
  std::int64_t n = lt.elems();
  if (lt.dtype == DataType::F32) {
    const float *p = reinterpret_cast<const float *>(got);
    for (std::int64_t i = 0; i < n; ++i) {
      double a = p[i], b = want.f[i];
      double abs = std::fabs(a - b);
      double rel = abs / std::max(std::fabs(b), 1e-30);
      d.max_abs = std::max(d.max_abs, abs);
      d.max_rel = std::max(d.max_rel, rel);
      if (abs > 1e-6 + 1e-5 * std::fabs(b)) d.ok = false;
    }
  } else {
    std::int64_t tol = lt.dtype == DataType::U8 || lt.dtype == DataType::S8
                           ? 1
                           : 0;
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t a = 0;
      switch (lt.dtype) {
        case DataType::U8:
          a = reinterpret_cast<const std::uint8_t *>(got)[i];
          break;
        case DataType::S8:
          a = reinterpret_cast<const std::int8_t *>(got)[i];
          break;
        case DataType::S32:
          a = reinterpret_cast<const std::int32_t *>(got)[i];
          break;
        default:
          break;
      }
      std::int64_t diff = std::llabs(a - want.i[i]);
      d.max_int = std::max(d.max_int, diff);
      if (diff > tol) d.ok = false;
    }
  }
  return d;
}

double checksum(const LogicalTensor &lt, const std::byte *p) {
  double s = 0;
  std::int64_t n = lt.elems();
  switch (lt.dtype) {
    case DataType::F32:
      for (std::int64_t i = 0; i < n; ++i)
        s += reinterpret_cast<const float *>(p)[i];
      break;
    case DataType::U8:
      for (std::int64_t i = 0; i < n; ++i)
        s += reinterpret_cast<const std::uint8_t *>(p)[i];
      break;
    case DataType::S8:
      for (std::int64_t i = 0; i < n; ++i)
        s += reinterpret_cast<const std::int8_t *>(p)[i];
      break;
    case DataType::S32:
      for (std::int64_t i = 0; i < n; ++i)
        s += reinterpret_cast<const std::int32_t *>(p)[i];
      break;
    default:
      break;
  }
  return s;
}

// ------------------------------------------------------------------ compile

int cmd_compile(const std::string &path, const CommonFlags &cf,
                const std::string &dump_graph, const std::string &dump_tir,
                bool dump_params) {
  Graph g = load_graph(path, cf.fast_softmax);
  CompiledModule cm = compile_or_throw(g, cf.options());
  bool dumped = false;
  if (!dump_graph.empty()) {
    for (auto &[stage, sg] : cm.stage_graphs)
      if (stage == dump_graph) {
        std::cout << graph_to_json(sg).dump(2) << "\n";
        dumped = true;
      }
    if (!dumped) throw UsageError("unknown graph stage '" + dump_graph + "'");
  }
  if (!dump_tir.empty()) {
    bool found = false;
    for (auto &[stage, sm] : cm.stage_modules)
      if (stage == dump_tir) {
        std::cout << tir::print_module(sm);
        found = true;
      }
    if (!found) throw UsageError("unknown tir stage '" + dump_tir + "'");
    dumped = true;
  }
  if (dump_params) {
    std::cout << params_json(cm).dump(2) << "\n";
    dumped = true;
  }
  if (!dumped) {
    json out;
    out["functions"] = json::array();
    for (auto &f : cm.module.funcs) out["functions"].push_back(f.name);
    out["arena_bytes"] = cm.plan.arena_size;
    out["report"] = report_json(cm.report);
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------- run

int cmd_run(const std::string &path, const CommonFlags &cf, int workers,
            std::uint64_t seed, bool check_oracle,
            const std::vector<std::string> &input_specs, bool profile) {
  Graph g = load_graph(path, cf.fast_softmax);
  CompiledModule cm = compile_or_throw(g, cf.options());
  std::map<int, std::string> input_files;
  for (const auto &spec : input_specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw UsageError("--input expects TENSOR_ID=path");
    input_files[std::stoi(spec.substr(0, eq))] = spec.substr(eq + 1);
  }
  auto ex = cm.make_executor(workers);
  BoundRun b = bind_io(cm.graph, cm, *ex, seed, input_files);
  rt::Profile prof;
  ex->run(profile ? &prof : nullptr);

  json out;
  out["outputs"] = json::array();
  bool all_ok = true;
  std::map<int, oracle::DenseValue> oracle_out;
  if (check_oracle) oracle_out = oracle::eval_graph(g, b.oracle_inputs);
  for (std::size_t i = 0; i < cm.graph.outputs.size(); ++i) {
    int t = cm.graph.outputs[i];
    const auto &lt = cm.graph.t(t);
    json jo;
    jo["tensor"] = t;
    jo["dtype"] = dtype_name(lt.dtype);
    jo["shape"] = lt.shape;
    jo["checksum"] = checksum(lt, b.output_bytes[i].data());
    if (check_oracle) {
      DiffStats d = compare_output(lt, b.output_bytes[i].data(),
                                   oracle_out.at(t));
      jo["max_abs_diff"] = d.max_abs;
      jo["max_rel_diff"] = d.max_rel;
      jo["max_int_diff"] = d.max_int;
      jo["pass"] = d.ok;
      all_ok = all_ok && d.ok;
    }
    out["outputs"].push_back(std::move(jo));
  }
  if (profile) {
    out["profile"] = json::array();
    for (auto &[fn, msv] : prof.call_ms)
      out["profile"].push_back({{"function", fn}, {"ms", msv}});
    out["arena_bytes"] = prof.arena_bytes;
  }
  std::cout << out.dump(2) << "\n";
  if (check_oracle) {
    std::cout << (all_ok ? "PASS" : "FAIL") << "\n";
    if (!all_ok) throw VerifyError("outputs exceed oracle tolerance");
  }
  return 0;
}

// --------------------------------------------------------------------- dump

int cmd_dump(const std::string &path, const CommonFlags &cf,
             const std::string &stage) {
  Graph g = load_graph(path, cf.fast_softmax);
  CompiledModule cm = compile_or_throw(g, cf.options());
  for (auto &[name, sm] : cm.stage_modules)
    if (name == stage) {
      std::cout << tir::print_module(sm);
      return 0;
    }
  throw UsageError("unknown tir stage '" + stage + "'");
}

// -------------------------------------------------------------------- bench

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

int cmd_bench(const std::string &workload, const std::string &dtype_s,
              std::int64_t batch, std::int64_t scale, int repeats, int workers,
              const CommonFlags &cf, std::uint64_t seed) {
  DataType dt = dtype_s == "int8" ? DataType::U8 : DataType::F32;
  if (dtype_s != "int8" && dtype_s != "f32")
    throw UsageError("--dtype must be f32 or int8");
  if (repeats < 10) repeats = 10;
  Graph g = workloads::make_workload(workload, dt, batch, scale, seed);
  if (cf.fast_softmax) g.fast_softmax = true;

  struct Variant {
    std::string name;
    bool fuse, coarse;
  };
  std::vector<Variant> variants = {{"unfused", false, false},
                                   {"fused", true, false},
                                   {"fused_coarse", true, true}};

  // Reference + cross-agreement before any timing.
  std::mt19937_64 rng(seed + 1);
  std::map<int, oracle::DenseValue> oin;
  std::vector<std::vector<std::byte>> in_bytes;
  for (int t : g.inputs) {
    const auto &lt = g.t(t);
    in_bytes.push_back(workloads::random_bytes(lt.dtype, lt.elems(), rng));
    oin[t] = oracle::from_bytes(lt.dtype, lt.shape, in_bytes.back().data());
  }

  using clock = std::chrono::steady_clock;
  auto time_ms = [](auto &&fn) {
    auto t0 = clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(clock::now() - t0)
        .count();
  };

  std::map<int, oracle::DenseValue> oout;
  std::vector<double> oracle_times;
  for (int r = 0; r < 3 + repeats; ++r) {
    double ms = time_ms([&] { oout = oracle::eval_graph(g, oin); });
    if (r >= 3) oracle_times.push_back(ms);
  }

  json jv = json::array();
  std::ostringstream table;
  table << "variant        median_ms   speedup_vs_oracle\n";
  double oracle_ms = median(oracle_times);
  jv.push_back({{"variant", "oracle"},
                {"median_ms", oracle_ms},
                {"speedup_vs_oracle", 1.0}});
  table << "oracle         " << oracle_ms << "   1.0\n";

  for (const auto &v : variants) {
    CompileOptions opt = cf.options();
    opt.fuse = v.fuse;
    opt.coarse = v.coarse;
    CompiledModule cm = compile_or_throw(g, opt);
    auto ex = cm.make_executor(workers);
    std::vector<std::vector<std::byte>> outs;
    for (std::size_t i = 0; i < cm.graph.inputs.size(); ++i)
      ex->bind(cm.tensor_global.at(cm.graph.inputs[i]), in_bytes[i].data());
    for (int t : cm.graph.outputs) {
      const auto &lt = cm.graph.t(t);
      outs.emplace_back(
          static_cast<std::size_t>(lt.elems()) * dtype_size(lt.dtype),
          std::byte{0});
      ex->bind(cm.tensor_global.at(t), outs.back().data());
    }
    ex->run();  // correctness check run (also folds constants)
    for (std::size_t i = 0; i < cm.graph.outputs.size(); ++i) {
      int t = cm.graph.outputs[i];
      DiffStats d =
          compare_output(cm.graph.t(t), outs[i].data(), oout.at(t));
      if (!d.ok)
        throw VerifyError("bench variant " + v.name +
                          " disagrees with the oracle; benchmark aborted");
    }
    std::vector<double> times;
    for (int r = 0; r < 3 + repeats; ++r) {
      double ms = time_ms([&] { ex->run(); });
      if (r >= 3) times.push_back(ms);
    }
    double ms = median(times);
    jv.push_back({{"variant", v.name},
                  {"median_ms", ms},
                  {"speedup_vs_oracle", oracle_ms / ms}});
    table << v.name << std::string(v.name.size() < 14 ? 14 - v.name.size() : 1,
                                   ' ')
          << ' ' << ms << "   " << oracle_ms / ms << "\n";
  }

  json out;
  out["workload"] = workload;
  out["dtype"] = dtype_s;
  out["batch"] = batch;
  out["scale"] = scale;
  out["repeats"] = repeats;
  out["workers"] = workers;
  out["results"] = std::move(jv);
  std::cout << table.str() << "\n" << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"minitc: a miniature tensor graph compiler"};
  app.require_subcommand(1);

  CommonFlags cf_compile, cf_run, cf_dump, cf_bench;

  auto *c = app.add_subcommand("compile", "compile a JSON graph");
  std::string c_path, c_dump_graph, c_dump_tir;
  bool c_dump_params = false;
  c->add_option("graph", c_path, "graph JSON file")->required();
  cf_compile.attach(c);
  c->add_option("--dump-graph", c_dump_graph,
                "print the graph after a pass stage (input, decompose, "
                "low_precision, layout, const_preprocess)");
  c->add_option("--dump-tir", c_dump_tir,
                "print the tensor IR at a stage (lowered, shrunk, final)");
  c->add_flag("--dump-params", c_dump_params,
              "print chosen matmul parameters and anchor cost tables");

  auto *r = app.add_subcommand("run", "compile and execute a JSON graph");
  std::string r_path;
  int r_workers = 1;
  std::uint64_t r_seed = 1;
  bool r_check = false, r_profile = false;
  std::vector<std::string> r_inputs;
  r->add_option("graph", r_path, "graph JSON file")->required();
  cf_run.attach(r);
  r->add_option("--workers", r_workers, "runtime worker threads");
  r->add_option("--random-seed", r_seed, "seed for random input data");
  r->add_flag("--check-oracle", r_check,
              "compare outputs against the reference oracle");
  r->add_option("--input", r_inputs,
                "bind raw input data: TENSOR_ID=path (repeatable)");
  r->add_flag("--profile", r_profile, "emit per-function timings");

  auto *d = app.add_subcommand("dump", "print the final tensor IR");
  std::string d_path, d_stage = "final";
  d->add_option("graph", d_path, "graph JSON file")->required();
  cf_dump.attach(d);
  d->add_option("--stage", d_stage, "tir stage (lowered, shrunk, final)");

  auto *b = app.add_subcommand("bench", "benchmark a built-in workload");
  std::string b_workload = "mlp1", b_dtype = "f32";
  std::int64_t b_batch = 32, b_scale = 4;
  int b_repeats = 10, b_workers = 4;
  std::uint64_t b_seed = 7;
  b->add_option("--workload", b_workload,
                "mlp1, mlp2, mha1, mha2, mha3 or mha4");
  b->add_option("--dtype", b_dtype, "f32 or int8");
  b->add_option("--batch", b_batch, "input batch size");
  b->add_option("--scale", b_scale,
                "desk-scale divisor for batch/sequence sizes");
  b->add_option("--repeats", b_repeats, "timed repeats (>= 10)");
  b->add_option("--workers", b_workers, "runtime worker threads");
  b->add_option("--random-seed", b_seed, "seed for workload data");
  cf_bench.attach(b);

  try {
    app.parse(argc, argv);
    if (c->parsed())
      return cmd_compile(c_path, cf_compile, c_dump_graph, c_dump_tir,
                         c_dump_params);
    if (r->parsed())
      return cmd_run(r_path, cf_run, r_workers, r_seed, r_check, r_inputs,
                     r_profile);
    if (d->parsed()) return cmd_dump(d_path, cf_dump, d_stage);
    if (b->parsed())
      return cmd_bench(b_workload, b_dtype, b_batch, b_scale, b_repeats,
                       b_workers, cf_bench, b_seed);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const VerifyError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerify;
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
