// command-line front end; talks to the planner exclusively through the
// C API in hexplan.h
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "hexplan.h"
#include "json.hpp"

using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitInfeasible = 2;

struct CommonOpts {
  std::string cluster_path;
  std::string model_path;
  long long global_batch = 1;
  std::vector<long long> micro_batches{1, 2, 4, 8};
  int iterations = 50;
  std::uint64_t seed = 0;
  int tau = 2;
  double balance_cap = 1.2;
  std::string output_dir = ".";
  std::string format = "table";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_cluster) {
  if (needs_cluster)
    cmd->add_option("--cluster", o.cluster_path, "cluster description file")
        ->required();
  cmd->add_option("--model", o.model_path, "model description file")->required();
  cmd->add_option("--global-batch", o.global_batch, "global batch size");
  cmd->add_option("--micro-batches", o.micro_batches,
                  "micro-batch size candidates")
      ->delimiter(',');
  cmd->add_option("--iterations", o.iterations, "search iterations");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--tau", o.tau, "stage-ordering fan-out bound");
  cmd->add_option("--balance-cap", o.balance_cap, "partition balance cap");
  cmd->add_option("--output-dir", o.output_dir, "where artifacts are written");
  cmd->add_option("--format", o.format, "stdout format")
      ->check(CLI::IsMember({"table", "json-like"}));
}

std::string config_json_for(const CommonOpts& o) {
  json j;
  j["global_batch"] = o.global_batch;
  j["micro_batch_candidates"] = o.micro_batches;
  j["iterations"] = o.iterations;
  j["seed"] = o.seed;
  j["tau"] = o.tau;
  j["balance_cap"] = o.balance_cap;
  return j.dump();
}

// canonical invocation string for the manifest (independent of the
// order flags were typed in)
std::string command_line_for(const std::string& sub, const CommonOpts& o,
                             const std::string& extra) {
  std::ostringstream os;
  os << "hexplan " << sub;
  if (!o.cluster_path.empty()) os << " --cluster " << o.cluster_path;
  os << " --model " << o.model_path;
  os << " --global-batch " << o.global_batch;
  os << " --micro-batches ";
  for (size_t i = 0; i < o.micro_batches.size(); ++i) {
    if (i) os << ",";
    os << o.micro_batches[i];
  }
  os << " --iterations " << o.iterations;
  os << " --seed " << o.seed;
  os << " --tau " << o.tau;
  os << " --balance-cap " << o.balance_cap;
  if (!extra.empty()) os << " " << extra;
  return os.str();
}

std::string take(char* s) {
  if (!s) return {};
  std::string out(s);
  hexplan_string_free(s);
  return out;
}

bool slurp(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  out = buf.str();
  return true;
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
  out << content;
}

int exit_code_for(hexplan_status st) {
  return st == HEXPLAN_ERR_INFEASIBLE ? kExitInfeasible : kExitInput;
}

struct Inputs {
  std::vector<std::string> paths;
  std::vector<std::string> digests;
};

bool load_input(const std::string& path, std::string& text, Inputs& inputs) {
  if (!slurp(path, text)) {
    std::cerr << "error: cannot read " << path << "\n";
    return false;
  }
  inputs.paths.push_back(path);
  inputs.digests.push_back(take(hexplan_digest64(text.data(), text.size())));
  return true;
}

std::string manifest_for(const std::string& command, const Inputs& inputs,
                         std::uint64_t seed, const std::string& config_json,
                         double runtime_ms) {
  std::vector<const char*> paths, digests;
  for (const auto& p : inputs.paths) paths.push_back(p.c_str());
  for (const auto& d : inputs.digests) digests.push_back(d.c_str());
  return take(hexplan_manifest_json(command.c_str(), paths.data(),
                                    digests.data(), int(paths.size()), seed,
                                    config_json.c_str(), runtime_ms));
}

// {"manifest": ..., key: body}
std::string with_manifest(const std::string& manifest, const std::string& key,
                          const json& body) {
  json j;
  j["manifest"] = json::parse(manifest);
  j[key] = body;
  return j.dump(2) + "\n";
}

struct LoadedProblem {
  hexplan_cluster* cluster = nullptr;
  hexplan_model* model = nullptr;
  Inputs inputs;
  ~LoadedProblem() {
    if (cluster) hexplan_cluster_free(cluster);
    if (model) hexplan_model_free(model);
  }
};

// parse cluster+model files, recording digests; returns false after
// printing a diagnostic
bool load_problem(const CommonOpts& o, bool needs_cluster, LoadedProblem& lp) {
  char err[512] = {0};
  if (needs_cluster) {
    std::string text;
    if (!load_input(o.cluster_path, text, lp.inputs)) return false;
    if (hexplan_cluster_parse(text.c_str(), &lp.cluster, err, sizeof err) !=
        HEXPLAN_OK) {
      std::cerr << "error: " << o.cluster_path << ": " << err << "\n";
      return false;
    }
  }
  std::string text;
  if (!load_input(o.model_path, text, lp.inputs)) return false;
  if (hexplan_model_parse(text.c_str(), &lp.model, err, sizeof err) !=
      HEXPLAN_OK) {
    std::cerr << "error: " << o.model_path << ": " << err << "\n";
    return false;
  }
  return true;
}

int run_schedule(const CommonOpts& o) {
  LoadedProblem lp;
  if (!load_problem(o, true, lp)) return kExitInput;
  std::string cfg = config_json_for(o);
  std::string command = command_line_for("schedule", o, "");

  char err[512] = {0};
  hexplan_result* res = nullptr;
  auto t0 = std::chrono::steady_clock::now();
  hexplan_status st =
      hexplan_schedule(lp.cluster, lp.model, cfg.c_str(), &res, err, sizeof err);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (st != HEXPLAN_OK) {
    std::cerr << "error: " << err << "\n";
    return exit_code_for(st);
  }

  std::string manifest = manifest_for(command, lp.inputs, o.seed, cfg, -1);
  std::string report = take(hexplan_result_report_json(res));
  std::string trace = take(hexplan_result_trace_json(res));
  write_file(o.output_dir, "report.json",
             with_manifest(manifest, "report", json::parse(report)));
  write_file(o.output_dir, "trace.json",
             with_manifest(manifest, "trace", json::parse(trace)));
  write_file(o.output_dir, "manifest.json",
             manifest_for(command, lp.inputs, o.seed, cfg, ms));

  int code = kExitOk;
  if (hexplan_result_found(res)) {
    std::string plan = take(hexplan_result_plan_json(res));
    std::string table = take(hexplan_result_table(res));
    write_file(o.output_dir, "plan.json",
               with_manifest(manifest, "plan", json::parse(plan)));
    write_file(o.output_dir, "table.txt", table);
    if (o.format == "table")
      std::cout << table;
    else
      std::cout << with_manifest(manifest, "report", json::parse(report));
  } else {
    std::cerr << hexplan_result_message(res) << "\n";
    code = kExitInfeasible;
  }
  hexplan_result_free(res);
  return code;
}

struct MethodRow {
  std::string name;
  bool ran = false;
  bool found = false;
  double cost = 0;
  double mfu = 0;
  json report;
  std::string note;
};

MethodRow run_method(const std::string& name, hexplan_status st,
                     hexplan_result* res, const char* err) {
  MethodRow row;
  row.name = name;
  if (st == HEXPLAN_ERR_LIMIT) {
    row.note = std::string("skipped: ") + err;
    return row;
  }
  if (st != HEXPLAN_OK) {
    row.note = err;
    return row;
  }
  row.ran = true;
  row.found = hexplan_result_found(res) != 0;
  row.cost = hexplan_result_cost(res);
  row.mfu = hexplan_result_mfu(res);
  row.report = json::parse(take(hexplan_result_report_json(res)));
  if (!row.found) row.note = hexplan_result_message(res);
  return row;
}

int run_compare(const CommonOpts& o) {
  LoadedProblem lp;
  if (!load_problem(o, true, lp)) return kExitInput;
  std::string cfg = config_json_for(o);
  std::string command = command_line_for("compare", o, "");

  char err[512] = {0};
  auto t0 = std::chrono::steady_clock::now();

  hexplan_result* r_sched = nullptr;
  hexplan_status st_sched = hexplan_schedule(lp.cluster, lp.model, cfg.c_str(),
                                             &r_sched, err, sizeof err);
  if (st_sched != HEXPLAN_OK) {
    std::cerr << "error: " << err << "\n";
    return exit_code_for(st_sched);
  }
  MethodRow sched = run_method("schedule", st_sched, r_sched, err);

  err[0] = 0;
  hexplan_result* r_sym = nullptr;
  hexplan_status st_sym = hexplan_symmetric_baseline(
      lp.cluster, lp.model, cfg.c_str(), &r_sym, err, sizeof err);
  MethodRow sym = run_method("symmetric", st_sym, r_sym, err);

  err[0] = 0;
  hexplan_result* r_oracle = nullptr;
  hexplan_status st_oracle =
      hexplan_oracle(lp.cluster, lp.model, cfg.c_str(), &r_oracle, err, sizeof err);
  MethodRow oracle = run_method("oracle", st_oracle, r_oracle, err);

  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  json rows = json::array();
  for (const MethodRow* m : {&sched, &sym, &oracle}) {
    json r;
    r["method"] = m->name;
    r["ran"] = m->ran;
    r["feasible"] = m->found;
    if (m->found) {
      r["cost"] = m->cost;
      r["mfu"] = m->mfu;
      r["breakdown"] = m->report;
    }
    if (!m->note.empty()) r["note"] = m->note;
    rows.push_back(std::move(r));
  }
  json extras;
  if (sched.found && sym.found)
    extras["speedup_vs_symmetric"] = sym.cost / sched.cost;
  if (sched.found && oracle.found && oracle.cost > 0)
    extras["oracle_gap"] = (sched.cost - oracle.cost) / oracle.cost;

  std::string manifest = manifest_for(command, lp.inputs, o.seed, cfg, -1);
  json body;
  body["rows"] = rows;
  body["summary"] = extras;
  write_file(o.output_dir, "compare.json",
             with_manifest(manifest, "compare", body));
  write_file(o.output_dir, "manifest.json",
             manifest_for(command, lp.inputs, o.seed, cfg, ms));

  if (o.format == "json-like") {
    std::cout << with_manifest(manifest, "compare", body);
  } else {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "method      feasible        cost         mfu\n";
    for (const MethodRow* m : {&sched, &sym, &oracle}) {
      os << m->name;
      for (size_t i = m->name.size(); i < 12; ++i) os << ' ';
      if (!m->ran) {
        os << "-           -            -          (" << m->note << ")\n";
        continue;
      }
      os << (m->found ? "yes " : "no  ") << "    ";
      if (m->found)
        os << std::setw(10) << m->cost << "   " << std::setw(9) << m->mfu;
      else
        os << "         -           -";
      if (!m->note.empty()) os << "  (" << m->note << ")";
      os << "\n";
    }
    if (extras.contains("speedup_vs_symmetric"))
      os << "speedup vs symmetric: "
         << extras["speedup_vs_symmetric"].get<double>() << "x\n";
    if (extras.contains("oracle_gap"))
      os << "gap vs oracle: " << extras["oracle_gap"].get<double>() * 100
         << "%\n";
    std::cout << os.str();
  }

  if (r_sched) hexplan_result_free(r_sched);
  if (r_sym) hexplan_result_free(r_sym);
  if (r_oracle) hexplan_result_free(r_oracle);
  return sched.found ? kExitOk : kExitInfeasible;
}

int run_random_baseline(const CommonOpts& o, int runs) {
  LoadedProblem lp;
  if (!load_problem(o, true, lp)) return kExitInput;
  std::string cfg = config_json_for(o);
  std::string command =
      command_line_for("random-baseline", o, "--runs " + std::to_string(runs));

  char err[512] = {0};
  char* out = nullptr;
  auto t0 = std::chrono::steady_clock::now();
  hexplan_status st = hexplan_random_baseline(lp.cluster, lp.model, cfg.c_str(),
                                              runs, &out, err, sizeof err);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (st != HEXPLAN_OK) {
    std::cerr << "error: " << err << "\n";
    return exit_code_for(st);
  }
  json body = json::parse(take(out));
  std::string manifest = manifest_for(command, lp.inputs, o.seed, cfg, -1);
  write_file(o.output_dir, "random_baseline.json",
             with_manifest(manifest, "runs", body));
  write_file(o.output_dir, "manifest.json",
             manifest_for(command, lp.inputs, o.seed, cfg, ms));

  double real_sum = 0, rnd_sum = 0;
  long long real_inf = 0, rnd_inf = 0;
  for (const auto& r : body) {
    real_sum += r["real_final_mfu"].get<double>();
    rnd_sum += r["random_final_mfu"].get<double>();
    real_inf += r["real_infeasible"].get<long long>();
    rnd_inf += r["random_infeasible"].get<long long>();
  }
  double n = double(body.size());
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "runs: " << body.size() << "\n";
  os << "mean final mfu   partitioner " << real_sum / n << "   random "
     << rnd_sum / n << "   gap " << (real_sum - rnd_sum) / n << "\n";
  os.precision(1);
  os << "mean infeasible candidates   partitioner " << real_inf / n
     << "   random " << rnd_inf / n << "\n";
  if (o.format == "json-like")
    std::cout << with_manifest(manifest, "runs", body);
  else
    std::cout << os.str();
  return kExitOk;
}

int run_scale_bench(const CommonOpts& o, const std::vector<int>& sizes) {
  LoadedProblem lp;
  if (!load_problem(o, false, lp)) return kExitInput;
  std::string cfg = config_json_for(o);
  std::ostringstream extra;
  extra << "--sizes ";
  for (size_t i = 0; i < sizes.size(); ++i) {
    if (i) extra << ",";
    extra << sizes[i];
  }
  std::string command = command_line_for("scale-bench", o, extra.str());

  char err[512] = {0};
  char* out = nullptr;
  auto t0 = std::chrono::steady_clock::now();
  hexplan_status st = hexplan_scale_bench(sizes.data(), int(sizes.size()),
                                          lp.model, cfg.c_str(), &out, err,
                                          sizeof err);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (st != HEXPLAN_OK) {
    std::cerr << "error: " << err << "\n";
    return exit_code_for(st);
  }
  json body = json::parse(take(out));
  std::string manifest = manifest_for(command, lp.inputs, o.seed, cfg, -1);
  write_file(o.output_dir, "scale_bench.json",
             with_manifest(manifest, "bench", body));
  write_file(o.output_dir, "manifest.json",
             manifest_for(command, lp.inputs, o.seed, cfg, ms));

  if (o.format == "json-like") {
    std::cout << with_manifest(manifest, "bench", body);
  } else {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os << "   gpus   wall(s)  feasible       mfu\n";
    for (const auto& r : body) {
      os.precision(2);
      os << std::setw(7) << r["num_gpus"].get<int>() << std::setw(10)
         << r["wall_seconds"].get<double>();
      os << std::setw(10) << (r["feasible"].get<bool>() ? "yes" : "no");
      os.precision(4);
      os << std::setw(10)
         << (r["mfu"].is_null() ? 0.0 : r["mfu"].get<double>()) << "\n";
    }
    std::cout << os.str();
  }
  return kExitOk;
}

int run_bandwidth_sweep(const CommonOpts& o, const std::vector<double>& scales) {
  LoadedProblem lp;
  if (!load_problem(o, true, lp)) return kExitInput;
  std::string cfg = config_json_for(o);
  std::ostringstream extra;
  extra << "--scales ";
  for (size_t i = 0; i < scales.size(); ++i) {
    if (i) extra << ",";
    extra << scales[i];
  }
  std::string command = command_line_for("bandwidth-sweep", o, extra.str());

  char err[512] = {0};
  char* out = nullptr;
  auto t0 = std::chrono::steady_clock::now();
  hexplan_status st = hexplan_bandwidth_sweep(lp.cluster, lp.model, cfg.c_str(),
                                              scales.data(), int(scales.size()),
                                              &out, err, sizeof err);
  auto t1 = std::chrono::steady_clock::now();
  double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (st != HEXPLAN_OK) {
    std::cerr << "error: " << err << "\n";
    return exit_code_for(st);
  }
  json body = json::parse(take(out));
  std::string manifest = manifest_for(command, lp.inputs, o.seed, cfg, -1);
  write_file(o.output_dir, "bandwidth_sweep.json",
             with_manifest(manifest, "sweep", body));
  write_file(o.output_dir, "manifest.json",
             manifest_for(command, lp.inputs, o.seed, cfg, ms));

  if (o.format == "json-like") {
    std::cout << with_manifest(manifest, "sweep", body);
  } else {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os << "  scale  feasible       mfu  winning-cut  min/max picks\n";
    for (const auto& r : body) {
      os.precision(2);
      os << std::setw(7) << r["scale"].get<double>();
      os << std::setw(10) << (r["feasible"].get<bool>() ? "yes" : "no");
      os.precision(4);
      os << std::setw(10) << r["mfu"].get<double>();
      os << std::setw(13) << r["best_objective"].get<std::string>();
      os << std::setw(8) << r["min_choices"].get<int>() << "/"
         << r["max_choices"].get<int>() << "\n";
    }
    std::cout << os.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hexplan: parallel training plan search over heterogeneous "
               "GPU clusters"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hexplan_version()));

  CommonOpts o_sched, o_cmp, o_rand, o_bench, o_sweep;
  int runs = 20;
  std::vector<int> sizes{64, 128, 192, 256, 320};
  std::vector<double> scales{0.5, 1, 5};

  CLI::App* c_sched =
      app.add_subcommand("schedule", "search for the best execution plan");
  add_common(c_sched, o_sched, true);

  CLI::App* c_cmp = app.add_subcommand(
      "compare", "planner vs symmetric baseline vs exhaustive oracle");
  add_common(c_cmp, o_cmp, true);

  CLI::App* c_rand = app.add_subcommand(
      "random-baseline", "planner vs random-partition ablation");
  add_common(c_rand, o_rand, true);
  c_rand->add_option("--runs", runs, "paired runs")->check(CLI::PositiveNumber);

  CLI::App* c_bench =
      app.add_subcommand("scale-bench", "search runtime on synthetic clusters");
  add_common(c_bench, o_bench, false);
  c_bench->add_option("--sizes", sizes, "GPU counts")->delimiter(',');

  CLI::App* c_sweep = app.add_subcommand(
      "bandwidth-sweep", "re-plan under rescaled inter-machine bandwidth");
  add_common(c_sweep, o_sweep, true);
  c_sweep->add_option("--scales", scales, "bandwidth multipliers")
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_sched->parsed()) return run_schedule(o_sched);
    if (c_cmp->parsed()) return run_compare(o_cmp);
    if (c_rand->parsed()) return run_random_baseline(o_rand, runs);
    if (c_bench->parsed()) return run_scale_bench(o_bench, sizes);
    if (c_sweep->parsed()) return run_bandwidth_sweep(o_sweep, scales);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
