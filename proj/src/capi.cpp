#include "hexplan.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "errors.hpp"
#include "experiments.hpp"
#include "json.hpp"
#include "json_io.hpp"
#include "oracle.hpp"
#include "report.hpp"
#include "scheduler.hpp"
#include "synth.hpp"
#include "types.hpp"
#include "util.hpp"

using json = nlohmann::ordered_json;

struct hexplan_cluster {
  hexplan::ClusterSpec spec;
};
struct hexplan_model {
  hexplan::ModelSpec spec;
};
struct hexplan_result {
  hexplan::ScheduleResult res;
  hexplan::ClusterSpec cluster;
  hexplan::ModelSpec model;
};

namespace {

void set_err(char* err, size_t err_len, const std::string& msg) {
  if (!err || err_len == 0) return;
  size_t n = msg.size() < err_len - 1 ? msg.size() : err_len - 1;
  std::memcpy(err, msg.data(), n);
  err[n] = '\0';
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

// run f, translating exceptions into status codes
template <typename F>
hexplan_status guarded(char* err, size_t err_len, F&& f) {
  try {
    f();
    return HEXPLAN_OK;
  } catch (const hexplan::ParseError& e) {
    set_err(err, err_len, e.what());
    return HEXPLAN_ERR_PARSE;
  } catch (const hexplan::InvalidArgument& e) {
    set_err(err, err_len, e.what());
    return HEXPLAN_ERR_INVALID;
  } catch (const hexplan::Infeasible& e) {
    set_err(err, err_len, e.what());
    return HEXPLAN_ERR_INFEASIBLE;
  } catch (const hexplan::LimitExceeded& e) {
    set_err(err, err_len, e.what());
    return HEXPLAN_ERR_LIMIT;
  } catch (const std::exception& e) {
    set_err(err, err_len, e.what());
    return HEXPLAN_ERR_INTERNAL;
  } catch (...) {
    set_err(err, err_len, "unknown error");
    return HEXPLAN_ERR_INTERNAL;
  }
}

hexplan::SchedulerConfig config_from(const char* config_json) {
  if (!config_json || !*config_json) return hexplan::SchedulerConfig{};
  return hexplan::parse_scheduler_config(config_json);
}

json trace_json(const std::vector<hexplan::IterationTrace>& trace) {
  return json::parse(hexplan::serialize_trace(trace));
}

json finite_or_null(double v) {
  if (v >= hexplan::kInf) return nullptr;
  return v;
}

}  // namespace

extern "C" {

hexplan_status hexplan_cluster_parse(const char* json_text,
                                     hexplan_cluster** out,
                                     char* err, size_t err_len) {
  if (!json_text || !out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto* h = new hexplan_cluster{hexplan::parse_cluster(json_text)};
    *out = h;
  });
}

hexplan_status hexplan_cluster_synthetic(int num_gpus, uint64_t seed,
                                         hexplan_cluster** out,
                                         char* err, size_t err_len) {
  if (!out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto* h = new hexplan_cluster{hexplan::generate_synthetic_cluster(num_gpus, seed)};
    *out = h;
  });
}

hexplan_status hexplan_cluster_scale_inter(const hexplan_cluster* c,
                                           double factor,
                                           hexplan_cluster** out,
                                           char* err, size_t err_len) {
  if (!c || !out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  if (!(factor > 0)) {
    set_err(err, err_len, "scale factor must be positive");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto* h = new hexplan_cluster{hexplan::scale_inter_bandwidth(c->spec, factor)};
    *out = h;
  });
}

char* hexplan_cluster_serialize(const hexplan_cluster* c) {
  if (!c) return nullptr;
  return dup_string(hexplan::serialize_cluster(c->spec));
}

void hexplan_cluster_free(hexplan_cluster* c) { delete c; }

hexplan_status hexplan_model_parse(const char* json_text,
                                   hexplan_model** out,
                                   char* err, size_t err_len) {
  if (!json_text || !out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto* h = new hexplan_model{hexplan::parse_model(json_text)};
    *out = h;
  });
}

char* hexplan_model_serialize(const hexplan_model* m) {
  if (!m) return nullptr;
  return dup_string(hexplan::serialize_model(m->spec));
}

void hexplan_model_free(hexplan_model* m) { delete m; }

hexplan_status hexplan_schedule(const hexplan_cluster* c,
                                const hexplan_model* m,
                                const char* config_json,
                                hexplan_result** out,
                                char* err, size_t err_len) {
  if (!c || !m || !out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    auto* r = new hexplan_result{hexplan::schedule(c->spec, m->spec, cfg),
                                 c->spec, m->spec};
    *out = r;
  });
}

hexplan_status hexplan_symmetric_baseline(const hexplan_cluster* c,
                                          const hexplan_model* m,
                                          const char* config_json,
                                          hexplan_result** out,
                                          char* err, size_t err_len) {
  if (!c || !m || !out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    auto* r = new hexplan_result{
        hexplan::symmetric_baseline(c->spec, m->spec, cfg), c->spec, m->spec};
    *out = r;
  });
}

hexplan_status hexplan_oracle(const hexplan_cluster* c,
                              const hexplan_model* m,
                              const char* config_json,
                              hexplan_result** out,
                              char* err, size_t err_len) {
  if (!c || !m || !out) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    auto outcome = hexplan::brute_force_schedule(c->spec, m->spec, cfg);
    auto* r = new hexplan_result{std::move(outcome.result), c->spec, m->spec};
    *out = r;
  });
}

hexplan_status hexplan_oracle_count(const hexplan_cluster* c,
                                    const hexplan_model* m,
                                    const char* config_json,
                                    uint64_t* out_count,
                                    char* err, size_t err_len) {
  if (!c || !m || !out_count) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    auto outcome = hexplan::brute_force_schedule(c->spec, m->spec, cfg,
                                                 hexplan::OracleLimits{}, true);
    *out_count = outcome.enumerated;
  });
}

hexplan_status hexplan_random_baseline(const hexplan_cluster* c,
                                       const hexplan_model* m,
                                       const char* config_json, int runs,
                                       char** out_json,
                                       char* err, size_t err_len) {
  if (!c || !m || !out_json) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  if (runs < 1) {
    set_err(err, err_len, "runs must be >= 1");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    auto rows = hexplan::random_baseline(c->spec, m->spec, cfg, runs);
    json j = json::array();
    for (size_t i = 0; i < rows.size(); ++i) {
      json jr;
      jr["run"] = i;
      jr["real_final_mfu"] = rows[i].real_final_mfu;
      jr["random_final_mfu"] = rows[i].random_final_mfu;
      jr["real_infeasible"] = rows[i].real_infeasible;
      jr["random_infeasible"] = rows[i].random_infeasible;
      jr["real_trace"] = trace_json(rows[i].real);
      jr["random_trace"] = trace_json(rows[i].random);
      j.push_back(std::move(jr));
    }
    *out_json = dup_string(j.dump(2) + "\n");
  });
}

hexplan_status hexplan_bandwidth_sweep(const hexplan_cluster* c,
                                       const hexplan_model* m,
                                       const char* config_json,
                                       const double* scales, int num_scales,
                                       char** out_json,
                                       char* err, size_t err_len) {
  if (!c || !m || !out_json || (!scales && num_scales > 0)) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  for (int i = 0; i < num_scales; ++i)
    if (!(scales[i] > 0)) {
      set_err(err, err_len, "scales must be positive");
      return HEXPLAN_ERR_INVALID;
    }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    std::vector<double> sc(scales, scales + num_scales);
    auto rows = hexplan::bandwidth_sweep(c->spec, m->spec, cfg, sc);
    json j = json::array();
    for (const auto& row : rows) {
      json jr;
      jr["scale"] = row.scale;
      jr["feasible"] = row.feasible;
      jr["cost"] = finite_or_null(row.cost);
      jr["mfu"] = row.mfu;
      jr["best_objective"] = row.best_objective == 'n'   ? "min"
                             : row.best_objective == 'x' ? "max"
                                                         : "-";
      jr["min_choices"] = row.min_choices;
      jr["max_choices"] = row.max_choices;
      j.push_back(std::move(jr));
    }
    *out_json = dup_string(j.dump(2) + "\n");
  });
}

hexplan_status hexplan_scale_bench(const int* sizes, int num_sizes,
                                   const hexplan_model* m,
                                   const char* config_json,
                                   char** out_json,
                                   char* err, size_t err_len) {
  if (!m || !out_json || (!sizes && num_sizes > 0)) {
    set_err(err, err_len, "null argument");
    return HEXPLAN_ERR_INVALID;
  }
  return guarded(err, err_len, [&] {
    auto cfg = config_from(config_json);
    std::vector<int> sz(sizes, sizes + num_sizes);
    auto rows = hexplan::scale_bench(sz, m->spec, cfg);
    json j = json::array();
    for (const auto& row : rows) {
      json jr;
      jr["num_gpus"] = row.num_gpus;
      jr["wall_seconds"] = row.wall_seconds;
      jr["feasible"] = row.feasible;
      jr["cost"] = finite_or_null(row.cost);
      jr["mfu"] = row.mfu;
      j.push_back(std::move(jr));
    }
    *out_json = dup_string(j.dump(2) + "\n");
  });
}

int hexplan_result_found(const hexplan_result* r) {
  return r && r->res.found ? 1 : 0;
}

double hexplan_result_cost(const hexplan_result* r) {
  return r ? r->res.report.total : hexplan::kInf;
}

double hexplan_result_mfu(const hexplan_result* r) {
  return r ? r->res.report.mfu : 0.0;
}

const char* hexplan_result_message(const hexplan_result* r) {
  return r ? r->res.message.c_str() : "";
}

char* hexplan_result_plan_json(const hexplan_result* r) {
  if (!r || !r->res.found) return nullptr;
  return dup_string(hexplan::serialize_plan(r->res.plan, r->cluster));
}

char* hexplan_result_report_json(const hexplan_result* r) {
  if (!r) return nullptr;
  return dup_string(hexplan::serialize_report(r->res.report, r->cluster));
}

char* hexplan_result_trace_json(const hexplan_result* r) {
  if (!r) return nullptr;
  return dup_string(hexplan::serialize_trace(r->res.trace));
}

char* hexplan_result_table(const hexplan_result* r) {
  if (!r) return nullptr;
  return dup_string(
      hexplan::render_table(r->res.plan, r->res.report, r->cluster, r->model));
}

void hexplan_result_free(hexplan_result* r) { delete r; }

char* hexplan_manifest_json(const char* command,
                            const char* const* input_paths,
                            const char* const* input_digests,
                            int num_inputs, uint64_t seed,
                            const char* config_json, double runtime_ms) {
  hexplan::RunManifest man;
  man.command = command ? command : "";
  for (int i = 0; i < num_inputs; ++i) {
    man.input_digests.emplace_back(input_paths[i] ? input_paths[i] : "",
                                   input_digests[i] ? input_digests[i] : "");
  }
  man.seed = seed;
  if (config_json && *config_json) {
    // echo the canonical form, not the raw text
    try {
      auto cfg = hexplan::parse_scheduler_config(config_json);
      man.config_json = hexplan::serialize_scheduler_config(cfg);
    } catch (const std::exception&) {
      man.config_json.clear();
    }
  }
  man.version = hexplan::artifact_version();
  man.runtime_ms = runtime_ms;
  return dup_string(hexplan::serialize_manifest(man, runtime_ms < 0));
}

char* hexplan_digest64(const void* data, size_t len) {
  if (!data && len > 0) return nullptr;
  std::string bytes(static_cast<const char*>(data), len);
  return dup_string(hexplan::fnv1a64_hex(bytes));
}

const char* hexplan_version(void) {
  static const std::string v = hexplan::artifact_version();
  return v.c_str();
}

void hexplan_string_free(char* s) { std::free(s); }

}  // extern "C"
