// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#include "zigzag/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace zigzag {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

/// Attention data plus whatever the source can additionally offer (the toy
/// model for replay metrics, a digest for generated or loaded traces).
struct SourceContext {
  std::vector<LayerState> states;
  std::optional<ToyModel> model;
  std::vector<int> tokens;
  std::vector<double> lmba;
  std::vector<int> lmbo;
  std::uint64_t trace_digest = 0;
  bool has_digest = false;
  int num_layers = 0;
  int num_heads = 0;
  int seq_len = 0;
  int window = 0;
};

void check_source(const std::string& source) {
  if (source != "toy" && source != "synth" && source != "trace") {
    throw ConfigError("source must be toy, synth, or trace, got '" + source +
                      "'");
  }
}

void check_format(const std::string& format) {
  if (format != "json" && format != "csv") {
    throw ConfigError("format must be json or csv, got '" + format + "'");
  }
}

void check_capabilities(const ExperimentConfig& config) {
  if (config.with_lmbo && config.source != "toy") {
    throw CapabilityError(
        "LMBO replays evicted caches through model weights, so it needs the "
        "toy source; '" +
        config.source + "' provides attention rows only");
  }
}

SynthSpec synth_spec(const ExperimentConfig& config, int seq_len,
                     std::uint64_t seed, const std::vector<int>& needles,
                     double needle_mass) {
  SynthSpec spec;
  spec.num_layers = config.num_layers;
  spec.num_heads = config.num_heads;
  spec.seq_len = seq_len;
  spec.window = config.window;
  spec.seed = seed;
  spec.kappa = resolved_kappa(config, seq_len, config.window);
  spec.needle_positions = needles;
  spec.needle_mass = needle_mass;
  return spec;
}

SourceContext build_context(const ExperimentConfig& config,
                            std::uint64_t seed) {
  SourceContext ctx;
  if (config.source == "toy") {
    ModelConfig mc;
    mc.num_layers = config.num_layers;
    mc.num_heads = config.num_heads;
    mc.head_dim = config.head_dim;
    mc.model_dim = config.model_dim;
    mc.vocab_size = config.vocab_size;
    mc.seed = seed;
    ctx.model = build_model(mc);
    ctx.tokens = make_tokens(seed, config.prompt_len, config.vocab_size);
    PrefillResult pre = prefill(*ctx.model, ctx.tokens, config.window);
    ctx.states = std::move(pre.layers);
    ctx.num_layers = config.num_layers;
    ctx.num_heads = config.num_heads;
    ctx.seq_len = config.prompt_len;
    ctx.window = config.window;
  } else if (config.source == "synth") {
    TraceFile trace = generate_synth(
        synth_spec(config, config.prompt_len, seed, config.needle_positions,
                   config.needle_mass));
    ctx.trace_digest = trace_checksum(trace);
    ctx.has_digest = true;
    ctx.num_layers = trace.num_layers;
    ctx.num_heads = trace.num_heads;
    ctx.seq_len = trace.seq_len;
    ctx.window = trace.window;
    ctx.states = states_from_trace(trace);
  } else if (config.source == "trace") {
    if (config.trace_path.empty()) {
      throw ConfigError("source 'trace' needs trace_path");
    }
    TraceFile trace = load_trace(config.trace_path);
    ctx.trace_digest = trace_checksum(trace);
    ctx.has_digest = true;
    ctx.num_layers = trace.num_layers;
    ctx.num_heads = trace.num_heads;
    ctx.seq_len = trace.seq_len;
    ctx.window = trace.window;
    ctx.states = states_from_trace(trace);
  } else {
    throw ConfigError("source must be toy, synth, or trace");
  }
  ctx.lmba = lmba_profile(ctx.states, config.policy.eps);
  if (config.with_lmbo) {
    for (int l = 0; l < ctx.num_layers; ++l) {
      const std::vector<Vector> scores = importance_scores(ctx.states[l], 1);
      ctx.lmbo.push_back(lmbo(*ctx.model, ctx.tokens, ctx.states, l, scores,
                              config.policy.eps));
    }
  }
  return ctx;
}

MetricsReport cell_report(const ExperimentConfig& config,
                          const SourceContext& ctx, PolicyKind kind,
                          int budget, std::uint64_t seed) {
  PolicyConfig pc = config.policy;
  pc.b_bound = config.b_bound;
  PolicyResult pr = run_policy(kind, ctx.states, budget, pc);

  MetricsReport report;
  report.policy = policy_name(kind);
  report.source = config.source;
  report.budget = budget;
  report.b_bound = kind == PolicyKind::ZigZagKV
                       ? (config.b_bound == -1 ? budget / 2 : config.b_bound)
                       : -1;
  report.seed = seed;
  report.num_layers = ctx.num_layers;
  report.num_heads = ctx.num_heads;
  report.seq_len = ctx.seq_len;
  report.window = ctx.window;
  report.lmba = ctx.lmba;
  report.lmbo = ctx.lmbo;
  report.attn_loss = attention_loss(ctx.states, pr.decision, config.policy.eps);
  report.attn_loss_secondary =
      attention_loss_secondary(ctx.states, pr.decision);
  if (ctx.model) {
    report.out_loss =
        output_loss(*ctx.model, ctx.tokens, ctx.states, pr.decision);
  }
  if (!config.needle_positions.empty()) {
    report.needle_retention =
        needle_retention(pr.decision, config.needle_positions);
  }
  return report;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path.string());
  out << text;
  if (!out.good()) throw IoError("write failure on file: " + path.string());
}

std::string sanitize_reason(std::string reason) {
  for (char& c : reason) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return reason;
}

std::vector<PolicyKind> parse_policies(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("no policies configured");
  std::vector<PolicyKind> kinds;
  kinds.reserve(names.size());
  for (const std::string& name : names) kinds.push_back(policy_from_name(name));
  return kinds;
}

void check_axes(const ExperimentConfig& config) {
  if (config.budgets.empty()) throw ConfigError("no budgets configured");
  for (int b : config.budgets) {
    if (b < 1) throw ConfigError("budgets must be >= 1");
  }
  if (config.seeds.empty()) throw ConfigError("no seeds configured");
  if (config.b_bound < -1) {
    throw ConfigError("b_bound must be -1 (default) or >= 0");
  }
}

/// Shared manifest prefix: version, command, source, dimensions, and the
/// source-specific fields a rerun needs to reproduce the outputs byte for
/// byte (an empty kappa array means the default doubling ramp).
ordered_json manifest_header(const char* command,
                             const ExperimentConfig& config,
                             const SourceContext& ctx) {
  ordered_json m;
  m["version"] = "zigzagkv/1";
  m["command"] = command;
  m["source"] = config.source;
  m["num_layers"] = ctx.num_layers;
  m["num_heads"] = ctx.num_heads;
  m["seq_len"] = ctx.seq_len;
  m["window"] = ctx.window;
  if (config.source == "toy") {
    m["head_dim"] = config.head_dim;
    m["model_dim"] = config.model_dim;
    m["vocab_size"] = config.vocab_size;
  } else if (config.source == "synth") {
    m["kappa"] = config.kappa;
    m["needle_positions"] = config.needle_positions;
    m["needle_mass"] = config.needle_mass;
  } else if (config.source == "trace") {
    m["trace_path"] = config.trace_path;
  }
  m["eps"] = config.policy.eps;
  return m;
}

}  // namespace

void apply_config_json(ExperimentConfig& config, const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config JSON is malformed: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config JSON must be an object");

  const auto as_int = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number_integer()) {
      throw ConfigError("config key '" + key + "' must be an integer");
    }
    return v.get<int>();
  };
  const auto as_double = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) {
      throw ConfigError("config key '" + key + "' must be a number");
    }
    return v.get<double>();
  };
  const auto as_string = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_string()) {
      throw ConfigError("config key '" + key + "' must be a string");
    }
    return v.get<std::string>();
  };

  for (const auto& [key, value] : doc.items()) {
    if (key == "source") config.source = as_string(value, key);
    else if (key == "trace_path") config.trace_path = as_string(value, key);
    else if (key == "num_layers") config.num_layers = as_int(value, key);
    else if (key == "num_heads") config.num_heads = as_int(value, key);
    else if (key == "head_dim") config.head_dim = as_int(value, key);
    else if (key == "model_dim") config.model_dim = as_int(value, key);
    else if (key == "vocab_size") config.vocab_size = as_int(value, key);
    else if (key == "prompt_len") config.prompt_len = as_int(value, key);
    else if (key == "window") config.window = as_int(value, key);
    else if (key == "kappa") {
      if (!value.is_array()) throw ConfigError("config key 'kappa' must be an array");
      config.kappa.clear();
      for (const auto& v : value) config.kappa.push_back(as_double(v, key));
    } else if (key == "needle_positions") {
      if (!value.is_array()) {
        throw ConfigError("config key 'needle_positions' must be an array");
      }
      config.needle_positions.clear();
      for (const auto& v : value) {
        config.needle_positions.push_back(as_int(v, key));
      }
    } else if (key == "needle_mass") {
      config.needle_mass = as_double(value, key);
    } else if (key == "policies") {
      if (!value.is_array()) {
        throw ConfigError("config key 'policies' must be an array");
      }
      config.policies.clear();
      for (const auto& v : value) config.policies.push_back(as_string(v, key));
    } else if (key == "budgets") {
      if (!value.is_array()) {
        throw ConfigError("config key 'budgets' must be an array");
      }
      config.budgets.clear();
      for (const auto& v : value) config.budgets.push_back(as_int(v, key));
    } else if (key == "b_bound") {
      config.b_bound = as_int(value, key);
    } else if (key == "seeds") {
      if (!value.is_array()) {
        throw ConfigError("config key 'seeds' must be an array");
      }
      config.seeds.clear();
      for (const auto& v : value) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
          throw ConfigError("config key 'seeds' must hold integers >= 0");
        }
        config.seeds.push_back(v.get<std::uint64_t>());
      }
    } else if (key == "out_dir") {
      config.out_dir = as_string(value, key);
    } else if (key == "format") {
      config.format = as_string(value, key);
    } else if (key == "with_lmbo") {
      if (!value.is_boolean()) {
        throw ConfigError("config key 'with_lmbo' must be a boolean");
      }
      config.with_lmbo = value.get<bool>();
    } else if (key == "sink_count") {
      config.policy.sink_count = as_int(value, key);
    } else if (key == "recent_fraction") {
      config.policy.recent_fraction = as_double(value, key);
    } else if (key == "pool_kernel") {
      config.policy.pool_kernel = as_int(value, key);
    } else if (key == "pyramid_min_ratio") {
      config.policy.pyramid_min_ratio = as_double(value, key);
    } else if (key == "eps") {
      config.policy.eps = as_double(value, key);
    } else if (key == "needle_depths") {
      if (!value.is_array()) {
        throw ConfigError("config key 'needle_depths' must be an array");
      }
      config.needle_depths.clear();
      for (const auto& v : value) {
        config.needle_depths.push_back(as_double(v, key));
      }
    } else if (key == "needle_lengths") {
      if (!value.is_array()) {
        throw ConfigError("config key 'needle_lengths' must be an array");
      }
      config.needle_lengths.clear();
      for (const auto& v : value) {
        config.needle_lengths.push_back(as_int(v, key));
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

std::vector<double> resolved_kappa(const ExperimentConfig& config, int seq_len,
                                   int window) {
  if (!config.kappa.empty()) return config.kappa;
  std::vector<double> kappa(config.num_layers);
  double v = 1.0;
  for (int l = 0; l < config.num_layers; ++l) {
    kappa[l] = std::min(v, static_cast<double>(seq_len - window));
    v *= 2.0;
  }
  return kappa;
}

int worker_count() {
  const char* env = std::getenv("ZIGZAG_THREADS");
  if (env == nullptr || *env == '\0') {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 4096) {
    throw ConfigError("ZIGZAG_THREADS must be a positive integer, got '" +
                      std::string(env) + "'");
  }
  return static_cast<int>(v);
}

MetricsReport run_profile(const ExperimentConfig& config) {
  check_source(config.source);
  check_format(config.format);
  check_capabilities(config);
  if (config.seeds.empty()) throw ConfigError("no seeds configured");

  const SourceContext ctx = build_context(config, config.seeds.front());

  MetricsReport report;
  report.policy = "profile";
  report.source = config.source;
  report.budget = 0;
  report.seed = config.seeds.front();
  report.num_layers = ctx.num_layers;
  report.num_heads = ctx.num_heads;
  report.seq_len = ctx.seq_len;
  report.window = ctx.window;
  report.lmba = ctx.lmba;
  report.lmbo = ctx.lmbo;

  fs::create_directories(config.out_dir);
  const std::string profile_name = "profile." + config.format;
  emit_report(report, config.format,
              (fs::path(config.out_dir) / profile_name).string());

  ordered_json manifest = manifest_header("profile", config, ctx);
  manifest["seed"] = report.seed;
  manifest["with_lmbo"] = config.with_lmbo;
  if (ctx.has_digest) {
    manifest["trace_checksums"] = {hex64(ctx.trace_digest)};
  }
  manifest["outputs"] = {profile_name};
  write_file(fs::path(config.out_dir) / "manifest.json",
             manifest.dump(2) + "\n");
  return report;
}

CompareOutcome run_compare(const ExperimentConfig& config) {
  check_source(config.source);
  check_format(config.format);
  check_capabilities(config);
  check_axes(config);
  const std::vector<PolicyKind> kinds = parse_policies(config.policies);

  // One context per seed; a file-backed trace is seed-independent, so it is
  // built once and shared.
  std::vector<std::uint64_t> unique_seeds;
  for (std::uint64_t s : config.seeds) {
    if (std::find(unique_seeds.begin(), unique_seeds.end(), s) ==
        unique_seeds.end()) {
      unique_seeds.push_back(s);
    }
  }
  std::map<std::uint64_t, std::shared_ptr<const SourceContext>> contexts;
  if (config.source == "trace") {
    auto shared = std::make_shared<const SourceContext>(
        build_context(config, unique_seeds.front()));
    for (std::uint64_t s : unique_seeds) contexts[s] = shared;
  } else {
    for (std::uint64_t s : unique_seeds) {
      contexts[s] =
          std::make_shared<const SourceContext>(build_context(config, s));
    }
  }

  struct Cell {
    PolicyKind kind;
    int budget;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (PolicyKind kind : kinds) {
    for (int budget : config.budgets) {
      for (std::uint64_t seed : config.seeds) {
        cells.push_back({kind, budget, seed});
      }
    }
  }

  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir / "cells");

  std::vector<std::optional<MetricsReport>> results(cells.size());
  std::vector<std::string> skip_reasons(cells.size());
  std::vector<std::string> cell_files(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> dead{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  const int threads = std::max(
      1, std::min(worker_count(), static_cast<int>(cells.size())));
  const auto worker = [&] {
    while (!dead.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) break;
      const Cell& cell = cells[i];
      try {
        MetricsReport report = cell_report(config, *contexts.at(cell.seed),
                                           cell.kind, cell.budget, cell.seed);
        const std::string name = policy_name(cell.kind) + "_B" +
                                 std::to_string(cell.budget) + "_s" +
                                 std::to_string(cell.seed) + "." +
                                 config.format;
        emit_report(report, config.format, (out_dir / "cells" / name).string());
        cell_files[i] = "cells/" + name;
        results[i] = std::move(report);
      } catch (const ConfigError& e) {
        skip_reasons[i] = sanitize_reason(e.what());
      } catch (const AllocationError& e) {
        skip_reasons[i] = sanitize_reason(e.what());
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        dead.store(true);
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  CompareOutcome outcome;
  struct Row {
    const MetricsReport* report;
    double attn_mean;
    double out_mean;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (results[i].has_value()) {
      outcome.reports.push_back(*results[i]);
    } else {
      const Cell& cell = cells[i];
      outcome.skipped.push_back(policy_name(cell.kind) + "," +
                                std::to_string(cell.budget) + "," +
                                std::to_string(cell.seed) + "," +
                                skip_reasons[i]);
    }
  }
  rows.reserve(outcome.reports.size());
  for (const MetricsReport& r : outcome.reports) {
    rows.push_back({&r, layer_mean(r.attn_loss),
                    r.out_loss.empty()
                        ? std::numeric_limits<double>::infinity()
                        : layer_mean(r.out_loss)});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.attn_mean != b.attn_mean) return a.attn_mean < b.attn_mean;
    if (a.out_mean != b.out_mean) return a.out_mean < b.out_mean;
    if (a.report->policy != b.report->policy) {
      return a.report->policy < b.report->policy;
    }
    if (a.report->budget != b.report->budget) {
      return a.report->budget < b.report->budget;
    }
    return a.report->seed < b.report->seed;
  });

  std::ostringstream summary;
  summary << "# columns: policy,budget,b_bound,seed,lmba_mean,attn_loss_mean,"
             "attn_loss_secondary_mean,out_loss_mean,needle_retention\n";
  for (const Row& row : rows) {
    const MetricsReport& r = *row.report;
    summary << r.policy << ',' << r.budget << ','
            << (r.b_bound >= 0 ? std::to_string(r.b_bound) : std::string())
            << ',' << r.seed << ',' << shortest_double(layer_mean(r.lmba))
            << ',' << shortest_double(row.attn_mean) << ','
            << shortest_double(layer_mean(r.attn_loss_secondary)) << ',';
    if (!r.out_loss.empty()) summary << shortest_double(row.out_mean);
    summary << ',';
    if (r.needle_retention >= 0.0) {
      summary << shortest_double(r.needle_retention);
    }
    summary << '\n';
  }
  outcome.summary_csv = summary.str();

  std::ostringstream skipped;
  skipped << "# columns: policy,budget,seed,reason\n";
  for (const std::string& row : outcome.skipped) skipped << row << '\n';

  ordered_json manifest =
      manifest_header("compare", config, *contexts.at(unique_seeds.front()));
  manifest["policies"] = config.policies;
  manifest["budgets"] = config.budgets;
  manifest["b_bound"] = config.b_bound;
  manifest["seeds"] = config.seeds;
  manifest["sink_count"] = config.policy.sink_count;
  manifest["recent_fraction"] = config.policy.recent_fraction;
  manifest["pool_kernel"] = config.policy.pool_kernel;
  manifest["pyramid_min_ratio"] = config.policy.pyramid_min_ratio;
  manifest["format"] = config.format;
  manifest["cells_total"] = cells.size();
  manifest["cells_written"] = outcome.reports.size();
  manifest["cells_skipped"] = outcome.skipped.size();
  if (config.source != "toy") {
    std::vector<std::string> digests;
    for (std::uint64_t s : unique_seeds) {
      digests.push_back(hex64(contexts.at(s)->trace_digest));
    }
    manifest["trace_checksums"] = digests;
  }
  std::vector<std::string> outputs;
  for (const std::string& f : cell_files) {
    if (!f.empty()) outputs.push_back(f);
  }
  outputs.push_back("skipped.csv");
  outputs.push_back("summary.csv");
  manifest["outputs"] = outputs;
  outcome.manifest_json = manifest.dump(2) + "\n";

  write_file(out_dir / "summary.csv", outcome.summary_csv);
  write_file(out_dir / "skipped.csv", skipped.str());
  write_file(out_dir / "manifest.json", outcome.manifest_json);
  return outcome;
}

NeedleOutcome run_needle(const ExperimentConfig& config) {
  check_format(config.format);
  check_axes(config);
  if (config.with_lmbo) {
    throw CapabilityError(
        "needle scans synthesize attention traces, which cannot support LMBO");
  }
  const std::vector<PolicyKind> kinds = parse_policies(config.policies);
  if (config.needle_depths.empty()) {
    throw ConfigError("no needle depths configured");
  }
  for (double d : config.needle_depths) {
    if (!(d >= 0.0) || !(d < 1.0)) {
      throw ConfigError("needle depths must lie in [0, 1)");
    }
  }
  if (config.needle_lengths.empty()) {
    throw ConfigError("no needle lengths configured");
  }
  for (int n : config.needle_lengths) {
    if (n <= config.window) {
      throw ConfigError("needle lengths must exceed the window " +
                        std::to_string(config.window));
    }
  }
  const double mass = config.needle_mass > 0.0 ? config.needle_mass : 0.8;
  if (mass > 1.0) throw ConfigError("needle_mass must lie in (0, 1]");
  const int budget = config.budgets.front();
  const std::uint64_t seed = config.seeds.front();

  struct NeedleRow {
    std::string policy;
    int seq_len;
    double depth;
    int position;
    double retention;
  };
  std::vector<NeedleRow> rows;
  std::vector<std::string> skipped;
  std::uint64_t digest_accum = 0;
  bool any_digest = false;

  for (int n : config.needle_lengths) {
    for (double depth : config.needle_depths) {
      const int prefix = n - config.window;
      const int position =
          std::min(prefix - 1, static_cast<int>(depth * prefix));
      TraceFile trace =
          generate_synth(synth_spec(config, n, seed, {position}, mass));
      digest_accum ^= trace_checksum(trace);
      any_digest = true;
      const std::vector<LayerState> states = states_from_trace(trace);
      for (PolicyKind kind : kinds) {
        PolicyConfig pc = config.policy;
        pc.b_bound = config.b_bound;
        try {
          PolicyResult pr = run_policy(kind, states, budget, pc);
          rows.push_back({policy_name(kind), n, depth, position,
                          needle_retention(pr.decision, {position})});
        } catch (const ConfigError& e) {
          skipped.push_back(policy_name(kind) + "," + std::to_string(n) + "," +
                            shortest_double(depth) + "," +
                            sanitize_reason(e.what()));
        } catch (const AllocationError& e) {
          skipped.push_back(policy_name(kind) + "," + std::to_string(n) + "," +
                            shortest_double(depth) + "," +
                            sanitize_reason(e.what()));
        }
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const NeedleRow& a, const NeedleRow& b) {
                     if (a.policy != b.policy) return a.policy < b.policy;
                     if (a.seq_len != b.seq_len) return a.seq_len < b.seq_len;
                     return a.depth < b.depth;
                   });

  NeedleOutcome outcome;
  outcome.skipped = skipped;
  std::ostringstream csv;
  csv << "# columns: policy,seq_len,depth,needle_position,retention\n";
  for (const NeedleRow& row : rows) {
    csv << row.policy << ',' << row.seq_len << ',' << shortest_double(row.depth)
        << ',' << row.position << ',' << shortest_double(row.retention)
        << '\n';
  }
  outcome.csv = csv.str();

  std::ostringstream skipped_csv;
  skipped_csv << "# columns: policy,seq_len,depth,reason\n";
  for (const std::string& row : skipped) skipped_csv << row << '\n';

  ordered_json manifest;
  manifest["version"] = "zigzagkv/1";
  manifest["command"] = "needle";
  manifest["source"] = "synth";
  manifest["num_layers"] = config.num_layers;
  manifest["num_heads"] = config.num_heads;
  manifest["window"] = config.window;
  manifest["kappa"] = config.kappa;
  manifest["eps"] = config.policy.eps;
  manifest["policies"] = config.policies;
  manifest["budget"] = budget;
  manifest["b_bound"] = config.b_bound;
  manifest["seed"] = seed;
  manifest["sink_count"] = config.policy.sink_count;
  manifest["recent_fraction"] = config.policy.recent_fraction;
  manifest["pool_kernel"] = config.policy.pool_kernel;
  manifest["pyramid_min_ratio"] = config.policy.pyramid_min_ratio;
  manifest["needle_lengths"] = config.needle_lengths;
  manifest["needle_depths"] = config.needle_depths;
  manifest["needle_mass"] = mass;
  if (any_digest) manifest["trace_checksums"] = {hex64(digest_accum)};
  manifest["outputs"] = {"needle.csv", "skipped.csv"};
  outcome.manifest_json = manifest.dump(2) + "\n";

  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);
  write_file(out_dir / "needle.csv", outcome.csv);
  write_file(out_dir / "skipped.csv", skipped_csv.str());
  write_file(out_dir / "manifest.json", outcome.manifest_json);
  return outcome;
}

}  // namespace zigzag
