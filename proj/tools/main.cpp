// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the KV-cache compression simulator.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "zigzag/experiment.hpp"
#include "zigzag/metrics.hpp"
#include "zigzag/trace.hpp"

namespace {

using zigzag::ExperimentConfig;

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

/// Flags shared by the experiment subcommands. Values land in a staging
/// config; resolve() layers them over defaults and an optional --config file
/// so explicit flags always win.
struct CommonFlags {
  CLI::App* cmd = nullptr;
  ExperimentConfig staged;
  std::string config_path;

  void attach(CLI::App* c) {
    cmd = c;
    c->add_option("--config", config_path,
                  "JSON config file, merged under explicit flags");
    c->add_option("--source", staged.source,
                  "attention source: toy, synth, or trace");
    c->add_option("--trace", staged.trace_path,
                  "trace file path (with --source trace)");
    c->add_option("--layers", staged.num_layers, "number of layers");
    c->add_option("--heads", staged.num_heads, "heads per layer");
    c->add_option("--head-dim", staged.head_dim, "per-head dimension");
    c->add_option("--model-dim", staged.model_dim,
                  "model width (heads * head-dim)");
    c->add_option("--vocab", staged.vocab_size, "toy vocabulary size");
    c->add_option("-n,--seq-len,--prompt-len", staged.prompt_len,
                  "sequence length");
    c->add_option("-w,--window", staged.window, "observation window width");
    c->add_option("--kappa", staged.kappa,
                  "per-layer attention concentration (synth source)");
    c->add_option("--needle", staged.needle_positions,
                  "needle positions to pin (synth source)");
    c->add_option("--needle-mass", staged.needle_mass,
                  "attention mass pinned on the needles");
    c->add_option("--policy", staged.policies,
                  "policies to run (full, streaming, h2o, snapkv, pyramidkv, "
                  "zigzag)");
    c->add_option("-B,--budget", staged.budgets, "mean per-layer budgets");
    c->add_option("--b-bound", staged.b_bound,
                  "zigzag per-layer budget floor (-1 means budget/2)");
    c->add_option("--seed", staged.seeds, "seeds to sweep");
    c->add_option("-o,--out", staged.out_dir, "output directory");
    c->add_option("--format", staged.format, "report file format: json or csv");
    c->add_flag("--with-lmbo", staged.with_lmbo,
                "also measure per-layer LMBO (toy source only)");
    c->add_option("--sink-count", staged.policy.sink_count,
                  "streaming attention sinks");
    c->add_option("--recent-fraction", staged.policy.recent_fraction,
                  "h2o share of budget spent on recency");
    c->add_option("--pool-kernel", staged.policy.pool_kernel,
                  "importance max-pool width (odd)");
    c->add_option("--pyramid-min-ratio", staged.policy.pyramid_min_ratio,
                  "pyramid top-layer budget share");
    c->add_option("--eps", staged.policy.eps, "attention mass threshold");
    c->add_option("--needle-depth", staged.needle_depths,
                  "needle depth fractions of the evictable prefix");
    c->add_option("--needle-length", staged.needle_lengths,
                  "sequence lengths for the needle scan");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (cmd->count("--config") > 0) {
      std::ifstream in(config_path);
      if (!in) throw zigzag::IoError("cannot read config file: " + config_path);
      std::stringstream buffer;
      buffer << in.rdbuf();
      zigzag::apply_config_json(cfg, buffer.str());
    }
    const auto seen = [this](const char* name) {
      return cmd->count(name) > 0;
    };
    if (seen("--source")) cfg.source = staged.source;
    if (seen("--trace")) cfg.trace_path = staged.trace_path;
    if (seen("--layers")) cfg.num_layers = staged.num_layers;
    if (seen("--heads")) cfg.num_heads = staged.num_heads;
    if (seen("--head-dim")) cfg.head_dim = staged.head_dim;
    if (seen("--model-dim")) cfg.model_dim = staged.model_dim;
    if (seen("--vocab")) cfg.vocab_size = staged.vocab_size;
    if (seen("--seq-len")) cfg.prompt_len = staged.prompt_len;
    if (seen("--window")) cfg.window = staged.window;
    if (seen("--kappa")) cfg.kappa = staged.kappa;
    if (seen("--needle")) cfg.needle_positions = staged.needle_positions;
    if (seen("--needle-mass")) cfg.needle_mass = staged.needle_mass;
    if (seen("--policy")) cfg.policies = staged.policies;
    if (seen("--budget")) cfg.budgets = staged.budgets;
    if (seen("--b-bound")) cfg.b_bound = staged.b_bound;
    if (seen("--seed")) cfg.seeds = staged.seeds;
    if (seen("--out")) cfg.out_dir = staged.out_dir;
    if (seen("--format")) cfg.format = staged.format;
    if (seen("--with-lmbo")) cfg.with_lmbo = staged.with_lmbo;
    if (seen("--sink-count")) cfg.policy.sink_count = staged.policy.sink_count;
    if (seen("--recent-fraction")) {
      cfg.policy.recent_fraction = staged.policy.recent_fraction;
    }
    if (seen("--pool-kernel")) {
      cfg.policy.pool_kernel = staged.policy.pool_kernel;
    }
    if (seen("--pyramid-min-ratio")) {
      cfg.policy.pyramid_min_ratio = staged.policy.pyramid_min_ratio;
    }
    if (seen("--eps")) cfg.policy.eps = staged.policy.eps;
    if (seen("--needle-depth")) cfg.needle_depths = staged.needle_depths;
    if (seen("--needle-length")) cfg.needle_lengths = staged.needle_lengths;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"KV-cache compression engine and eviction-policy simulator"};
  app.require_subcommand(1);

  CLI::App* profile = app.add_subcommand(
      "profile", "Measure per-layer attention concentration (LMBA/LMBO)");
  CommonFlags profile_flags;
  profile_flags.attach(profile);

  CLI::App* compare = app.add_subcommand(
      "compare", "Sweep policies x budgets x seeds and rank the results");
  CommonFlags compare_flags;
  compare_flags.attach(compare);

  CLI::App* needle = app.add_subcommand(
      "needle", "Needle-retention scan over depths and sequence lengths");
  CommonFlags needle_flags;
  needle_flags.attach(needle);

  CLI::App* gen = app.add_subcommand(
      "gen-trace", "Generate a synthetic attention trace file");
  CommonFlags gen_flags;
  gen_flags.attach(gen);
  std::string gen_out;
  gen->add_option("--out-file", gen_out, "trace file to write")->required();

  CLI::App* validate = app.add_subcommand(
      "validate-trace", "Check a trace file and print its summary");
  std::string validate_path;
  validate->add_option("--trace", validate_path, "trace file to check")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (profile->parsed()) {
      ExperimentConfig cfg = profile_flags.resolve();
      zigzag::MetricsReport report = zigzag::run_profile(cfg);
      std::cout << "profile of " << cfg.source << " source: " << report.num_layers
                << " layers, " << report.num_heads << " heads, seq_len "
                << report.seq_len << ", window " << report.window << "\n";
      std::cout << "lmba:";
      for (double v : report.lmba) std::cout << ' ' << zigzag::shortest_double(v);
      std::cout << "\n";
      if (!report.lmbo.empty()) {
        std::cout << "lmbo:";
        for (int v : report.lmbo) std::cout << ' ' << v;
        std::cout << "\n";
      }
      std::cout << "wrote " << cfg.out_dir << "/profile." << cfg.format
                << "\n";
    } else if (compare->parsed()) {
      ExperimentConfig cfg = compare_flags.resolve();
      zigzag::CompareOutcome outcome = zigzag::run_compare(cfg);
      std::cout << "compare: " << outcome.reports.size() << " cells written, "
                << outcome.skipped.size() << " skipped -> " << cfg.out_dir
                << "\n";
      std::istringstream rows(outcome.summary_csv);
      std::string line;
      std::getline(rows, line);  // header
      if (std::getline(rows, line)) std::cout << "best: " << line << "\n";
    } else if (needle->parsed()) {
      ExperimentConfig cfg = needle_flags.resolve();
      zigzag::NeedleOutcome outcome = zigzag::run_needle(cfg);
      std::cout << "needle scan -> " << cfg.out_dir << "/needle.csv ("
                << outcome.skipped.size() << " skipped)\n";
    } else if (gen->parsed()) {
      ExperimentConfig cfg = gen_flags.resolve();
      zigzag::SynthSpec spec;
      spec.num_layers = cfg.num_layers;
      spec.num_heads = cfg.num_heads;
      spec.seq_len = cfg.prompt_len;
      spec.window = cfg.window;
      spec.seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();
      spec.kappa = zigzag::resolved_kappa(cfg, cfg.prompt_len, cfg.window);
      spec.needle_positions = cfg.needle_positions;
      spec.needle_mass = cfg.needle_mass;
      zigzag::TraceFile trace = zigzag::generate_synth(spec);
      zigzag::save_trace(trace, gen_out);
      std::cout << "wrote " << gen_out << ": " << trace.num_layers
                << " layers, " << trace.num_heads << " heads, seq_len "
                << trace.seq_len << ", window " << trace.window
                << ", checksum " << hex64(zigzag::trace_checksum(trace))
                << "\n";
    } else if (validate->parsed()) {
      zigzag::TraceFile trace = zigzag::load_trace(validate_path);
      std::cout << "trace OK: " << trace.num_layers << " layers, "
                << trace.num_heads << " heads, seq_len " << trace.seq_len
                << ", window " << trace.window << ", checksum "
                << hex64(zigzag::trace_checksum(trace)) << "\n";
    }
  } catch (const zigzag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
