// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zigzag/metrics.hpp"
#include "zigzag/policies.hpp"
#include "zigzag/trace.hpp"

namespace zigzag {

/// Everything an experiment run needs. Flat on purpose: every field maps to
/// one CLI flag and one key in a --config JSON file.
struct ExperimentConfig {
  // Where attention data comes from: "toy" (seeded transformer), "synth"
  // (generated trace), or "trace" (file at trace_path).
  std::string source = "toy";
  std::string trace_path;

  // Toy model shape (model_dim must equal num_heads * head_dim) and, for all
  // sources, the sequence length and observation window.
  int num_layers = 4;
  int num_heads = 2;
  int head_dim = 8;
  int model_dim = 16;
  int vocab_size = 64;
  int prompt_len = 64;
  int window = 8;

  // Synthetic-trace shape. Empty kappa defaults to a doubling ramp
  // min(2^l, prompt_len - window) across layers.
  std::vector<double> kappa;
  std::vector<int> needle_positions;
  double needle_mass = 0.0;

  // Sweep axes.
  std::vector<std::string> policies = {"full",   "streaming", "h2o",
                                       "snapkv", "pyramidkv", "zigzag"};
  std::vector<int> budgets = {32};
  int b_bound = -1;  // zigzag floor; -1 means budget / 2
  std::vector<std::uint64_t> seeds = {0};
  PolicyConfig policy;

  // Outputs.
  std::string out_dir = "out";
  std::string format = "json";  // per-report file format: "json" or "csv"
  bool with_lmbo = false;       // expensive; needs the toy source

  // Needle-retention command axes.
  std::vector<double> needle_depths = {0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<int> needle_lengths = {64, 128};
};

/// Parse a JSON object (field names match ExperimentConfig members) over the
/// given config. Unknown keys are a ConfigError.
void apply_config_json(ExperimentConfig& config, const std::string& json_text);

/// The concentration profile a config resolves to for sequence length n:
/// the configured kappa if present, else a doubling ramp min(2^l, n - w).
std::vector<double> resolved_kappa(const ExperimentConfig& config, int seq_len,
                                   int window);

/// Worker count for sweeps: ZIGZAG_THREADS if set (positive integer,
/// ConfigError otherwise), else the hardware concurrency.
int worker_count();

/// Measure the data itself, no eviction: per-layer LMBA, plus per-layer LMBO
/// when with_lmbo is set (toy source only; CapabilityError otherwise).
/// Writes profile.<format> and manifest.json under out_dir.
MetricsReport run_profile(const ExperimentConfig& config);

/// Result of a compare sweep. Reports appear in sweep order (policy-major,
/// then budget, then seed); rows in summary_csv are ranked by mean attention
/// loss, then mean output loss.
struct CompareOutcome {
  std::vector<MetricsReport> reports;
  std::vector<std::string> skipped;  // "policy,budget,seed,reason" rows
  std::string summary_csv;
  std::string manifest_json;
};

/// Run every policy x budget x seed cell, writing one report file per
/// successful cell under out_dir/cells, plus summary.csv, skipped.csv, and
/// manifest.json. Cells whose policy is infeasible at a budget (ConfigError
/// or AllocationError) are skipped and recorded; other errors propagate.
CompareOutcome run_compare(const ExperimentConfig& config);

/// Result of a needle-retention scan.
struct NeedleOutcome {
  std::string csv;  // policy,seq_len,depth,needle_position,retention rows
  std::vector<std::string> skipped;
  std::string manifest_json;
};

/// Plant one needle at each depth fraction of the evictable prefix for each
/// sequence length, then measure how well every policy retains it at the
/// first configured budget. Synthesizes its own traces; needle_mass 0 uses
/// the default 0.8. Writes needle.csv, skipped.csv, and manifest.json.
NeedleOutcome run_needle(const ExperimentConfig& config);

}  // namespace zigzag
