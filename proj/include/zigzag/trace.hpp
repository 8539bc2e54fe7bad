// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zigzag/metrics.hpp"
#include "zigzag/model.hpp"
#include "zigzag/tensor.hpp"

namespace zigzag {

/// Version tag carried in the header line of every trace file.
inline constexpr const char* kTraceVersion = "zigzag-trace/1";

/// An attention trace: the last-w query rows of every head's attention
/// matrix, for every layer. rows[layer][head] is a window x seq_len matrix
/// whose rows are probability vectors over the positions visible to that
/// query; entries past the causal frontier are exactly zero.
struct TraceFile {
  std::string version = kTraceVersion;
  int num_layers = 0;
  int num_heads = 0;
  int seq_len = 0;
  int window = 0;
  std::vector<std::vector<Matrix>> rows;
};

/// Read a trace from newline-delimited JSON: one header object, then one
/// object per (layer, head, row). Throws IoError with the offending line and
/// indices on any structural or numeric violation.
TraceFile load_trace(const std::string& path);

/// Write a trace in the same newline-delimited JSON format. Values survive a
/// save/load round trip bit-for-bit.
void save_trace(const TraceFile& trace, const std::string& path);

/// Wrap trace rows as per-layer states so the metrics and policies can run
/// on external attention data. Keys, values, and full-query sums stay empty;
/// only attention-based functionality is available on such states.
std::vector<LayerState> states_from_trace(const TraceFile& trace);

/// Recipe for a synthetic trace with a controlled concentration profile.
/// kappa holds one concentration value per layer (or a single value
/// broadcast to all layers): roughly the number of positions a head needs to
/// cover 90% of its attention mass, so higher kappa means more diffuse
/// attention. Optional needle positions receive needle_mass split equally,
/// pinning known-important positions into every row.
struct SynthSpec {
  int num_layers = 4;
  int num_heads = 2;
  int seq_len = 128;
  int window = 8;
  std::uint64_t seed = 0;
  std::vector<double> kappa;
  std::vector<int> needle_positions;
  double needle_mass = 0.0;
};

/// Deterministically generate a synthetic trace from the spec. Each
/// (layer, head) draws one shared set of ceil(kappa) hot prefix positions;
/// every window row gives the hots 90% of the non-needle mass (with mild
/// per-row jitter) and spreads the rest uniformly over the visible prefix.
TraceFile generate_synth(const SynthSpec& spec);

/// Order-sensitive FNV-1a digest of the trace (dims plus every value's bit
/// pattern). Equal traces hash equal; any changed value changes the digest.
std::uint64_t trace_checksum(const TraceFile& trace);

/// Shortest decimal text that parses back to exactly the same double.
std::string shortest_double(double x);

/// Render a report as indented JSON. Serializing the same report twice
/// yields byte-identical output.
std::string report_to_json_string(const MetricsReport& report);

/// Render a report as long-format CSV: a "# columns: layer,metric,value"
/// header plus one line per (layer, metric) pair that was measured.
std::string report_to_csv(const MetricsReport& report);

/// Write a report to `path` as "json" or "csv". ConfigError on any other
/// format name, IoError if the file cannot be written.
void emit_report(const MetricsReport& report, const std::string& format,
                 const std::string& path);

}  // namespace zigzag
