// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#include "zigzag/trace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "zigzag/rng.hpp"

namespace zigzag {

namespace {

using nlohmann::ordered_json;

void check_dims(int num_layers, int num_heads, int seq_len, int window,
                const char* what) {
  if (num_layers < 1 || num_heads < 1 || window < 1 || seq_len < 1) {
    throw ConfigError(std::string(what) + ": dimensions must be >= 1");
  }
  if (window > seq_len) {
    throw ConfigError(std::string(what) + ": window " +
                      std::to_string(window) + " exceeds seq_len " +
                      std::to_string(seq_len));
  }
}

int require_int(const nlohmann::json& obj, const char* key, int lineno) {
  if (!obj.contains(key) || !obj[key].is_number_integer()) {
    throw IoError("line " + std::to_string(lineno) + ": missing integer field '" +
                  key + "'");
  }
  return obj[key].get<int>();
}

}  // namespace

std::string shortest_double(double x) {
  // Shortest decimal form that parses back to the same double. %g may pick
  // exponent notation at low precision ("4e+01") where a higher precision
  // yields a shorter plain form ("40"), so scan all round-tripping
  // precisions and keep the shortest string.
  char buf[40];
  std::string best;
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x &&
        (best.empty() || std::strlen(buf) < best.size())) {
      best = buf;
    }
  }
  return best.empty() ? buf : best;
}

TraceFile load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file: " + path);

  TraceFile trace;
  std::string line;
  int lineno = 0;

  // Header line.
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty()) break;
  }
  if (line.empty()) throw IoError(path + ": empty trace file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("line " + std::to_string(lineno) + ": malformed header: " +
                  e.what());
  }
  if (!header.contains("version") || !header["version"].is_string()) {
    throw IoError("line " + std::to_string(lineno) + ": missing version field");
  }
  trace.version = header["version"].get<std::string>();
  if (trace.version != kTraceVersion) {
    throw IoError("line " + std::to_string(lineno) + ": unsupported version '" +
                  trace.version + "' (expected '" + kTraceVersion + "')");
  }
  trace.num_layers = require_int(header, "num_layers", lineno);
  trace.num_heads = require_int(header, "num_heads", lineno);
  trace.seq_len = require_int(header, "seq_len", lineno);
  trace.window = require_int(header, "window", lineno);
  try {
    check_dims(trace.num_layers, trace.num_heads, trace.seq_len, trace.window,
               "trace header");
  } catch (const ConfigError& e) {
    throw IoError("line " + std::to_string(lineno) + ": " + e.what());
  }

  const int L = trace.num_layers, H = trace.num_heads;
  const int n = trace.seq_len, w = trace.window;
  trace.rows.assign(L, std::vector<Matrix>(H, Matrix::Zero(w, n)));
  std::vector<bool> seen(static_cast<std::size_t>(L) * H * w, false);

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("line " + std::to_string(lineno) + ": malformed JSON: " +
                    e.what());
    }
    const int l = require_int(obj, "layer", lineno);
    const int h = require_int(obj, "head", lineno);
    const int r = require_int(obj, "row", lineno);
    if (l < 0 || l >= L || h < 0 || h >= H || r < 0 || r >= w) {
      throw IoError("line " + std::to_string(lineno) + ": indices (layer " +
                    std::to_string(l) + ", head " + std::to_string(h) +
                    ", row " + std::to_string(r) + ") out of range");
    }
    const std::size_t slot =
        (static_cast<std::size_t>(l) * H + h) * w + r;
    if (seen[slot]) {
      throw IoError("line " + std::to_string(lineno) + ": duplicate row (layer " +
                    std::to_string(l) + ", head " + std::to_string(h) +
                    ", row " + std::to_string(r) + ")");
    }
    if (!obj.contains("values") || !obj["values"].is_array() ||
        static_cast<int>(obj["values"].size()) != n) {
      throw IoError("line " + std::to_string(lineno) +
                    ": 'values' must be an array of " + std::to_string(n) +
                    " numbers");
    }
    const int valid = n - w + r + 1;  // causal frontier for this query row
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      const auto& v = obj["values"][c];
      if (!v.is_number()) {
        throw IoError("line " + std::to_string(lineno) + ": value " +
                      std::to_string(c) + " is not a number");
      }
      const double x = v.get<double>();
      if (!std::isfinite(x) || x < 0.0) {
        throw IoError("line " + std::to_string(lineno) + ": value " +
                      std::to_string(c) + " must be finite and >= 0");
      }
      if (c >= valid && x != 0.0) {
        throw IoError("line " + std::to_string(lineno) + ": padding at column " +
                      std::to_string(c) + " must be exactly 0 (layer " +
                      std::to_string(l) + ", head " + std::to_string(h) +
                      ", row " + std::to_string(r) + ")");
      }
      trace.rows[l][h](r, c) = x;
      if (c < valid) sum += x;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw IoError("line " + std::to_string(lineno) + ": row sum " +
                    shortest_double(sum) + " outside 1 +/- 1e-6 (layer " +
                    std::to_string(l) + ", head " + std::to_string(h) +
                    ", row " + std::to_string(r) + ")");
    }
    seen[slot] = true;
  }

  const auto missing = std::find(seen.begin(), seen.end(), false);
  if (missing != seen.end()) {
    const std::size_t idx = static_cast<std::size_t>(missing - seen.begin());
    const int l = static_cast<int>(idx / (static_cast<std::size_t>(H) * w));
    const int h = static_cast<int>((idx / w) % H);
    const int r = static_cast<int>(idx % w);
    throw IoError(path + ": missing attention row (layer " + std::to_string(l) +
                  ", head " + std::to_string(h) + ", row " + std::to_string(r) +
                  ")");
  }
  return trace;
}

void save_trace(const TraceFile& trace, const std::string& path) {
  check_dims(trace.num_layers, trace.num_heads, trace.seq_len, trace.window,
             "save_trace");
  if (static_cast<int>(trace.rows.size()) != trace.num_layers) {
    throw ShapeError("save_trace: rows cover " +
                     std::to_string(trace.rows.size()) + " layers, header says " +
                     std::to_string(trace.num_layers));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file: " + path);

  ordered_json header;
  header["version"] = kTraceVersion;
  header["num_layers"] = trace.num_layers;
  header["num_heads"] = trace.num_heads;
  header["seq_len"] = trace.seq_len;
  header["window"] = trace.window;
  out << header.dump() << '\n';

  for (int l = 0; l < trace.num_layers; ++l) {
    if (static_cast<int>(trace.rows[l].size()) != trace.num_heads) {
      throw ShapeError("save_trace: layer " + std::to_string(l) +
                       " has the wrong head count");
    }
    for (int h = 0; h < trace.num_heads; ++h) {
      const Matrix& m = trace.rows[l][h];
      if (m.rows() != trace.window || m.cols() != trace.seq_len) {
        throw ShapeError("save_trace: layer " + std::to_string(l) + " head " +
                         std::to_string(h) + " matrix shape mismatch");
      }
      for (int r = 0; r < trace.window; ++r) {
        ordered_json obj;
        obj["layer"] = l;
        obj["head"] = h;
        obj["row"] = r;
        ordered_json values = ordered_json::array();
        for (int c = 0; c < trace.seq_len; ++c) values.push_back(m(r, c));
        obj["values"] = std::move(values);
        out << obj.dump() << '\n';
      }
    }
  }
  if (!out.good()) throw IoError("write failure on trace file: " + path);
}

std::vector<LayerState> states_from_trace(const TraceFile& trace) {
  check_dims(trace.num_layers, trace.num_heads, trace.seq_len, trace.window,
             "states_from_trace");
  if (static_cast<int>(trace.rows.size()) != trace.num_layers) {
    throw ShapeError("states_from_trace: layer count mismatch");
  }
  std::vector<LayerState> states(trace.num_layers);
  for (int l = 0; l < trace.num_layers; ++l) {
    if (static_cast<int>(trace.rows[l].size()) != trace.num_heads) {
      throw ShapeError("states_from_trace: head count mismatch at layer " +
                       std::to_string(l));
    }
    states[l].layer = l;
    states[l].attn = trace.rows[l];
  }
  return states;
}

TraceFile generate_synth(const SynthSpec& spec) {
  check_dims(spec.num_layers, spec.num_heads, spec.seq_len, spec.window,
             "generate_synth");
  if (spec.window >= spec.seq_len) {
    throw ConfigError("generate_synth: window must be smaller than seq_len");
  }
  std::vector<double> kappa = spec.kappa;
  if (kappa.size() == 1) {
    kappa.assign(spec.num_layers, kappa[0]);  // broadcast a single value
  }
  if (static_cast<int>(kappa.size()) != spec.num_layers) {
    throw ConfigError("generate_synth: kappa needs 1 or " +
                      std::to_string(spec.num_layers) + " values, got " +
                      std::to_string(kappa.size()));
  }
  for (double k : kappa) {
    if (!std::isfinite(k) || k < 0.0) {
      throw ConfigError("generate_synth: kappa values must be finite and >= 0");
    }
  }
  const int n = spec.seq_len, w = spec.window;
  const int prefix = n - w;
  if (!(spec.needle_mass >= 0.0) || !(spec.needle_mass <= 1.0)) {
    throw ConfigError("generate_synth: needle_mass must lie in [0, 1]");
  }
  if (spec.needle_positions.empty() && spec.needle_mass > 0.0) {
    throw ConfigError("generate_synth: needle_mass set without needle positions");
  }
  std::set<int> needle_set;
  for (int p : spec.needle_positions) {
    if (p < 0 || p >= prefix) {
      throw ConfigError("generate_synth: needle position " + std::to_string(p) +
                        " outside the evictable prefix [0, " +
                        std::to_string(prefix) + ")");
    }
    if (!needle_set.insert(p).second) {
      throw ConfigError("generate_synth: duplicate needle position " +
                        std::to_string(p));
    }
  }
  const double mu = spec.needle_positions.empty() ? 0.0 : spec.needle_mass;

  TraceFile trace;
  trace.num_layers = spec.num_layers;
  trace.num_heads = spec.num_heads;
  trace.seq_len = n;
  trace.window = w;
  trace.rows.assign(spec.num_layers,
                    std::vector<Matrix>(spec.num_heads, Matrix::Zero(w, n)));

  std::mt19937_64 rng(spec.seed);
  std::vector<int> available;
  available.reserve(prefix);

  for (int l = 0; l < spec.num_layers; ++l) {
    for (int h = 0; h < spec.num_heads; ++h) {
      // One shared hot set per (layer, head): drawn from the prefix outside
      // the needles, so window rows agree on which positions matter.
      available.clear();
      for (int p = 0; p < prefix; ++p) {
        if (!needle_set.count(p)) available.push_back(p);
      }
      const int hot_count =
          std::min(static_cast<int>(std::ceil(kappa[l])),
                   static_cast<int>(available.size()));
      for (int i = 0; i < hot_count; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(
                    uniform_below(rng, available.size() - i));
        std::swap(available[i], available[j]);
      }
      std::vector<int> hots(available.begin(), available.begin() + hot_count);
      std::sort(hots.begin(), hots.end());

      const double hot_mass = hot_count > 0 ? 0.9 * (1.0 - mu) : 0.0;
      const double uniform_mass = (1.0 - mu) - hot_mass;

      Matrix& rows = trace.rows[l][h];
      for (int r = 0; r < w; ++r) {
        const int valid = n - w + r + 1;
        Vector row = Vector::Zero(n);
        if (mu > 0.0) {
          const double share = mu / spec.needle_positions.size();
          for (int p : spec.needle_positions) row[p] += share;
        }
        if (hot_count > 0) {
          Vector weights(hot_count);
          for (int i = 0; i < hot_count; ++i) {
            weights[i] = 1.0 + 0.25 * uniform_unit(rng);
          }
          weights /= weights.sum();
          for (int i = 0; i < hot_count; ++i) {
            row[hots[i]] += hot_mass * weights[i];
          }
        }
        const double unif = uniform_mass / valid;
        for (int p = 0; p < valid; ++p) row[p] += unif;
        row.head(valid) /= row.head(valid).sum();  // pin the sum to 1 exactly
        rows.row(r) = row.transpose();
      }
    }
  }
  return trace;
}

std::uint64_t trace_checksum(const TraceFile& trace) {
  std::uint64_t hash = 14695981039346656037ULL;
  const auto feed_byte = [&hash](unsigned char b) {
    hash ^= b;
    hash *= 1099511628211ULL;
  };
  const auto feed_u64 = [&feed_byte](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) feed_byte(static_cast<unsigned char>(v >> (8 * i)));
  };
  for (char c : trace.version) feed_byte(static_cast<unsigned char>(c));
  feed_u64(static_cast<std::uint64_t>(trace.num_layers));
  feed_u64(static_cast<std::uint64_t>(trace.num_heads));
  feed_u64(static_cast<std::uint64_t>(trace.seq_len));
  feed_u64(static_cast<std::uint64_t>(trace.window));
  for (const auto& layer : trace.rows) {
    for (const Matrix& m : layer) {
      for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
          feed_u64(std::bit_cast<std::uint64_t>(m(r, c)));
        }
      }
    }
  }
  return hash;
}

std::string report_to_json_string(const MetricsReport& report) {
  ordered_json meta;
  meta["policy"] = report.policy;
  meta["source"] = report.source;
  meta["budget"] = report.budget;
  if (report.b_bound >= 0) {
    meta["b_bound"] = report.b_bound;
  } else {
    meta["b_bound"] = nullptr;
  }
  meta["seed"] = report.seed;
  meta["num_layers"] = report.num_layers;
  meta["num_heads"] = report.num_heads;
  meta["seq_len"] = report.seq_len;
  meta["window"] = report.window;

  ordered_json per_layer = ordered_json::object();
  if (!report.lmba.empty()) per_layer["lmba"] = report.lmba;
  if (!report.lmbo.empty()) per_layer["lmbo"] = report.lmbo;
  if (!report.attn_loss.empty()) per_layer["attn_loss"] = report.attn_loss;
  if (!report.attn_loss_secondary.empty()) {
    per_layer["attn_loss_secondary"] = report.attn_loss_secondary;
  }
  if (!report.out_loss.empty()) per_layer["out_loss"] = report.out_loss;

  ordered_json aggregate = ordered_json::object();
  if (!report.lmba.empty()) aggregate["lmba_mean"] = layer_mean(report.lmba);
  if (!report.lmbo.empty()) {
    std::vector<double> as_double(report.lmbo.begin(), report.lmbo.end());
    aggregate["lmbo_mean"] = layer_mean(as_double);
  }
  if (!report.attn_loss.empty()) {
    aggregate["attn_loss_mean"] = layer_mean(report.attn_loss);
  }
  if (!report.attn_loss_secondary.empty()) {
    aggregate["attn_loss_secondary_mean"] =
        layer_mean(report.attn_loss_secondary);
  }
  if (!report.out_loss.empty()) {
    aggregate["out_loss_mean"] = layer_mean(report.out_loss);
  }
  if (report.needle_retention >= 0.0) {
    aggregate["needle_retention"] = report.needle_retention;
  }

  ordered_json root;
  root["meta"] = std::move(meta);
  root["per_layer"] = std::move(per_layer);
  root["aggregate"] = std::move(aggregate);
  return root.dump(2) + "\n";
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "# columns: layer,metric,value\n";
  const int layers = static_cast<int>(
      std::max({report.lmba.size(), report.lmbo.size(), report.attn_loss.size(),
                report.attn_loss_secondary.size(), report.out_loss.size()}));
  for (int l = 0; l < layers; ++l) {
    if (l < static_cast<int>(report.lmba.size())) {
      out << l << ",lmba," << shortest_double(report.lmba[l]) << '\n';
    }
    if (l < static_cast<int>(report.lmbo.size())) {
      out << l << ",lmbo," << report.lmbo[l] << '\n';
    }
    if (l < static_cast<int>(report.attn_loss.size())) {
      out << l << ",attn_loss," << shortest_double(report.attn_loss[l]) << '\n';
    }
    if (l < static_cast<int>(report.attn_loss_secondary.size())) {
      out << l << ",attn_loss_secondary,"
          << shortest_double(report.attn_loss_secondary[l]) << '\n';
    }
    if (l < static_cast<int>(report.out_loss.size())) {
      out << l << ",out_loss," << shortest_double(report.out_loss[l]) << '\n';
    }
  }
  return out.str();
}

void emit_report(const MetricsReport& report, const std::string& format,
                 const std::string& path) {
  std::string payload;
  if (format == "json") {
    payload = report_to_json_string(report);
  } else if (format == "csv") {
    payload = report_to_csv(report);
  } else {
    throw ConfigError("emit_report: unknown format '" + format +
                      "' (expected json or csv)");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report file: " + path);
  out << payload;
  if (!out.good()) throw IoError("write failure on report file: " + path);
}

}  // namespace zigzag
