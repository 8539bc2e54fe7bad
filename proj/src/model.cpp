// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#include "zigzag/model.hpp"

#include "zigzag/rng.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace zigzag {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void fill_uniform(Matrix& m, std::mt19937_64& rng, double bound) {
    // Row-major fill order so the weight stream is part of the contract.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = uniform_range(rng, -bound, bound);
        }
    }
}

void check_config(const ModelConfig& cfg) {
    if (cfg.num_layers < 1 || cfg.num_heads < 1 || cfg.head_dim < 1 || cfg.vocab_size < 1) {
        throw ConfigError("model config: all dimensions must be >= 1");
    }
    if (cfg.model_dim != cfg.num_heads * cfg.head_dim) {
        throw ConfigError("model config: model_dim " + std::to_string(cfg.model_dim) +
                          " != num_heads*head_dim " +
                          std::to_string(cfg.num_heads * cfg.head_dim));
    }
}

Vector embed_token(const ToyModel& model, int token, int position) {
    if (token < 0 || token >= model.config.vocab_size) {
        throw ConfigError("token id " + std::to_string(token) + " outside vocab of " +
                          std::to_string(model.config.vocab_size));
    }
    return model.embedding.row(token).transpose() +
           positional_encoding(position, model.config.model_dim);
}

}  // namespace

ToyModel build_model(const ModelConfig& cfg) {
    check_config(cfg);
    ToyModel model;
    model.config = cfg;
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
    std::mt19937_64 rng(cfg.seed);

    // Fixed draw order: embedding, then per layer, per head: Wq, Wk, Wv, Wo.
    model.embedding.resize(cfg.vocab_size, cfg.model_dim);
    fill_uniform(model.embedding, rng, bound);

    model.wq.resize(cfg.num_layers);
    model.wk.resize(cfg.num_layers);
    model.wv.resize(cfg.num_layers);
    model.wo.resize(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        for (int h = 0; h < cfg.num_heads; ++h) {
            Matrix q(cfg.model_dim, cfg.head_dim), k(cfg.model_dim, cfg.head_dim),
                v(cfg.model_dim, cfg.head_dim), o(cfg.head_dim, cfg.model_dim);
            fill_uniform(q, rng, bound);
            fill_uniform(k, rng, bound);
            fill_uniform(v, rng, bound);
            fill_uniform(o, rng, bound);
            model.wq[l].push_back(std::move(q));
            model.wk[l].push_back(std::move(k));
            model.wv[l].push_back(std::move(v));
            model.wo[l].push_back(std::move(o));
        }
    }
    return model;
}

Vector positional_encoding(int position, int model_dim) {
    Vector pe(model_dim);
    for (int j = 0; j < model_dim; ++j) {
        const double exponent = static_cast<double>(2 * (j / 2)) / model_dim;
        const double angle = position / std::pow(10000.0, exponent);
        pe[j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return pe;
}

PrefillResult prefill(const ToyModel& model, const std::vector<int>& tokens, int w) {
    const int n = static_cast<int>(tokens.size());
    if (n == 0) {
        throw ValueError("prefill: empty token list");
    }
    if (w < 1 || w > n) {
        throw ConfigError("prefill: window " + std::to_string(w) + " outside [1, " +
                          std::to_string(n) + "]");
    }
    const ModelConfig& cfg = model.config;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

    Matrix x(n, cfg.model_dim);
    for (int t = 0; t < n; ++t) {
        x.row(t) = embed_token(model, tokens[t], t).transpose();
    }

    PrefillResult result;
    result.layers.resize(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerState& state = result.layers[l];
        state.layer = l;
        Matrix attn_out = Matrix::Zero(n, cfg.model_dim);
        for (int h = 0; h < cfg.num_heads; ++h) {
            Matrix q = matmul(x, model.wq[l][h]);
            Matrix k = matmul(x, model.wk[l][h]);
            Matrix v = matmul(x, model.wv[l][h]);
            Matrix scores = matmul(q, Matrix(k.transpose())) * scale;
            for (int r = 0; r < n - 1; ++r) {
                scores.row(r).tail(n - 1 - r).setConstant(kNegInf);
            }
            Matrix attn = softmax_rows(scores);
            attn_out += matmul(matmul(attn, v), model.wo[l][h]);
            state.keys.push_back(k);
            state.values.push_back(v);
            state.attn.push_back(attn.bottomRows(w));
            state.all_query_sums.push_back(attn.colwise().sum().transpose());
        }
        state.hidden = attn_out.row(n - 1).transpose();
        x += attn_out;
    }
    result.logits = matmul(Matrix(x.row(n - 1)), Matrix(model.embedding.transpose()))
                        .row(0)
                        .transpose();
    return result;
}

std::vector<KVCache> caches_from_prefill(const std::vector<LayerState>& states) {
    std::vector<KVCache> caches;
    caches.reserve(states.size());
    for (const LayerState& state : states) {
        KVCache cache;
        cache.layer = state.layer;
        cache.heads.resize(state.keys.size());
        const int n = static_cast<int>(state.keys.empty() ? 0 : state.keys[0].rows());
        cache.capacity = n;
        for (size_t h = 0; h < state.keys.size(); ++h) {
            for (int p = 0; p < n; ++p) {
                KVEntry e;
                e.position = p;
                e.key = state.keys[h].row(p).transpose();
                e.value = state.values[h].row(p).transpose();
                cache.heads[h].entries.push_back(std::move(e));
            }
        }
        caches.push_back(std::move(cache));
    }
    return caches;
}

DecodeResult decode_step(const ToyModel& model, std::vector<KVCache>& caches, int token,
                         int position) {
    const ModelConfig& cfg = model.config;
    if (static_cast<int>(caches.size()) != cfg.num_layers) {
        throw ShapeError("decode_step: expected " + std::to_string(cfg.num_layers) +
                         " layer caches, got " + std::to_string(caches.size()));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

    Vector x = embed_token(model, token, position);
    DecodeResult result;
    result.layer_outputs.resize(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        KVCache& cache = caches[l];
        if (static_cast<int>(cache.heads.size()) != cfg.num_heads) {
            throw ShapeError("decode_step: layer " + std::to_string(l) + " cache has " +
                             std::to_string(cache.heads.size()) + " heads");
        }
        Vector y = Vector::Zero(cfg.model_dim);
        for (int h = 0; h < cfg.num_heads; ++h) {
            auto& entries = cache.heads[h].entries;
            if (!entries.empty() && entries.back().position >= position) {
                throw CacheError("decode_step: position " + std::to_string(position) +
                                 " collides with cached position " +
                                 std::to_string(entries.back().position));
            }
            KVEntry e;
            e.position = position;
            e.key = model.wk[l][h].transpose() * x;
            e.value = model.wv[l][h].transpose() * x;
            entries.push_back(std::move(e));

            const int m = static_cast<int>(entries.size());
            Vector q = model.wq[l][h].transpose() * x;
            Matrix scores(1, m);
            for (int i = 0; i < m; ++i) {
                scores(0, i) = q.dot(entries[i].key) * scale;
            }
            Matrix attn = softmax_rows(scores);
            Vector ctx = Vector::Zero(cfg.head_dim);
            for (int i = 0; i < m; ++i) {
                ctx += attn(0, i) * entries[i].value;
            }
            y += model.wo[l][h].transpose() * ctx;
        }
        result.layer_outputs[l] = y;
        x += y;
    }
    result.logits = model.embedding * x;
    return result;
}

PartialForwardResult partial_forward(const ToyModel& model, const std::vector<LayerState>& states,
                                     const std::vector<int>& tokens,
                                     const EvictionDecision& decision) {
    const ModelConfig& cfg = model.config;
    const int n = static_cast<int>(tokens.size());
    if (n == 0) {
        throw ValueError("partial_forward: empty token list");
    }
    if (static_cast<int>(states.size()) != cfg.num_layers ||
        decision.num_layers() != cfg.num_layers) {
        throw ShapeError("partial_forward: states/decision do not cover every layer");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

    Vector x = embed_token(model, tokens[n - 1], n - 1);
    PartialForwardResult result;
    result.layer_outputs.resize(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        const LayerState& state = states[l];
        if (decision.kept[l].size() != state.keys.size()) {
            throw ShapeError("partial_forward: decision head count mismatch at layer " +
                             std::to_string(l));
        }
        Vector y = Vector::Zero(cfg.model_dim);
        for (size_t h = 0; h < state.keys.size(); ++h) {
            const std::vector<int>& kept = decision.kept[l][h];
            if (kept.empty()) {
                continue;  // no retained entries: this head contributes nothing
            }
            Vector q = model.wq[l][h].transpose() * x;
            Matrix scores(1, static_cast<int>(kept.size()));
            for (size_t i = 0; i < kept.size(); ++i) {
                const int pos = kept[i];
                if (pos < 0 || pos >= state.keys[h].rows()) {
                    throw CacheError("partial_forward: kept position " + std::to_string(pos) +
                                     " outside prefill cache");
                }
                scores(0, static_cast<int>(i)) =
                    q.dot(state.keys[h].row(pos).transpose()) * scale;
            }
            Matrix attn = softmax_rows(scores);
            Vector ctx = Vector::Zero(cfg.head_dim);
            for (size_t i = 0; i < kept.size(); ++i) {
                ctx += attn(0, static_cast<int>(i)) * state.values[h].row(kept[i]).transpose();
            }
            y += model.wo[l][h].transpose() * ctx;
        }
        result.layer_outputs[l] = y;
        x += y;
    }
    result.logits = model.embedding * x;
    return result;
}

std::vector<int> make_tokens(std::uint64_t seed, int count, int vocab_size) {
    if (count < 1 || vocab_size < 1) {
        throw ConfigError("make_tokens: count and vocab_size must be >= 1");
    }
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<int> tokens(count);
    for (int i = 0; i < count; ++i) {
        tokens[i] = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(vocab_size)));
    }
    return tokens;
}

}  // namespace zigzag
