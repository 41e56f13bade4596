// SPDX-License-Identifier: Apache-2.0
#include "stylenews/wordgraph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "stylenews/errors.hpp"
#include "stylenews/serdes.hpp"

namespace stylenews {

using nlohmann::json;

uint64_t OwnedEmbeddingTable::content_hash() const {
    return fnv1a(data_.data(), data_.size() * sizeof(double));
}

WordGraph build_graph(const std::vector<TokenId>& tokens, int hops) {
    if (tokens.empty()) throw Error(errc::EmptySequence, "cannot build a graph of no tokens");
    if (hops < 1) throw Error(errc::ConfigInvalid, "hop count must be >= 1");

    WordGraph g;
    g.hops = hops;
    std::unordered_map<TokenId, int> node_of;
    g.occurrence_nodes.reserve(tokens.size());
    for (TokenId t : tokens) {
        auto [it, inserted] = node_of.emplace(t, g.node_count());
        if (inserted) g.node_tokens.push_back(t);
        g.occurrence_nodes.push_back(it->second);
    }

    g.neighbors.assign(static_cast<size_t>(g.node_count()), {});
    for (size_t i = 0; i + 1 < g.occurrence_nodes.size(); ++i) {
        const int u = g.occurrence_nodes[i];
        const int v = g.occurrence_nodes[i + 1];
        if (u == v) continue;  // consecutive identical tokens: no self-loop
        g.neighbors[static_cast<size_t>(u)].push_back(v);
        g.neighbors[static_cast<size_t>(v)].push_back(u);
    }
    for (auto& nb : g.neighbors) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    return g;
}

double DmParams::alpha() const { return 1.0 / (1.0 + std::exp(-alpha_state->raw)); }

void DmParams::set_alpha(double a) {
    if (!(a > 0.0 && a < 1.0))
        throw Error(errc::ConfigInvalid, "alpha must be in (0,1) for raw-space assignment");
    alpha_state->raw = std::log(a / (1.0 - a));
}

DmParams make_dm_params(std::shared_ptr<EmbeddingSource> embeddings, int class_count,
                        DmConfig config, uint64_t seed) {
    if (class_count < 1) throw Error(errc::ConfigInvalid, "class count must be >= 1");
    if (!(config.dropout >= 0.0 && config.dropout < 1.0))
        throw Error(errc::ConfigInvalid, "dropout must be in [0,1)");
    DmParams p;
    p.embeddings = std::move(embeddings);
    p.alpha_state = std::make_shared<AlphaState>();
    p.width = p.embeddings->width();
    p.class_count = class_count;
    p.config = config;
    p.w.assign(static_cast<size_t>(class_count) * static_cast<size_t>(p.width), 0.0);
    p.b.assign(static_cast<size_t>(class_count), 0.0);

    Rng rng = Rng::derive(seed, "dm/glorot_head");
    const double limit = std::sqrt(6.0 / static_cast<double>(p.width + class_count));
    for (auto& x : p.w) x = rng.uniform(-limit, limit);
    return p;
}

namespace {

struct ForwardCache {
    WordGraph graph;
    // reps[k][v] is the node representation after k rounds, k = 0..hops
    std::vector<std::vector<std::vector<double>>> reps;
    // argmax[k-1][v][j]: index into neighbors[v] that won the max at round k,
    // or -1 for an empty neighborhood
    std::vector<std::vector<std::vector<int>>> argmax;
    std::vector<double> pooled_raw;
    std::vector<double> pooled;  // after optional dropout-on-pooled
    std::vector<double> logits_pre;
    std::vector<double> logits;
    std::vector<double> mask;  // inverted-dropout mask, empty when unused
};

std::vector<double> draw_mask(size_t n, double rate, Rng* rng) {
    if (rng == nullptr)
        throw Error(errc::ConfigInvalid, "training-time dropout requires an rng");
    std::vector<double> mask(n);
    const double keep = 1.0 - rate;
    for (auto& m : mask) m = rng->next_double() < keep ? 1.0 / keep : 0.0;
    return mask;
}

ForwardCache dm_forward(const std::vector<TokenId>& tokens, const DmParams& params,
                        bool training, Rng* rng) {
    ForwardCache fc;
    fc.graph = build_graph(tokens, params.config.hops);
    const int n = fc.graph.node_count();
    const int d = params.width;
    const double a = params.alpha();

    fc.reps.resize(static_cast<size_t>(params.config.hops) + 1);
    fc.reps[0].resize(static_cast<size_t>(n));
    for (int v = 0; v < n; ++v) {
        const double* e = params.embeddings->row(fc.graph.node_tokens[static_cast<size_t>(v)]);
        fc.reps[0][static_cast<size_t>(v)].assign(e, e + d);
    }

    fc.argmax.resize(static_cast<size_t>(params.config.hops));
    for (int k = 1; k <= params.config.hops; ++k) {
        const auto& prev = fc.reps[static_cast<size_t>(k - 1)];
        auto& cur = fc.reps[static_cast<size_t>(k)];
        auto& amx = fc.argmax[static_cast<size_t>(k - 1)];
        cur.resize(static_cast<size_t>(n));
        amx.assign(static_cast<size_t>(n), std::vector<int>(static_cast<size_t>(d), -1));
        for (int v = 0; v < n; ++v) {
            const auto& nb = fc.graph.neighbors[static_cast<size_t>(v)];
            auto& out = cur[static_cast<size_t>(v)];
            out.assign(static_cast<size_t>(d), 0.0);
            for (int j = 0; j < d; ++j) {
                double mx = 0.0;  // empty neighborhood pools to zero
                int arg = -1;
                for (size_t ni = 0; ni < nb.size(); ++ni) {
                    const double val = prev[static_cast<size_t>(nb[ni])][static_cast<size_t>(j)];
                    if (ni == 0 || val > mx) {
                        mx = val;
                        arg = static_cast<int>(ni);
                    }
                }
                amx[static_cast<size_t>(v)][static_cast<size_t>(j)] = arg;
                out[static_cast<size_t>(j)] =
                    (1.0 - a) * mx + a * prev[static_cast<size_t>(v)][static_cast<size_t>(j)];
            }
        }
    }

    // pooling: one contribution per occurrence
    fc.pooled_raw.assign(static_cast<size_t>(d), 0.0);
    const auto& final_reps = fc.reps[static_cast<size_t>(params.config.hops)];
    for (int node : fc.graph.occurrence_nodes)
        for (int j = 0; j < d; ++j)
            fc.pooled_raw[static_cast<size_t>(j)] +=
                final_reps[static_cast<size_t>(node)][static_cast<size_t>(j)];

    const bool use_dropout = training && params.config.dropout > 0.0;
    fc.pooled = fc.pooled_raw;
    if (use_dropout && params.config.dropout_on_pooled) {
        fc.mask = draw_mask(static_cast<size_t>(d), params.config.dropout, rng);
        for (int j = 0; j < d; ++j) fc.pooled[static_cast<size_t>(j)] *= fc.mask[static_cast<size_t>(j)];
    }

    fc.logits_pre.assign(static_cast<size_t>(params.class_count), 0.0);
    for (int c = 0; c < params.class_count; ++c) {
        double acc = params.b[static_cast<size_t>(c)];
        for (int j = 0; j < d; ++j) acc += params.w_at(c, j) * fc.pooled[static_cast<size_t>(j)];
        fc.logits_pre[static_cast<size_t>(c)] = acc;
    }

    fc.logits = fc.logits_pre;
    if (use_dropout && !params.config.dropout_on_pooled) {
        fc.mask = draw_mask(static_cast<size_t>(params.class_count), params.config.dropout, rng);
        for (int c = 0; c < params.class_count; ++c)
            fc.logits[static_cast<size_t>(c)] *= fc.mask[static_cast<size_t>(c)];
    }
    return fc;
}

}  // namespace

std::vector<std::vector<double>> aggregate(const WordGraph& graph, const DmParams& params) {
    const int n = graph.node_count();
    const int d = params.width;
    const double a = params.alpha();

    std::vector<std::vector<double>> prev(static_cast<size_t>(n));
    for (int v = 0; v < n; ++v) {
        const double* e = params.embeddings->row(graph.node_tokens[static_cast<size_t>(v)]);
        prev[static_cast<size_t>(v)].assign(e, e + d);
    }
    for (int k = 1; k <= graph.hops; ++k) {
        std::vector<std::vector<double>> cur(static_cast<size_t>(n),
                                             std::vector<double>(static_cast<size_t>(d), 0.0));
        for (int v = 0; v < n; ++v) {
            const auto& nb = graph.neighbors[static_cast<size_t>(v)];
            for (int j = 0; j < d; ++j) {
                double mx = 0.0;
                for (size_t ni = 0; ni < nb.size(); ++ni) {
                    const double val = prev[static_cast<size_t>(nb[ni])][static_cast<size_t>(j)];
                    if (ni == 0 || val > mx) mx = val;
                }
                cur[static_cast<size_t>(v)][static_cast<size_t>(j)] =
                    (1.0 - a) * mx + a * prev[static_cast<size_t>(v)][static_cast<size_t>(j)];
            }
        }
        prev = std::move(cur);
    }
    return prev;
}

std::vector<double> pool(const WordGraph& graph,
                         const std::vector<std::vector<double>>& node_reps) {
    if (node_reps.size() != static_cast<size_t>(graph.node_count()))
        throw Error(errc::DimensionMismatch, "node representations do not cover the graph");
    const size_t d = node_reps.empty() ? 0 : node_reps[0].size();
    std::vector<double> out(d, 0.0);
    for (int node : graph.occurrence_nodes)
        for (size_t j = 0; j < d; ++j) out[j] += node_reps[static_cast<size_t>(node)][j];
    return out;
}

std::vector<double> predict(const std::vector<double>& pooled, const DmParams& params,
                            bool training, Rng* rng) {
    if (static_cast<int>(pooled.size()) != params.width)
        throw Error(errc::DimensionMismatch,
                    "pooled vector has width " + std::to_string(pooled.size()) + ", expected " +
                        std::to_string(params.width));
    std::vector<double> in = pooled;
    const bool use_dropout = training && params.config.dropout > 0.0;
    if (use_dropout && params.config.dropout_on_pooled) {
        auto mask = draw_mask(in.size(), params.config.dropout, rng);
        for (size_t j = 0; j < in.size(); ++j) in[j] *= mask[j];
    }
    std::vector<double> logits(static_cast<size_t>(params.class_count), 0.0);
    for (int c = 0; c < params.class_count; ++c) {
        double acc = params.b[static_cast<size_t>(c)];
        for (int j = 0; j < params.width; ++j) acc += params.w_at(c, j) * in[static_cast<size_t>(j)];
        logits[static_cast<size_t>(c)] = acc;
    }
    if (use_dropout && !params.config.dropout_on_pooled) {
        auto mask = draw_mask(logits.size(), params.config.dropout, rng);
        for (size_t c = 0; c < logits.size(); ++c) logits[c] *= mask[c];
    }
    return logits;
}

double cross_entropy(const std::vector<double>& logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw Error(errc::InvalidLabel, "label " + std::to_string(label) + " out of range");
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - mx);
    return std::log(sum) - (logits[static_cast<size_t>(label)] - mx);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (auto& x : out) x /= sum;
    return out;
}

std::vector<double> dm_logits(const std::vector<TokenId>& tokens, const DmParams& params,
                              bool training, Rng* rng) {
    return dm_forward(tokens, params, training, rng).logits;
}

DmGradients dm_gradients(const DmBatch& batch, const DmParams& params, bool training, Rng* rng) {
    if (batch.sequences.empty()) throw Error(errc::EmptyInput, "empty batch");
    if (batch.sequences.size() != batch.labels.size())
        throw Error(errc::LengthMismatch, "batch sequences/labels size mismatch");
    if (!batch.weights.empty() && batch.weights.size() != batch.sequences.size())
        throw Error(errc::LengthMismatch, "batch weights size mismatch");

    const int d = params.width;
    const int nc = params.class_count;
    const double a = params.alpha();
    const double sig_prime = a * (1.0 - a);  // d alpha / d raw

    DmGradients g;
    g.w.assign(params.w.size(), 0.0);
    g.b.assign(params.b.size(), 0.0);
    std::unordered_map<TokenId, std::vector<double>> emb_grads;

    double weight_total = 0.0;
    for (size_t i = 0; i < batch.sequences.size(); ++i)
        weight_total += batch.weights.empty() ? 1.0 : batch.weights[i];
    if (weight_total <= 0.0) throw Error(errc::ConfigInvalid, "batch weights sum to zero");

    for (size_t item = 0; item < batch.sequences.size(); ++item) {
        const double item_w = (batch.weights.empty() ? 1.0 : batch.weights[item]) / weight_total;
        ForwardCache fc = dm_forward(batch.sequences[item], params, training, rng);
        const int label = batch.labels[item];
        g.loss += item_w * cross_entropy(fc.logits, label);

        // d loss / d logits
        std::vector<double> dlogits = softmax(fc.logits);
        dlogits[static_cast<size_t>(label)] -= 1.0;
        for (auto& x : dlogits) x *= item_w;

        if (!fc.mask.empty() && !params.config.dropout_on_pooled)
            for (int c = 0; c < nc; ++c) dlogits[static_cast<size_t>(c)] *= fc.mask[static_cast<size_t>(c)];

        std::vector<double> dpooled(static_cast<size_t>(d), 0.0);
        for (int c = 0; c < nc; ++c) {
            const double dc = dlogits[static_cast<size_t>(c)];
            g.b[static_cast<size_t>(c)] += dc;
            for (int j = 0; j < d; ++j) {
                g.w[static_cast<size_t>(c) * d + j] += dc * fc.pooled[static_cast<size_t>(j)];
                dpooled[static_cast<size_t>(j)] += dc * params.w_at(c, j);
            }
        }
        if (!fc.mask.empty() && params.config.dropout_on_pooled)
            for (int j = 0; j < d; ++j) dpooled[static_cast<size_t>(j)] *= fc.mask[static_cast<size_t>(j)];

        // back through pooling: every occurrence of a node feeds its gradient
        const int n = fc.graph.node_count();
        std::vector<std::vector<double>> dreps(static_cast<size_t>(n),
                                               std::vector<double>(static_cast<size_t>(d), 0.0));
        for (int node : fc.graph.occurrence_nodes)
            for (int j = 0; j < d; ++j)
                dreps[static_cast<size_t>(node)][static_cast<size_t>(j)] +=
                    dpooled[static_cast<size_t>(j)];

        // back through the aggregation rounds
        for (int k = params.config.hops; k >= 1; --k) {
            const auto& prev = fc.reps[static_cast<size_t>(k - 1)];
            const auto& amx = fc.argmax[static_cast<size_t>(k - 1)];
            std::vector<std::vector<double>> dprev(
                static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(d), 0.0));
            for (int v = 0; v < n; ++v) {
                const auto& nb = fc.graph.neighbors[static_cast<size_t>(v)];
                for (int j = 0; j < d; ++j) {
                    const double dr = dreps[static_cast<size_t>(v)][static_cast<size_t>(j)];
                    if (dr == 0.0) continue;
                    const int arg = amx[static_cast<size_t>(v)][static_cast<size_t>(j)];
                    const double mx =
                        arg < 0 ? 0.0
                                : prev[static_cast<size_t>(nb[static_cast<size_t>(arg)])]
                                      [static_cast<size_t>(j)];
                    g.alpha_raw += dr *
                                   (prev[static_cast<size_t>(v)][static_cast<size_t>(j)] - mx) *
                                   sig_prime;
                    dprev[static_cast<size_t>(v)][static_cast<size_t>(j)] += a * dr;
                    if (arg >= 0)
                        dprev[static_cast<size_t>(nb[static_cast<size_t>(arg)])]
                             [static_cast<size_t>(j)] += (1.0 - a) * dr;
                }
            }
            dreps = std::move(dprev);
        }

        if (!params.config.freeze_embeddings) {
            for (int v = 0; v < n; ++v) {
                const TokenId tok = fc.graph.node_tokens[static_cast<size_t>(v)];
                auto& acc = emb_grads[tok];
                if (acc.empty()) acc.assign(static_cast<size_t>(d), 0.0);
                for (int j = 0; j < d; ++j)
                    acc[static_cast<size_t>(j)] += dreps[static_cast<size_t>(v)][static_cast<size_t>(j)];
            }
        }
    }

    for (auto& [tok, vec] : emb_grads) g.embedding_rows.emplace_back(tok, std::move(vec));
    std::sort(g.embedding_rows.begin(), g.embedding_rows.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    for (double x : g.w)
        if (!std::isfinite(x)) throw Error(errc::NonFiniteGradient, "non-finite head gradient");
    if (!std::isfinite(g.alpha_raw) || !std::isfinite(g.loss))
        throw Error(errc::NonFiniteGradient, "non-finite gradient or loss");
    return g;
}

namespace {

void adam_update(double& param, double grad, double& m, double& v, int64_t step,
                 const DmOptimConfig& o) {
    m = o.beta1 * m + (1.0 - o.beta1) * grad;
    v = o.beta2 * v + (1.0 - o.beta2) * grad * grad;
    const double mhat = m / (1.0 - std::pow(o.beta1, static_cast<double>(step)));
    const double vhat = v / (1.0 - std::pow(o.beta2, static_cast<double>(step)));
    param -= o.learning_rate * (mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * param);
}

}  // namespace

double dm_train_step(const DmBatch& batch, DmParams& params, DmAdamState& adam,
                     const DmOptimConfig& optim, bool training_dropout, Rng* rng) {
    DmGradients g = dm_gradients(batch, params, training_dropout, rng);

    const size_t head_size = params.w.size() + params.b.size();
    if (adam.m.size() != head_size) {
        adam.m.assign(head_size, 0.0);
        adam.v.assign(head_size, 0.0);
        adam.steps = 0;
    }
    ++adam.steps;
    for (size_t i = 0; i < params.w.size(); ++i)
        adam_update(params.w[i], g.w[i], adam.m[i], adam.v[i], adam.steps, optim);
    for (size_t i = 0; i < params.b.size(); ++i)
        adam_update(params.b[i], g.b[i], adam.m[params.w.size() + i], adam.v[params.w.size() + i],
                    adam.steps, optim);

    auto& al = *params.alpha_state;
    ++al.steps;
    // no weight decay on the mixing weight: decaying raw toward 0 just pulls
    // alpha toward 0.5, which is not a regularization anyone asked for
    DmOptimConfig alpha_optim = optim;
    alpha_optim.weight_decay = 0.0;
    adam_update(al.raw, g.alpha_raw, al.adam_m, al.adam_v, al.steps, alpha_optim);

    if (!params.config.freeze_embeddings) {
        for (auto& [tok, grad] : g.embedding_rows) {
            double* row = params.embeddings->mutable_row(tok);
            if (row == nullptr)
                throw Error(errc::ConfigInvalid,
                            "unfrozen embeddings require a mutable embedding table");
            // plain SGD on embedding rows; Adam state per row is not kept
            for (int j = 0; j < params.width; ++j)
                row[j] -= optim.learning_rate * grad[static_cast<size_t>(j)];
        }
    }
    return g.loss;
}

void save_dm(const std::filesystem::path& dir, const DmParams& params, const DmAdamState& adam) {
    std::filesystem::create_directories(dir);
    std::vector<double> blob;
    blob.push_back(params.alpha_state->raw);
    blob.insert(blob.end(), params.w.begin(), params.w.end());
    blob.insert(blob.end(), params.b.begin(), params.b.end());
    write_doubles(dir / "params.bin", blob);

    std::vector<double> opt;
    opt.push_back(params.alpha_state->adam_m);
    opt.push_back(params.alpha_state->adam_v);
    opt.push_back(static_cast<double>(params.alpha_state->steps));
    opt.push_back(static_cast<double>(adam.steps));
    opt.insert(opt.end(), adam.m.begin(), adam.m.end());
    opt.insert(opt.end(), adam.v.begin(), adam.v.end());
    write_doubles(dir / "adam.bin", opt);

    json manifest;
    manifest["width"] = params.width;
    manifest["class_count"] = params.class_count;
    manifest["hops"] = params.config.hops;
    manifest["alpha"] = params.alpha();
    manifest["dropout"] = params.config.dropout;
    manifest["dropout_on_pooled"] = params.config.dropout_on_pooled;
    manifest["frozen_embeddings"] = params.config.freeze_embeddings;
    manifest["embedding_hash"] = to_hex(params.embeddings->content_hash());
    write_text(dir / "manifest.json", manifest.dump(2));
}

void load_dm(const std::filesystem::path& dir, DmParams& params, DmAdamState& adam) {
    json manifest = json::parse(read_text(dir / "manifest.json"), nullptr, false);
    if (manifest.is_discarded())
        throw Error(errc::CorruptCheckpoint, "bad manifest in " + dir.string());
    if (manifest["width"].get<int>() != params.width ||
        manifest["class_count"].get<int>() != params.class_count)
        throw Error(errc::CorruptCheckpoint, "checkpoint shape mismatch in " + dir.string());
    params.config.hops = manifest["hops"].get<int>();
    params.config.dropout = manifest["dropout"].get<double>();
    params.config.dropout_on_pooled = manifest["dropout_on_pooled"].get<bool>();
    params.config.freeze_embeddings = manifest["frozen_embeddings"].get<bool>();

    const auto blob = read_doubles(dir / "params.bin");
    if (blob.size() != 1 + params.w.size() + params.b.size())
        throw Error(errc::CorruptCheckpoint, "parameter blob size mismatch in " + dir.string());
    params.alpha_state->raw = blob[0];
    std::copy(blob.begin() + 1, blob.begin() + 1 + static_cast<std::ptrdiff_t>(params.w.size()),
              params.w.begin());
    std::copy(blob.end() - static_cast<std::ptrdiff_t>(params.b.size()), blob.end(),
              params.b.begin());

    const auto opt = read_doubles(dir / "adam.bin");
    const size_t head_size = params.w.size() + params.b.size();
    if (opt.size() != 4 + 2 * head_size)
        throw Error(errc::CorruptCheckpoint, "optimizer blob size mismatch in " + dir.string());
    params.alpha_state->adam_m = opt[0];
    params.alpha_state->adam_v = opt[1];
    params.alpha_state->steps = static_cast<int64_t>(opt[2]);
    adam.steps = static_cast<int64_t>(opt[3]);
    adam.m.assign(opt.begin() + 4, opt.begin() + 4 + static_cast<std::ptrdiff_t>(head_size));
    adam.v.assign(opt.begin() + 4 + static_cast<std::ptrdiff_t>(head_size), opt.end());
}

}  // namespace stylenews
