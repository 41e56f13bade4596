// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "stylenews/rng.hpp"
#include "stylenews/tokenizer.hpp"

namespace stylenews {

// Read access to per-token embedding rows. Ids outside the table resolve to
// the unknown-token row, which is what lets the word graph handle tokens it
// never saw during training.
class EmbeddingSource {
public:
    virtual ~EmbeddingSource() = default;
    virtual int width() const = 0;
    virtual int rows() const = 0;
    virtual TokenId unknown_id() const = 0;
    virtual const double* row(TokenId id) const = 0;
    virtual uint64_t content_hash() const = 0;
    // Null unless this source supports in-place updates (unfrozen training).
    virtual double* mutable_row(TokenId) { return nullptr; }

protected:
    TokenId clamp_id(TokenId id) const {
        return (id < 0 || id >= rows()) ? unknown_id() : id;
    }
};

// Standalone table; used when embeddings are trained apart from the
// generator or in tests.
class OwnedEmbeddingTable : public EmbeddingSource {
public:
    OwnedEmbeddingTable(int rows, int width, TokenId unknown_id)
        : rows_(rows), width_(width), unknown_(unknown_id),
          data_(static_cast<size_t>(rows) * static_cast<size_t>(width), 0.0) {}

    int width() const override { return width_; }
    int rows() const override { return rows_; }
    TokenId unknown_id() const override { return unknown_; }
    const double* row(TokenId id) const override {
        return data_.data() + static_cast<size_t>(clamp_id(id)) * static_cast<size_t>(width_);
    }
    double* mutable_row(TokenId id) override {
        return data_.data() + static_cast<size_t>(clamp_id(id)) * static_cast<size_t>(width_);
    }
    uint64_t content_hash() const override;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    int rows_;
    int width_;
    TokenId unknown_;
    std::vector<double> data_;
};

// Undirected token graph over one document. One node per distinct token id;
// consecutive distinct tokens are joined by an edge. Repeats of a token
// merge into its node, but the original occurrence sequence is kept so
// pooling can weight a token by how often it occurs.
struct WordGraph {
    std::vector<TokenId> node_tokens;            // node index -> token id
    std::vector<std::vector<int>> neighbors;     // sorted node-index lists
    std::vector<int> occurrence_nodes;           // occurrence -> node index
    int hops = 1;

    int node_count() const { return static_cast<int>(node_tokens.size()); }
};

WordGraph build_graph(const std::vector<TokenId>& tokens, int hops);

struct DmConfig {
    int hops = 1;
    double dropout = 0.1;
    bool freeze_embeddings = true;
    // Contractually dropout sits after the linear layer (on the logits);
    // this flag moves it onto the pooled representation instead.
    bool dropout_on_pooled = false;
};

// The self-vs-neighbor mixing weight. Kept behind a shared_ptr together
// with its optimizer state so two discriminators can genuinely share it.
struct AlphaState {
    double raw = 0.0;  // alpha = sigmoid(raw), so alpha stays in (0,1)
    double adam_m = 0.0;
    double adam_v = 0.0;
    int64_t steps = 0;
};

struct DmParams {
    std::shared_ptr<EmbeddingSource> embeddings;
    std::shared_ptr<AlphaState> alpha_state;
    std::vector<double> w;  // class_count x width, row-major
    std::vector<double> b;  // class_count
    int width = 0;
    int class_count = 0;
    DmConfig config;

    double alpha() const;
    void set_alpha(double a);  // inverse-sigmoid into raw; test hook
    double w_at(int c, int j) const { return w[static_cast<size_t>(c) * width + j]; }
};

// Glorot-uniform head init; alpha raw starts at 0 (alpha = 0.5).
DmParams make_dm_params(std::shared_ptr<EmbeddingSource> embeddings, int class_count,
                        DmConfig config, uint64_t seed);

// `hops` synchronous rounds of
//   r_v <- (1 - alpha) * max_{u in n(v)} r_u + alpha * r_v
// starting from the embedding rows; an empty neighborhood contributes zeros.
std::vector<std::vector<double>> aggregate(const WordGraph& graph, const DmParams& params);

// Sum of final node representations over token occurrences (a token
// occurring k times contributes k of its node's vector).
std::vector<double> pool(const WordGraph& graph,
                         const std::vector<std::vector<double>>& node_reps);

// Affine head; inverted dropout applied only when training (mask drawn from
// rng, required in that case).
std::vector<double> predict(const std::vector<double>& pooled, const DmParams& params,
                            bool training = false, Rng* rng = nullptr);

// Log-sum-exp stabilized -ln softmax(logits)[label].
double cross_entropy(const std::vector<double>& logits, int label);

std::vector<double> softmax(const std::vector<double>& logits);

// Whole forward pass for one document.
std::vector<double> dm_logits(const std::vector<TokenId>& tokens, const DmParams& params,
                              bool training = false, Rng* rng = nullptr);

struct DmGradients {
    double alpha_raw = 0.0;
    std::vector<double> w;
    std::vector<double> b;
    // node-token id -> accumulated embedding-row gradient (only when unfrozen)
    std::vector<std::pair<TokenId, std::vector<double>>> embedding_rows;
    double loss = 0.0;
};

struct DmBatch {
    std::vector<std::vector<TokenId>> sequences;
    std::vector<int> labels;
    std::vector<double> weights;  // per-item loss weights; empty = all 1
};

// Mean cross-entropy over the batch plus its gradient w.r.t. alpha_raw, W,
// b (and embedding rows when unfrozen). Dropout masks are drawn from `rng`
// when training.
DmGradients dm_gradients(const DmBatch& batch, const DmParams& params, bool training = false,
                         Rng* rng = nullptr);

// Adam state for the head (W and b flattened; alpha's state lives in
// AlphaState so it can be shared).
struct DmAdamState {
    std::vector<double> m;
    std::vector<double> v;
    int64_t steps = 0;
};

struct DmOptimConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One optimizer step on mean cross-entropy; returns the batch loss.
double dm_train_step(const DmBatch& batch, DmParams& params, DmAdamState& adam,
                     const DmOptimConfig& optim, bool training_dropout = true,
                     Rng* rng = nullptr);

// Parameter/optimizer blobs and a manifest; directory layout:
//   params.bin  adam.bin  manifest.json
void save_dm(const std::filesystem::path& dir, const DmParams& params, const DmAdamState& adam);
void load_dm(const std::filesystem::path& dir, DmParams& params, DmAdamState& adam);

}  // namespace stylenews
