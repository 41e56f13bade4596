// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "stylenews/tokenizer.hpp"
#include "stylenews/wordgraph.hpp"

namespace stylenews {

enum class DecodeStrategy { Greedy, Nucleus };

struct GeneratorConfig {
    double learning_rate = 5e-5;
    int warmup_steps = 1000;
    double weight_decay = 0.01;
    int train_batch_size = 2;
    int generation_batch_size = 32;
    int max_length = 1024;  // l
    DecodeStrategy decode = DecodeStrategy::Nucleus;
    double nucleus_mass = 0.95;
    double temperature = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

// Minimal contract a generator backbone has to satisfy: a vocabulary, an
// embedding table the word graph can read, a next-token distribution, and
// a way to snapshot/restore every trainable byte. The desk-scale backbone
// below is a small trainable transformer; a bigger model plugs in the same
// way.
class CausalLM {
public:
    virtual ~CausalLM() = default;

    virtual const Vocabulary& vocab() const = 0;
    virtual int embedding_width() const = 0;
    virtual std::shared_ptr<EmbeddingSource> embedding_view() const = 0;

    // softmax over the full vocabulary given the prefix; sums to 1
    virtual std::vector<double> next_token_distribution(
        const std::vector<TokenId>& prefix) const = 0;

    // mean per-token negative log-likelihood without any update
    virtual double mean_nll(const std::vector<std::vector<TokenId>>& sequences) const = 0;

    // one optimizer step on the batch; returns the batch mean NLL
    virtual double train_batch(const std::vector<std::vector<TokenId>>& sequences,
                               const GeneratorConfig& config) = 0;

    virtual int64_t train_steps() const = 0;

    // parameters + optimizer moments + step counter, bit-exact
    virtual std::vector<double> snapshot() const = 0;
    virtual void restore(const std::vector<double>& blob) = 0;
};

struct LmDims {
    int d_model = 48;
    int n_layers = 2;
    int n_heads = 2;
    int max_context = 96;

    void validate() const;
};

// Pre-norm decoder-only transformer (RMSNorm, causal attention, ReLU MLP),
// double precision, no parallelism in the training path so identical seeds
// give identical bytes.
class TransformerLM : public CausalLM {
public:
    TransformerLM(Vocabulary vocab, LmDims dims, uint64_t seed);

    const Vocabulary& vocab() const override { return vocab_; }
    Vocabulary& mutable_vocab() { return vocab_; }
    int embedding_width() const override { return dims_.d_model; }
    const LmDims& dims() const { return dims_; }
    std::shared_ptr<EmbeddingSource> embedding_view() const override;

    std::vector<double> next_token_distribution(const std::vector<TokenId>& prefix) const override;
    double mean_nll(const std::vector<std::vector<TokenId>>& sequences) const override;
    double train_batch(const std::vector<std::vector<TokenId>>& sequences,
                       const GeneratorConfig& config) override;
    int64_t train_steps() const override { return step_; }

    std::vector<double> snapshot() const override;
    void restore(const std::vector<double>& blob) override;

    size_t parameter_count() const { return params_->size(); }

    // loss + gradient on one batch without updating; test hook for the
    // finite-difference checks
    double loss_and_gradients(const std::vector<std::vector<TokenId>>& sequences,
                              std::vector<double>& grad_out) const;
    std::vector<double>& raw_params() { return *params_; }

private:
    struct Offsets {
        size_t wte = 0, wpe = 0, head = 0;
        std::vector<size_t> wq, wk, wv, wo, w1, w2;
        size_t total = 0;
    };

    Vocabulary vocab_;
    LmDims dims_;
    Offsets off_;
    std::shared_ptr<std::vector<double>> params_;  // shared so embedding views stay valid
    std::vector<double> adam_m_, adam_v_;
    int64_t step_ = 0;

    void init_params_(uint64_t seed);
    std::vector<double> forward_logits_(const std::vector<TokenId>& tokens) const;
    double accumulate_gradients_(const std::vector<TokenId>& tokens, double scale,
                                 std::vector<double>& grad) const;
};

}  // namespace stylenews
