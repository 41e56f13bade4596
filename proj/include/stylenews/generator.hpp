// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stylenews/corpus.hpp"
#include "stylenews/lm.hpp"
#include "stylenews/prompting.hpp"

namespace stylenews {

struct LossTraceEntry {
    int64_t step = 0;
    double loss = 0.0;
    double learning_rate = 0.0;
};

// One optimization pass = every prompt once, in seeded-shuffled order,
// grouped into train_batch_size batches. An end-of-text token is appended
// after the content when it fits, so sampling has a place to stop.
std::vector<LossTraceEntry> fine_tune(CausalLM& model, const std::vector<PromptSequence>& prompts,
                                      const GeneratorConfig& config, int passes = 1,
                                      uint64_t shuffle_salt = 0);

struct GeneratedRecord {
    NewsRecord record;
    bool degenerate = false;  // empty continuation; flagged, not thrown
};

// Samples a continuation after the separator, conditioned on the publisher.
// `item_index` seeds the per-item randomness, so a batch is reproducible
// item by item no matter how it is scheduled.
GeneratedRecord generate(CausalLM& model, const std::string& publisher,
                         const std::string& highlight, const GeneratorConfig& config,
                         uint64_t item_index = 0, const std::string& id = "gen-0");

struct BatchGenerateFailure {
    size_t index = 0;
    std::string error_code;
    std::string message;
};

struct BatchGenerateResult {
    std::vector<GeneratedRecord> records;
    std::vector<BatchGenerateFailure> failures;
};

// One machine record per input record, generated from its publisher and
// highlight. Per-item failures are collected, not thrown.
BatchGenerateResult batch_generate(CausalLM& model, const std::vector<NewsRecord>& records,
                                   const GeneratorConfig& config, uint64_t batch_salt = 0);

// Checkpoint directory: params.bin (snapshot blob), vocab.json and
// manifest.json (dims, config echo, vocabulary hash, special-token
// literals, step count).
void save_generator(const std::filesystem::path& dir, const TransformerLM& model,
                    const GeneratorConfig& config);
std::unique_ptr<TransformerLM> load_generator(const std::filesystem::path& dir,
                                              GeneratorConfig* config_out = nullptr);

void write_loss_trace(const std::filesystem::path& path,
                      const std::vector<LossTraceEntry>& trace, bool append);

}  // namespace stylenews
