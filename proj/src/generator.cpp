// SPDX-License-Identifier: Apache-2.0
#include "stylenews/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "stylenews/errors.hpp"
#include "stylenews/serdes.hpp"

namespace stylenews {

using nlohmann::json;

std::vector<LossTraceEntry> fine_tune(CausalLM& model, const std::vector<PromptSequence>& prompts,
                                      const GeneratorConfig& config, int passes,
                                      uint64_t shuffle_salt) {
    config.validate();
    if (passes < 0) throw Error(errc::ConfigInvalid, "passes must be >= 0");
    if (prompts.empty()) throw Error(errc::EmptyTrainingSet, "no prompts to fine-tune on");

    const TokenId eot = model.vocab().end_of_text_id();
    std::vector<std::vector<TokenId>> sequences;
    sequences.reserve(prompts.size());
    for (const auto& p : prompts) {
        std::vector<TokenId> seq = p.token_ids;
        if (static_cast<int>(seq.size()) < config.max_length) seq.push_back(eot);
        sequences.push_back(std::move(seq));
    }

    std::vector<LossTraceEntry> trace;
    for (int pass = 0; pass < passes; ++pass) {
        std::vector<size_t> order(sequences.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng rng = Rng::derive(config.seed, "generator/shuffle", shuffle_salt,
                              static_cast<uint64_t>(pass));
        rng.shuffle(order);

        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.train_batch_size)) {
            std::vector<std::vector<TokenId>> batch;
            for (size_t i = start;
                 i < std::min(order.size(), start + static_cast<size_t>(config.train_batch_size));
                 ++i)
                batch.push_back(sequences[order[i]]);
            const double loss = model.train_batch(batch, config);
            const int64_t step = model.train_steps();
            const double warm =
                config.warmup_steps > 0
                    ? std::min(1.0, static_cast<double>(step) /
                                        static_cast<double>(config.warmup_steps))
                    : 1.0;
            trace.push_back({step, loss, config.learning_rate * warm});
        }
    }
    return trace;
}

namespace {

TokenId sample_token(const std::vector<double>& dist, const GeneratorConfig& config, Rng& rng) {
    const size_t v = dist.size();
    if (config.decode == DecodeStrategy::Greedy) {
        size_t best = 0;
        for (size_t i = 1; i < v; ++i)
            if (dist[i] > dist[best]) best = i;  // ties go to the lowest id
        return static_cast<TokenId>(best);
    }
    // nucleus: keep the smallest probability-sorted set reaching the mass,
    // renormalize, sample
    std::vector<size_t> order(v);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&dist](size_t a, size_t b) { return dist[a] > dist[b]; });
    double cum = 0.0;
    size_t keep = 0;
    while (keep < v) {
        cum += dist[order[keep]];
        ++keep;
        if (cum >= config.nucleus_mass) break;
    }
    const double u = rng.next_double() * cum;
    double acc = 0.0;
    for (size_t i = 0; i < keep; ++i) {
        acc += dist[order[i]];
        if (u < acc) return static_cast<TokenId>(order[i]);
    }
    return static_cast<TokenId>(order[keep - 1]);
}

std::vector<double> tempered(std::vector<double> dist, double temperature) {
    if (temperature == 1.0) return dist;
    double sum = 0.0;
    for (auto& p : dist) {
        p = std::pow(p, 1.0 / temperature);
        sum += p;
    }
    for (auto& p : dist) p /= sum;
    return dist;
}

}  // namespace

GeneratedRecord generate(CausalLM& model, const std::string& publisher,
                         const std::string& highlight, const GeneratorConfig& config,
                         uint64_t item_index, const std::string& id) {
    config.validate();
    const Vocabulary& vocab = model.vocab();
    const int effective_max = config.max_length;

    PromptSequence prompt = build_prompt(publisher, highlight, "", effective_max, vocab);

    std::vector<TokenId> tokens = prompt.token_ids;
    const int prompt_len = static_cast<int>(tokens.size());
    Rng rng = Rng::derive(config.seed, "generator/sample", item_index);
    const TokenId eot = vocab.end_of_text_id();

    while (static_cast<int>(tokens.size()) < effective_max) {
        auto dist = model.next_token_distribution(tokens);
        dist = tempered(std::move(dist), config.temperature);
        const TokenId next = sample_token(dist, config, rng);
        if (next == eot) break;
        tokens.push_back(next);
    }

    std::vector<TokenId> continuation(tokens.begin() + prompt_len, tokens.end());
    const auto content_tokens = strip_to_content(continuation, vocab);

    GeneratedRecord out;
    out.record.id = id;
    out.record.publisher = publisher;
    out.record.highlight = highlight;
    out.record.content = vocab.decode(content_tokens);
    out.record.source = Source::M;
    out.record.split = Split::Train;
    out.degenerate = content_tokens.empty();
    return out;
}

BatchGenerateResult batch_generate(CausalLM& model, const std::vector<NewsRecord>& records,
                                   const GeneratorConfig& config, uint64_t batch_salt) {
    BatchGenerateResult result;
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        try {
            auto gen = generate(model, r.publisher, r.highlight, config, batch_salt + i,
                                r.id + "#m");
            result.records.push_back(std::move(gen));
        } catch (const Error& e) {
            result.failures.push_back({i, e.code(), e.what()});
        }
    }
    return result;
}

void save_generator(const std::filesystem::path& dir, const TransformerLM& model,
                    const GeneratorConfig& config) {
    std::filesystem::create_directories(dir);
    write_doubles(dir / "params.bin", model.snapshot());
    write_text(dir / "vocab.json", model.vocab().to_json());

    json manifest;
    manifest["d_model"] = model.dims().d_model;
    manifest["n_layers"] = model.dims().n_layers;
    manifest["n_heads"] = model.dims().n_heads;
    manifest["max_context"] = model.dims().max_context;
    manifest["vocab_hash"] = to_hex(model.vocab().content_hash());
    manifest["train_steps"] = model.train_steps();
    manifest["parameter_count"] = model.parameter_count();
    const auto& sp = model.vocab().specials();
    manifest["special_tokens"] = {sp.start_publication, sp.end_publication, sp.separator,
                                  sp.unknown, sp.end_of_text};
    manifest["config"] = {{"learning_rate", config.learning_rate},
                          {"warmup_steps", config.warmup_steps},
                          {"weight_decay", config.weight_decay},
                          {"train_batch_size", config.train_batch_size},
                          {"generation_batch_size", config.generation_batch_size},
                          {"max_length", config.max_length},
                          {"decode", config.decode == DecodeStrategy::Greedy ? "GREEDY" : "NUCLEUS"},
                          {"nucleus_mass", config.nucleus_mass},
                          {"temperature", config.temperature},
                          {"seed", config.seed}};
    write_text(dir / "manifest.json", manifest.dump(2));
}

std::unique_ptr<TransformerLM> load_generator(const std::filesystem::path& dir,
                                              GeneratorConfig* config_out) {
    json manifest = json::parse(read_text(dir / "manifest.json"), nullptr, false);
    if (manifest.is_discarded())
        throw Error(errc::CorruptCheckpoint, "bad generator manifest in " + dir.string());

    Vocabulary vocab = Vocabulary::from_json(read_text(dir / "vocab.json"));
    if (to_hex(vocab.content_hash()) != manifest["vocab_hash"].get<std::string>())
        throw Error(errc::CorruptCheckpoint, "vocabulary hash mismatch in " + dir.string());

    LmDims dims;
    dims.d_model = manifest["d_model"].get<int>();
    dims.n_layers = manifest["n_layers"].get<int>();
    dims.n_heads = manifest["n_heads"].get<int>();
    dims.max_context = manifest["max_context"].get<int>();

    auto model = std::make_unique<TransformerLM>(std::move(vocab), dims, /*seed=*/0);
    model->restore(read_doubles(dir / "params.bin"));

    if (config_out != nullptr && manifest.contains("config")) {
        const auto& c = manifest["config"];
        config_out->learning_rate = c.value("learning_rate", config_out->learning_rate);
        config_out->warmup_steps = c.value("warmup_steps", config_out->warmup_steps);
        config_out->weight_decay = c.value("weight_decay", config_out->weight_decay);
        config_out->train_batch_size = c.value("train_batch_size", config_out->train_batch_size);
        config_out->generation_batch_size =
            c.value("generation_batch_size", config_out->generation_batch_size);
        config_out->max_length = c.value("max_length", config_out->max_length);
        config_out->decode = c.value("decode", "NUCLEUS") == std::string("GREEDY")
                                 ? DecodeStrategy::Greedy
                                 : DecodeStrategy::Nucleus;
        config_out->nucleus_mass = c.value("nucleus_mass", config_out->nucleus_mass);
        config_out->temperature = c.value("temperature", config_out->temperature);
        config_out->seed = c.value("seed", config_out->seed);
    }
    return model;
}

void write_loss_trace(const std::filesystem::path& path,
                      const std::vector<LossTraceEntry>& trace, bool append) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw Error(errc::FileNotFound, "cannot open loss trace: " + path.string());
    for (const auto& e : trace) {
        json j = {{"step", e.step}, {"loss", e.loss}, {"learning_rate", e.learning_rate}};
        out << j.dump() << "\n";
    }
}

}  // namespace stylenews
