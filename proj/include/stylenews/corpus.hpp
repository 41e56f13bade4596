// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stylenews/tokenizer.hpp"

namespace stylenews {

enum class Source { H, M, Unknown };
enum class Split { Train, Val, Test };

std::string to_string(Source s);
std::string to_string(Split s);
Source source_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct NewsRecord {
    std::string id;
    std::string publisher;
    std::string highlight;
    std::string content;
    Source source = Source::Unknown;
    Split split = Split::Train;

    bool operator==(const NewsRecord&) const = default;
};

struct CorpusSplit {
    std::vector<std::string> sampled;
    std::vector<std::string> unsampled;
    uint64_t seed = 0;
    double ratio = 0.0;
};

struct DatasetStats {
    std::map<std::string, size_t> counts_per_split;  // "TRAIN"/"VAL"/"TEST"
    size_t publisher_classes = 0;
    double avg_content_tokens = 0.0;
    double avg_highlight_tokens = 0.0;
    size_t total_records = 0;

    std::string to_json() const;
};

enum class CorpusFormat { Jsonl };

// One JSON object per line with fields id, publisher, highlight, content,
// source ("H"|"M"|"UNKNOWN"), split ("TRAIN"|"VAL"|"TEST"). Lines starting
// with '#' are comments and are skipped (output files put their manifest
// hash there).
std::vector<NewsRecord> load_corpus(const std::filesystem::path& path,
                                    CorpusFormat format = CorpusFormat::Jsonl);
void save_corpus(const std::filesystem::path& path, const std::vector<NewsRecord>& records,
                 const std::string& manifest_hash = "");

std::string record_to_json_line(const NewsRecord& r);
NewsRecord record_from_json_line(const std::string& line, size_t line_number);

// Partition of the given records' ids into sampled / unsampled groups.
// |sampled| = round(ratio * total); deterministic in (records order, seed).
CorpusSplit split_sampled(const std::vector<NewsRecord>& records, double ratio, uint64_t seed);

// Keep records whose publisher is among the k most frequent
// (ties broken by lexicographic publisher name). Input order preserved.
std::vector<NewsRecord> filter_top_publishers(const std::vector<NewsRecord>& records, int k);

DatasetStats compute_stats(const std::vector<NewsRecord>& records);

// Human TRAIN records with source H (the pool the training schedule consumes).
std::vector<NewsRecord> human_train_records(const std::vector<NewsRecord>& records);

// Bundled desk-scale corpus: two publishers with disjoint template
// vocabularies. `total` records are split 80/10/10 into TRAIN/VAL/TEST,
// publishers alternating so every split stays balanced.
std::vector<NewsRecord> make_toy_corpus(int total = 200, uint64_t seed = 13);

// Marker words characteristic of one toy publisher (used to check that
// conditioning on a publisher actually steers generation).
std::vector<std::string> toy_marker_words(const std::string& publisher);
std::vector<std::string> toy_publishers();

}  // namespace stylenews
