// SPDX-License-Identifier: Apache-2.0
#include "stylenews/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "stylenews/errors.hpp"
#include "stylenews/rng.hpp"

namespace stylenews {

using nlohmann::json;

std::string to_string(Source s) {
    switch (s) {
        case Source::H: return "H";
        case Source::M: return "M";
        default: return "UNKNOWN";
    }
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "TRAIN";
        case Split::Val: return "VAL";
        default: return "TEST";
    }
}

Source source_from_string(const std::string& s) {
    if (s == "H") return Source::H;
    if (s == "M") return Source::M;
    if (s == "UNKNOWN") return Source::Unknown;
    throw Error(errc::MalformedRecord, "invalid source value: " + s);
}

Split split_from_string(const std::string& s) {
    if (s == "TRAIN") return Split::Train;
    if (s == "VAL") return Split::Val;
    if (s == "TEST") return Split::Test;
    throw Error(errc::MalformedRecord, "invalid split value: " + s);
}

std::string record_to_json_line(const NewsRecord& r) {
    json j;
    j["id"] = r.id;
    j["publisher"] = r.publisher;
    j["highlight"] = r.highlight;
    j["content"] = r.content;
    j["source"] = to_string(r.source);
    j["split"] = to_string(r.split);
    return j.dump();
}

NewsRecord record_from_json_line(const std::string& line, size_t line_number) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(errc::MalformedRecord,
                    "line " + std::to_string(line_number) + ": not a JSON object");
    NewsRecord r;
    if (!j.contains("id") || !j["id"].is_string())
        throw Error(errc::MalformedRecord,
                    "line " + std::to_string(line_number) + ": field 'id' missing or not a string");
    r.id = j["id"].get<std::string>();

    auto str_field = [&](const char* name, bool required) -> std::string {
        if (!j.contains(name)) {
            if (required)
                throw Error(errc::MissingField,
                            std::string("record '") + r.id + "' missing field '" + name + "'");
            return "";
        }
        if (!j[name].is_string())
            throw Error(errc::MalformedRecord, "line " + std::to_string(line_number) + ": field '" +
                                                   name + "' not a string");
        return j[name].get<std::string>();
    };

    r.publisher = str_field("publisher", false);
    r.highlight = str_field("highlight", false);
    r.content = str_field("content", true);
    if (r.content.empty())
        throw Error(errc::MissingField, "record '" + r.id + "' has empty 'content'");
    try {
        r.source = source_from_string(str_field("source", false).empty()
                                          ? "UNKNOWN"
                                          : j["source"].get<std::string>());
        r.split = split_from_string(j.contains("split") ? j["split"].get<std::string>() : "TRAIN");
    } catch (const Error& e) {
        throw Error(errc::MalformedRecord, "line " + std::to_string(line_number) + ": " + e.what());
    }
    return r;
}

std::vector<NewsRecord> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    (void)format;  // only JSONL today
    std::ifstream in(path);
    if (!in) throw Error(errc::FileNotFound, "cannot open corpus: " + path.string());
    std::vector<NewsRecord> records;
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty() || line[0] == '#') continue;
        records.push_back(record_from_json_line(line, line_number));
    }
    if (records.empty()) throw Error(errc::EmptyCorpus, "no records in " + path.string());
    return records;
}

void save_corpus(const std::filesystem::path& path, const std::vector<NewsRecord>& records,
                 const std::string& manifest_hash) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(errc::FileNotFound, "cannot open for write: " + path.string());
    if (!manifest_hash.empty()) out << "# manifest_hash=" << manifest_hash << "\n";
    for (const auto& r : records) out << record_to_json_line(r) << "\n";
}

CorpusSplit split_sampled(const std::vector<NewsRecord>& records, double ratio, uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw Error(errc::InvalidRatio, "ratio must be in (0,1), got " + std::to_string(ratio));
    if (records.size() < 2)
        throw Error(errc::TooFewRecords,
                    "need at least 2 records, got " + std::to_string(records.size()));
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);

    Rng rng = Rng::derive(seed, "corpus/split_sampled");
    rng.shuffle(ids);

    const auto n_sampled =
        static_cast<size_t>(std::llround(ratio * static_cast<double>(ids.size())));
    CorpusSplit split;
    split.seed = seed;
    split.ratio = ratio;
    split.sampled.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_sampled));
    split.unsampled.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_sampled), ids.end());
    std::sort(split.sampled.begin(), split.sampled.end());
    std::sort(split.unsampled.begin(), split.unsampled.end());
    return split;
}

std::vector<NewsRecord> filter_top_publishers(const std::vector<NewsRecord>& records, int k) {
    if (k < 1) throw Error(errc::ConfigInvalid, "k must be >= 1");
    std::unordered_map<std::string, size_t> counts;
    for (const auto& r : records) ++counts[r.publisher];

    std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<size_t>(k)) ranked.resize(static_cast<size_t>(k));

    std::unordered_set<std::string> keep;
    for (const auto& [name, _] : ranked) keep.insert(name);

    std::vector<NewsRecord> out;
    for (const auto& r : records)
        if (keep.count(r.publisher)) out.push_back(r);
    return out;
}

DatasetStats compute_stats(const std::vector<NewsRecord>& records) {
    if (records.empty()) throw Error(errc::EmptyCorpus, "cannot compute stats of empty corpus");
    DatasetStats st;
    st.total_records = records.size();
    st.counts_per_split["TRAIN"] = 0;
    st.counts_per_split["VAL"] = 0;
    st.counts_per_split["TEST"] = 0;
    std::unordered_set<std::string> publishers;
    size_t content_tokens = 0;
    size_t highlight_tokens = 0;
    for (const auto& r : records) {
        ++st.counts_per_split[to_string(r.split)];
        publishers.insert(r.publisher);
        content_tokens += Vocabulary::split_words(r.content).size();
        highlight_tokens += Vocabulary::split_words(r.highlight).size();
    }
    st.publisher_classes = publishers.size();
    st.avg_content_tokens =
        static_cast<double>(content_tokens) / static_cast<double>(records.size());
    st.avg_highlight_tokens =
        static_cast<double>(highlight_tokens) / static_cast<double>(records.size());
    return st;
}

std::string DatasetStats::to_json() const {
    json j;
    j["counts_per_split"] = counts_per_split;
    j["publisher_classes"] = publisher_classes;
    j["avg_content_tokens"] = avg_content_tokens;
    j["avg_highlight_tokens"] = avg_highlight_tokens;
    j["total_records"] = total_records;
    return j.dump(2);
}

std::vector<NewsRecord> human_train_records(const std::vector<NewsRecord>& records) {
    std::vector<NewsRecord> out;
    for (const auto& r : records)
        if (r.split == Split::Train && r.source == Source::H) out.push_back(r);
    return out;
}

namespace {

const std::vector<std::string>& alpha_clauses() {
    static const std::vector<std::string> clauses = {
        "harbor fleet docked quay",   "tide calm bay",         "gulls circle beacon",
        "ferry crossing delayed fog", "lighthouse keeper logs", "nets hauled catch salted",
        "pier repairs resume",        "skiff moored jetty",     "buoy marks channel",
        "trawler radios harbormaster"};
    return clauses;
}

const std::vector<std::string>& beta_clauses() {
    static const std::vector<std::string> clauses = {
        "canyon mesa dust haze",     "cactus bloom ridge",     "coyote tracks trail",
        "desert wind carves dunes",  "ranch cattle graze",     "arroyo runs dry",
        "sunset paints cliffs",      "mineral survey camp",    "tumbleweed rolls plateau",
        "vulture shadows butte"};
    return clauses;
}

std::vector<std::string> words_of(const std::vector<std::string>& clauses) {
    std::vector<std::string> words;
    std::unordered_set<std::string> seen;
    for (const auto& c : clauses)
        for (const auto& w : Vocabulary::split_words(c))
            if (seen.insert(w).second) words.push_back(w);
    return words;
}

}  // namespace

std::vector<std::string> toy_publishers() { return {"alpha-wire", "beta-herald"}; }

std::vector<std::string> toy_marker_words(const std::string& publisher) {
    if (publisher == "alpha-wire") {
        auto w = words_of(alpha_clauses());
        w.push_back("alpha");
        return w;
    }
    if (publisher == "beta-herald") {
        auto w = words_of(beta_clauses());
        w.push_back("beta");
        return w;
    }
    throw Error(errc::UnknownPublisher, "no toy template for publisher: " + publisher);
}

std::vector<NewsRecord> make_toy_corpus(int total, uint64_t seed) {
    std::vector<NewsRecord> records;
    records.reserve(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) {
        const bool is_alpha = (i % 2) == 0;
        const auto& clauses = is_alpha ? alpha_clauses() : beta_clauses();
        Rng rng = Rng::derive(seed, "toy/doc", static_cast<uint64_t>(i));

        NewsRecord r;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "toy-%04d", i);
        r.id = idbuf;
        r.publisher = is_alpha ? "alpha-wire" : "beta-herald";
        r.highlight = clauses[rng.below(clauses.size())];

        std::string content = is_alpha ? "alpha" : "beta";
        const int n_clauses = 3 + static_cast<int>(rng.below(3));
        for (int c = 0; c < n_clauses; ++c) {
            content += ' ';
            content += clauses[rng.below(clauses.size())];
            content += " .";
        }
        r.content = content;
        r.source = Source::H;

        const double frac = static_cast<double>(i) / static_cast<double>(total);
        r.split = frac < 0.8 ? Split::Train : (frac < 0.9 ? Split::Val : Split::Test);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace stylenews
