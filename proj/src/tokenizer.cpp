// SPDX-License-Identifier: Apache-2.0
#include "stylenews/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include "stylenews/errors.hpp"
#include "stylenews/serdes.hpp"

namespace stylenews {

using nlohmann::json;

Vocabulary::Vocabulary(SpecialTokens specials) : specials_(std::move(specials)) {
    start_pub_id_ = intern_(specials_.start_publication);
    end_pub_id_ = intern_(specials_.end_publication);
    sep_id_ = intern_(specials_.separator);
    unk_id_ = intern_(specials_.unknown);
    eot_id_ = intern_(specials_.end_of_text);
}

bool Vocabulary::is_special(TokenId id) const {
    return id == start_pub_id_ || id == end_pub_id_ || id == sep_id_ || id == unk_id_ ||
           id == eot_id_;
}

bool Vocabulary::is_frame_special(TokenId id) const {
    return id == start_pub_id_ || id == end_pub_id_ || id == sep_id_ || id == eot_id_;
}

TokenId Vocabulary::intern_(const std::string& word) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    const TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(word);
    index_.emplace(word, id);
    return id;
}

TokenId Vocabulary::encode_word(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? unk_id_ : it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
    if (id < 0 || id >= size())
        throw Error(errc::DimensionMismatch, "token id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode_text(const std::string& text) const {
    std::vector<TokenId> ids;
    for (const auto& w : split_words(text)) ids.push_back(encode_word(w));
    return ids;
}

void Vocabulary::add_text(const std::string& text) {
    for (const auto& w : split_words(text)) add_word(w);
}

void Vocabulary::add_word(const std::string& word) {
    if (frozen_) throw Error(errc::ConfigInvalid, "cannot grow a frozen vocabulary");
    intern_(word);
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out += ' ';
        out += word(ids[i]);
    }
    return out;
}

std::string Vocabulary::normalize_whitespace(const std::string& text) {
    std::string out;
    bool in_space = true;  // trims leading whitespace
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            in_space = false;
            out += c;
        }
    }
    return out;
}

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

uint64_t Vocabulary::content_hash() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& t : tokens_) {
        h ^= fnv1a(t);
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string Vocabulary::to_json() const {
    json j;
    j["specials"] = {{"start_publication", specials_.start_publication},
                     {"end_publication", specials_.end_publication},
                     {"separator", specials_.separator},
                     {"unknown", specials_.unknown},
                     {"end_of_text", specials_.end_of_text}};
    j["tokens"] = tokens_;
    j["frozen"] = frozen_;
    return j.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.contains("tokens") || !j.contains("specials"))
        throw Error(errc::CorruptCheckpoint, "invalid vocabulary file");
    SpecialTokens sp;
    sp.start_publication = j["specials"].value("start_publication", sp.start_publication);
    sp.end_publication = j["specials"].value("end_publication", sp.end_publication);
    sp.separator = j["specials"].value("separator", sp.separator);
    sp.unknown = j["specials"].value("unknown", sp.unknown);
    sp.end_of_text = j["specials"].value("end_of_text", sp.end_of_text);
    Vocabulary v(sp);
    for (const auto& t : j["tokens"]) v.intern_(t.get<std::string>());
    if (j.value("frozen", false)) v.freeze();
    return v;
}

}  // namespace stylenews
