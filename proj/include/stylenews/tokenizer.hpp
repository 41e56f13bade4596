// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace stylenews {

using TokenId = int;

// Special-token literals are configurable; these are the defaults.
struct SpecialTokens {
    std::string start_publication = "<|Start_Publication|>";
    std::string end_publication = "<|End_Publication|>";
    std::string separator = "<sep>";
    std::string unknown = "<UNK>";
    std::string end_of_text = "<|endoftext|>";
};

// Whitespace word-level vocabulary. While unfrozen, encode() grows the
// dictionary; once frozen, words outside the dictionary map to the
// unknown-token id. Ids are assigned in first-seen order, special tokens
// first, so a vocabulary built from the same corpus is always identical.
class Vocabulary {
public:
    explicit Vocabulary(SpecialTokens specials = {});

    const SpecialTokens& specials() const { return specials_; }
    TokenId start_publication_id() const { return start_pub_id_; }
    TokenId end_publication_id() const { return end_pub_id_; }
    TokenId separator_id() const { return sep_id_; }
    TokenId unknown_id() const { return unk_id_; }
    TokenId end_of_text_id() const { return eot_id_; }

    bool is_special(TokenId id) const;
    // Boundary/frame tokens only (publication markers, separator, end-of-text).
    // The unknown token is excluded: it stands in for real text.
    bool is_frame_special(TokenId id) const;

    int size() const { return static_cast<int>(tokens_.size()); }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    // Lookup only; words outside the dictionary map to the unknown id.
    TokenId encode_word(const std::string& word) const;
    const std::string& word(TokenId id) const;

    std::vector<TokenId> encode_text(const std::string& text) const;
    // Registers every word of `text`; throws once frozen.
    void add_text(const std::string& text);
    void add_word(const std::string& word);

    // Join with single spaces; inverse of encode_text for in-vocabulary text.
    std::string decode(const std::vector<TokenId>& ids) const;

    // Collapse runs of whitespace to single spaces, trim ends.
    static std::string normalize_whitespace(const std::string& text);
    static std::vector<std::string> split_words(const std::string& text);

    uint64_t content_hash() const;

    std::string to_json() const;
    static Vocabulary from_json(const std::string& json_text);

private:
    SpecialTokens specials_;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId start_pub_id_ = -1;
    TokenId end_pub_id_ = -1;
    TokenId sep_id_ = -1;
    TokenId unk_id_ = -1;
    TokenId eot_id_ = -1;
    bool frozen_ = false;

    TokenId intern_(const std::string& word);
};

}  // namespace stylenews
