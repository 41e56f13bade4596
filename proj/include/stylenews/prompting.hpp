// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "stylenews/tokenizer.hpp"

namespace stylenews {

// Half-open index range into a token sequence.
struct Span {
    int begin = 0;
    int end = 0;
    int size() const { return end - begin; }
    bool empty() const { return begin == end; }
};

// The publisher-conditioned prompt:
//   <|Start_Publication|> publisher <|End_Publication|> highlight <sep> content
// Truncation drops content tokens from the tail only; the publisher and
// highlight spans always survive intact.
struct PromptSequence {
    std::vector<TokenId> token_ids;
    Span publisher_span;  // between the publication markers
    Span highlight_span;  // between end marker and separator
    Span content_span;    // after the separator
    bool truncated = false;

    int length() const { return static_cast<int>(token_ids.size()); }
};

// Out-of-vocabulary words map to the unknown-token id before truncation
// (token-level substitution never changes sequence length).
PromptSequence build_prompt(const std::string& publisher, const std::string& highlight,
                            const std::string& content, int max_length, const Vocabulary& vocab);

// Content tokens with every special token filtered out. Works for built
// prompts (known content span) and for generated continuations.
std::vector<TokenId> strip_to_content(const PromptSequence& seq, const Vocabulary& vocab);
std::vector<TokenId> strip_to_content(const std::vector<TokenId>& tokens, const Vocabulary& vocab);

}  // namespace stylenews
