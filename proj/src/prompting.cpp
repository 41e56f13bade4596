// SPDX-License-Identifier: Apache-2.0
#include "stylenews/prompting.hpp"

#include "stylenews/errors.hpp"

namespace stylenews {

PromptSequence build_prompt(const std::string& publisher, const std::string& highlight,
                            const std::string& content, int max_length, const Vocabulary& vocab) {
    if (vocab.start_publication_id() < 0 || vocab.end_publication_id() < 0 ||
        vocab.separator_id() < 0)
        throw Error(errc::MissingSpecialTokens, "vocabulary lacks the publication/separator tokens");

    const auto pub_ids = vocab.encode_text(Vocabulary::normalize_whitespace(publisher));
    const auto hl_ids = vocab.encode_text(Vocabulary::normalize_whitespace(highlight));
    const auto content_ids = vocab.encode_text(Vocabulary::normalize_whitespace(content));

    const int frame = 3 + static_cast<int>(pub_ids.size()) + static_cast<int>(hl_ids.size());
    if (frame > max_length)
        throw Error(errc::FrameTooLarge,
                    "publisher + highlight + special tokens need " + std::to_string(frame) +
                        " tokens but max length is " + std::to_string(max_length));

    PromptSequence seq;
    seq.token_ids.reserve(static_cast<size_t>(frame) + content_ids.size());
    seq.token_ids.push_back(vocab.start_publication_id());
    seq.publisher_span.begin = 1;
    seq.token_ids.insert(seq.token_ids.end(), pub_ids.begin(), pub_ids.end());
    seq.publisher_span.end = static_cast<int>(seq.token_ids.size());
    seq.token_ids.push_back(vocab.end_publication_id());
    seq.highlight_span.begin = static_cast<int>(seq.token_ids.size());
    seq.token_ids.insert(seq.token_ids.end(), hl_ids.begin(), hl_ids.end());
    seq.highlight_span.end = static_cast<int>(seq.token_ids.size());
    seq.token_ids.push_back(vocab.separator_id());
    seq.content_span.begin = static_cast<int>(seq.token_ids.size());

    const int room = max_length - frame;
    const int keep = std::min<int>(room, static_cast<int>(content_ids.size()));
    seq.token_ids.insert(seq.token_ids.end(), content_ids.begin(), content_ids.begin() + keep);
    seq.content_span.end = static_cast<int>(seq.token_ids.size());
    seq.truncated = keep < static_cast<int>(content_ids.size());
    return seq;
}

std::vector<TokenId> strip_to_content(const PromptSequence& seq, const Vocabulary& vocab) {
    if (seq.content_span.begin > static_cast<int>(seq.token_ids.size()) ||
        seq.content_span.end > static_cast<int>(seq.token_ids.size()) ||
        seq.content_span.begin > seq.content_span.end)
        throw Error(errc::NoContentSpan, "content span out of range");
    std::vector<TokenId> out;
    out.reserve(static_cast<size_t>(seq.content_span.size()));
    for (int i = seq.content_span.begin; i < seq.content_span.end; ++i) {
        const TokenId id = seq.token_ids[static_cast<size_t>(i)];
        if (!vocab.is_frame_special(id)) out.push_back(id);
    }
    return out;
}

std::vector<TokenId> strip_to_content(const std::vector<TokenId>& tokens,
                                      const Vocabulary& vocab) {
    std::vector<TokenId> out;
    out.reserve(tokens.size());
    for (TokenId id : tokens)
        if (!vocab.is_frame_special(id)) out.push_back(id);
    return out;
}

}  // namespace stylenews
