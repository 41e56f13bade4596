// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace stylenews {

// Every failure carries a stable machine-parseable code plus a human message.
// The CLI prints them as `E_<code>: <message>` on a single line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error("E_" + code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

namespace errc {
// corpus
inline constexpr const char* MalformedRecord = "MalformedRecord";
inline constexpr const char* MissingField = "MissingField";
inline constexpr const char* EmptyCorpus = "EmptyCorpus";
inline constexpr const char* InvalidRatio = "InvalidRatio";
inline constexpr const char* TooFewRecords = "TooFewRecords";
inline constexpr const char* InvalidSource = "InvalidSource";
// prompting
inline constexpr const char* FrameTooLarge = "FrameTooLarge";
inline constexpr const char* MissingSpecialTokens = "MissingSpecialTokens";
inline constexpr const char* NoContentSpan = "NoContentSpan";
// generator
inline constexpr const char* EmptyTrainingSet = "EmptyTrainingSet";
inline constexpr const char* NonFiniteLoss = "NonFiniteLoss";
// word graph / DM
inline constexpr const char* EmptySequence = "EmptySequence";
inline constexpr const char* DimensionMismatch = "DimensionMismatch";
inline constexpr const char* InvalidLabel = "InvalidLabel";
inline constexpr const char* NonFiniteGradient = "NonFiniteGradient";
// discriminators
inline constexpr const char* UnknownPublisher = "UnknownPublisher";
inline constexpr const char* EmptyInput = "EmptyInput";
inline constexpr const char* EmptyClass = "EmptyClass";
inline constexpr const char* IncompatibleBackbones = "IncompatibleBackbones";
// schedule
inline constexpr const char* ConfigInvalid = "ConfigInvalid";
inline constexpr const char* CorruptCheckpoint = "CorruptCheckpoint";
inline constexpr const char* SeedMismatch = "SeedMismatch";
// eval
inline constexpr const char* TooFewSamples = "TooFewSamples";
inline constexpr const char* EmptyReference = "EmptyReference";
inline constexpr const char* UntrainedClassifier = "UntrainedClassifier";
inline constexpr const char* LengthMismatch = "LengthMismatch";
// cli
inline constexpr const char* FileNotFound = "FileNotFound";
inline constexpr const char* UsageError = "UsageError";
}  // namespace errc

}  // namespace stylenews
