#pragma once

// JSON documents for decoders and transcripts. Coefficients are stored as
// integer numerators next to the precision s, so a round trip is exact.

#include <string>

#include <json.hpp>

#include "pcrsim/nn_core.hpp"

namespace pcrsim {

inline constexpr const char* kDecoderFormat = "pcrsim.decoder";
inline constexpr int kDecoderFormatVersion = 1;

nlohmann::json decoder_to_json(const nn::DecoderSpec& spec);
// Throws FormatError on unknown format/version or malformed documents and
// DimensionMismatch / InvalidPrecision if the decoded spec fails validation.
nn::DecoderSpec decoder_from_json(const nlohmann::json& doc);

nlohmann::json transcript_to_json(const nn::Transcript& t, const nn::Vocabulary& vocab);

std::string dump_json(const nlohmann::json& doc);

}  // namespace pcrsim
