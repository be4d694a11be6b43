#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "codec/records.hpp"
#include "codec/tokens.hpp"

namespace ehrgen {

struct TokenSequence {
  std::string person_id;
  std::vector<std::string> tokens;
  // True day count at each ATT position (-1 elsewhere). Filled by the encoder so
  // [LT] positions keep their real interval for time supervision; may be empty.
  std::vector<int64_t> att_days;

  bool operator==(const TokenSequence&) const = default;
};

TokenSequence encode_patient(const PatientRecord& record, const CodecConfig& cfg);

struct DecodeOptions {
  // First visit start. Default: January 1 of the year token.
  std::optional<Day> anchor;
  // Accept a sequence without [END] by cutting after the last complete visit.
  bool allow_truncated = false;
};

// Structured decode failure: `reason` is a stable short code used for histograms.
class DecodeError : public std::runtime_error {
 public:
  DecodeError(size_t position, std::string reason, const std::string& detail);
  size_t position() const { return position_; }
  const std::string& reason() const { return reason_; }

 private:
  size_t position_;
  std::string reason_;
};

PatientRecord decode_sequence(const TokenSequence& seq, const CodecConfig& cfg, const DecodeOptions& opts = {});

struct GrammarResult {
  bool ok = true;
  size_t position = 0;  // first offending index when !ok
  std::string reason;
};

// Class-level check of prefix ([VS] [VT] body [DIS]? [VE] ATT?)+ [END], independent of the decoder.
GrammarResult validate_grammar(std::span<const std::string> tokens, const CodecConfig& cfg);

// Compares two records ignoring person_id, with every date taken relative to the first visit start.
bool same_timeline(const PatientRecord& a, const PatientRecord& b);

// Demographic prefix (first four tokens).
std::vector<std::string> demographic_prefix(const TokenSequence& seq);

}  // namespace ehrgen
