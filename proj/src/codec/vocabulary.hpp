#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codec/codec.hpp"
#include "codec/tokens.hpp"

namespace ehrgen {

using TokenId = int32_t;

// Dense token <-> id bijection with per-id token class. Immutable once built.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Specials, then D0..D1080, then every other observed token in lexicographic order.
  static Vocabulary build(std::span<const TokenSequence> corpus);
  static Vocabulary parse(std::string_view text, const std::string& source);
  static Vocabulary load(const std::filesystem::path& path);

  struct Expansion;
  // Appends unseen tokens; existing ids are untouched. Unrecognized surface forms are rejected.
  Expansion expand(std::span<const std::string> new_tokens) const;

  size_t size() const { return tokens_.size(); }
  bool frozen() const { return frozen_; }
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws ValidationError
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<size_t>(id)); }
  TokenClass token_class(TokenId id) const { return classes_.at(static_cast<size_t>(id)); }
  const TokenInfo& info(TokenId id) const { return infos_.at(static_cast<size_t>(id)); }

  TokenId pad_id() const { return 0; }
  TokenId end_id() const { return id(tokens::kEnd); }

  std::vector<TokenId> ids(std::span<const std::string> toks) const;
  std::vector<std::string> texts(std::span<const TokenId> ids) const;

  // "id<TAB>token<TAB>class" per line.
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::vector<TokenClass> classes_;
  std::vector<TokenInfo> infos_;
  std::unordered_map<std::string, TokenId> index_;
  bool frozen_ = false;
};

struct Vocabulary::Expansion {
  Vocabulary vocabulary;
  size_t added = 0;
  size_t duplicates = 0;
};

}  // namespace ehrgen
