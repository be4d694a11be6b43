#include "codec/vocabulary.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "common/csv.hpp"
#include "common/errors.hpp"
#include "common/hash.hpp"

namespace ehrgen {

namespace {
constexpr std::string_view kSpecials[] = {tokens::kPad, tokens::kVisitStart, tokens::kVisitEnd, tokens::kLongTerm,
                                          tokens::kEnd};
}

void Vocabulary::append(std::string token) {
  auto parsed = parse_token(token);
  if (!parsed) throw ValidationError("cannot add unrecognized token '" + token + "' to vocabulary");
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  classes_.push_back(parsed->cls);
  infos_.push_back(*parsed);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const TokenSequence> corpus) {
  Vocabulary v;
  for (auto s : kSpecials) v.append(std::string(s));
  for (int64_t d = 0; d <= tokens::kMaxAttDays; ++d) v.append("D" + std::to_string(d));
  std::set<std::string> rest;
  for (const auto& seq : corpus)
    for (const auto& t : seq.tokens)
      if (!v.index_.count(t)) rest.insert(t);
  for (const auto& t : rest) v.append(t);
  v.frozen_ = true;
  return v;
}

Vocabulary::Expansion Vocabulary::expand(std::span<const std::string> new_tokens) const {
  Expansion e{*this};
  for (const auto& t : new_tokens) {
    if (e.vocabulary.index_.count(t)) {
      ++e.duplicates;
      continue;
    }
    e.vocabulary.append(t);
    ++e.added;
  }
  e.vocabulary.frozen_ = true;
  return e;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  if (auto i = find(token)) return *i;
  throw ValidationError("token '" + std::string(token) + "' is not in the vocabulary");
}

std::vector<TokenId> Vocabulary::ids(std::span<const std::string> toks) const {
  std::vector<TokenId> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::texts(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::serialize() const {
  std::ostringstream out;
  for (size_t i = 0; i < tokens_.size(); ++i) out << i << '\t' << tokens_[i] << '\t' << class_name(classes_[i]) << '\n';
  return out.str();
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

uint64_t Vocabulary::hash() const { return fnv1a64(serialize()); }

Vocabulary Vocabulary::parse(std::string_view text, const std::string& source) {
  Vocabulary v;
  size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    const std::string where = source + ":" + std::to_string(line_no);
    if (cols.size() != 3) throw ValidationError(where + ": expected id<TAB>token<TAB>class");
    if (parse_int(cols[0], where) != static_cast<int64_t>(v.size())) {
      throw ValidationError(where + ": ids must be dense and ascending");
    }
    if (v.index_.count(cols[1])) throw ValidationError(where + ": duplicate token '" + cols[1] + "'");
    v.append(cols[1]);
    if (class_name(v.classes_.back()) != cols[2]) {
      throw ValidationError(where + ": class " + cols[2] + " does not match token '" + cols[1] + "'");
    }
  }
  for (auto s : kSpecials) {
    if (!v.find(s)) throw ValidationError(source + ": missing special token " + std::string(s));
  }
  if (v.token(0) != tokens::kPad) throw ValidationError(source + ": id 0 must be " + std::string(tokens::kPad));
  v.frozen_ = true;
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

}  // namespace ehrgen
