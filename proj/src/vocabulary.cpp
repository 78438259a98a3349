#include "chemrel/vocabulary.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "chemrel/error.hpp"

namespace chemrel {

Vocabulary::Vocabulary() {
  for (auto s : {smiles::kPad, smiles::kMask, smiles::kReg, smiles::kSep, smiles::kUnk}) add(std::string(s));
  for (auto s : {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}) add(s);
  for (auto s : {"b", "c", "n", "o", "p", "s"}) add(s);
  for (auto s : {"-", "=", "#", ":", "/", "\\"}) add(s);
  add("(");
  add(")");
  for (char d = '0'; d <= '9'; ++d) add(std::string(1, d));
  for (int n = 10; n <= 99; ++n) add(fmt::format("%{}", n));
}

Vocabulary Vocabulary::build(std::span<const smiles::TokenSequence> corpus) {
  Vocabulary vocab;
  std::set<std::string> brackets;
  for (const auto& seq : corpus)
    for (const auto& t : seq.tokens)
      if (t.kind == smiles::TokenKind::BracketAtom) brackets.insert(t.text);
  for (const auto& b : brackets) vocab.add(b);
  return vocab;
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> entries) {
  Vocabulary vocab;
  if (entries.size() < vocab.size() ||
      !std::equal(vocab.entries_.begin(), vocab.entries_.end(), entries.begin())) {
    throw FormatError("vocabulary does not start with the base token list");
  }
  for (std::size_t i = vocab.size(); i < entries.size(); ++i) vocab.add(std::move(entries[i]));
  return vocab;
}

void Vocabulary::add(std::string text) {
  if (ids_.contains(text)) throw FormatError(fmt::format("duplicate vocabulary entry {}", text));
  ids_.emplace(text, entries_.size());
  entries_.push_back(std::move(text));
}

bool Vocabulary::contains(std::string_view text) const { return ids_.contains(std::string(text)); }

std::size_t Vocabulary::id(std::string_view text) const {
  auto it = ids_.find(std::string(text));
  return it == ids_.end() ? kUnkId : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const smiles::TokenSequence& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens.tokens) out.push_back(id(t.text));
  return out;
}

std::vector<std::string> Vocabulary::unknown_tokens(const smiles::TokenSequence& tokens) const {
  std::vector<std::string> out;
  for (const auto& t : tokens.tokens)
    if (!contains(t.text)) out.push_back(t.text);
  return out;
}

}  // namespace chemrel
