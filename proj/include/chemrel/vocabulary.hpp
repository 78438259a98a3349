#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chemrel/smiles.hpp"

namespace chemrel {

/// Token-to-id mapping. Fixed ordered base list (specials, organic and
/// aromatic atoms, bonds, branches, ring closures 0-9 and %10-%99) followed by
/// the distinct bracket atoms seen in the training corpus, sorted.
class Vocabulary {
 public:
  static constexpr std::size_t kPadId = 0;
  static constexpr std::size_t kMaskId = 1;
  static constexpr std::size_t kRegId = 2;
  static constexpr std::size_t kSepId = 3;
  static constexpr std::size_t kUnkId = 4;

  /// Base vocabulary only.
  Vocabulary();
  /// Base vocabulary plus every bracket atom in `corpus`.
  static Vocabulary build(std::span<const smiles::TokenSequence> corpus);
  /// Exactly the given entries, in order (checkpoint loading).
  static Vocabulary from_entries(std::vector<std::string> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::string>& entries() const noexcept { return entries_; }
  const std::string& text(std::size_t id) const { return entries_.at(id); }

  bool contains(std::string_view text) const;
  /// Id of the token text; kUnkId when absent.
  std::size_t id(std::string_view text) const;
  std::vector<std::size_t> encode(const smiles::TokenSequence& tokens) const;
  /// Tokens that would map to <UNK>.
  std::vector<std::string> unknown_tokens(const smiles::TokenSequence& tokens) const;

  bool operator==(const Vocabulary& other) const { return entries_ == other.entries_; }

 private:
  void add(std::string text);

  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace chemrel
