#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chemrel::smiles {

enum class TokenKind { Atom, BracketAtom, Bond, BranchOpen, BranchClose, RingClosure, Special };

std::string_view to_string(TokenKind kind);

inline constexpr std::string_view kPad = "<PAD>";
inline constexpr std::string_view kMask = "<MASK>";
inline constexpr std::string_view kReg = "<REG>";
inline constexpr std::string_view kSep = "<SEP>";
inline constexpr std::string_view kUnk = "<UNK>";

struct Token {
  std::string text;
  TokenKind kind = TokenKind::Atom;
  std::size_t position = 0;

  bool is_atom() const { return kind == TokenKind::Atom || kind == TokenKind::BracketAtom; }
  bool is_special(std::string_view which) const { return kind == TokenKind::Special && text == which; }

  bool operator==(const Token&) const = default;
};

/// Half-open token range [begin, end) occupied by one molecule.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct TokenSequence {
  std::vector<Token> tokens;
  bool has_reg = false;
  std::optional<std::size_t> sep_position;
  /// Molecule spans: one for a plain SMILES, solute then solvent after
  /// prepare_input.
  std::vector<Segment> segments;

  std::size_t size() const { return tokens.size(); }
  const Token& operator[](std::size_t i) const { return tokens[i]; }

  /// Texts of all tokens, specials included.
  std::vector<std::string> texts() const;
  /// Concatenated non-special token texts.
  std::string joined() const;
  /// Tokens of one segment re-indexed from zero, without specials.
  TokenSequence segment(std::size_t index) const;
};

/// Regular-expression tokenizer with maximal munch: bracket atoms, then Cl/Br,
/// then single-character tokens; %nn ring closures. Throws SmilesError with the
/// character offset on unknown characters (including '.').
TokenSequence tokenize(std::string_view smiles);

/// Prepends <REG>; with a solvent, appends <SEP> followed by the solvent tokens.
TokenSequence prepare_input(const TokenSequence& solute,
                            const std::optional<TokenSequence>& solvent = std::nullopt);

/// Appends <PAD> tokens until the sequence has `length` tokens.
TokenSequence pad_to(TokenSequence tokens, std::size_t length);

/// Positions of Atom and BracketAtom tokens, in order.
std::vector<std::size_t> atom_token_indices(const TokenSequence& tokens);

enum class BondOrder { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;
  bool aromatic = false;
  int charge = 0;
  /// Explicit H count from a bracket atom, -1 when implicit.
  int hydrogens = -1;
  int isotope = 0;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;
};

struct MolecularGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  /// atom index -> token position in the parsed sequence.
  std::vector<std::size_t> atom_token_map;
  std::size_t ring_closures = 0;

  std::vector<std::vector<std::size_t>> adjacency() const;
  bool connected() const;
};

/// Depth-first reconstruction of a single molecule. Stereo markers are
/// accepted and ignored. Errors carry the offending token index.
MolecularGraph parse(const TokenSequence& tokens);

/// tokenize + parse.
MolecularGraph parse(std::string_view smiles);

}  // namespace chemrel::smiles
