#include "chemrel/smiles.hpp"

#include <cctype>
#include <map>
#include <regex>

#include <fmt/format.h>

#include "chemrel/error.hpp"

namespace chemrel::smiles {

namespace {

using Stage = SmilesError::Stage;

// Alternation order is the precedence order: bracket atoms, two-letter
// organic symbols, then single characters.
const std::regex& token_regex() {
  static const std::regex re(
      R"(\[[^\[\]]+\]|Br|Cl|[BCNOPSFI]|[bcnops]|%[0-9]{2}|[0-9]|[-=#:/\\]|\(|\))",
      std::regex::optimize);
  return re;
}

TokenKind classify(std::string_view text) {
  switch (text.front()) {
    case '[':
      return TokenKind::BracketAtom;
    case '(':
      return TokenKind::BranchOpen;
    case ')':
      return TokenKind::BranchClose;
    case '%':
      return TokenKind::RingClosure;
    case '-':
    case '=':
    case '#':
    case ':':
    case '/':
    case '\\':
      return TokenKind::Bond;
    default:
      return std::isdigit(static_cast<unsigned char>(text.front())) ? TokenKind::RingClosure
                                                                     : TokenKind::Atom;
  }
}

Token special(std::string_view text, std::size_t position) {
  return Token{std::string(text), TokenKind::Special, position};
}

}  // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Atom:
      return "atom";
    case TokenKind::BracketAtom:
      return "bracket_atom";
    case TokenKind::Bond:
      return "bond";
    case TokenKind::BranchOpen:
      return "branch_open";
    case TokenKind::BranchClose:
      return "branch_close";
    case TokenKind::RingClosure:
      return "ring_closure";
    case TokenKind::Special:
      return "special";
  }
  return "unknown";
}

std::vector<std::string> TokenSequence::texts() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.text);
  return out;
}

std::string TokenSequence::joined() const {
  std::string out;
  for (const auto& t : tokens)
    if (t.kind != TokenKind::Special) out += t.text;
  return out;
}

TokenSequence TokenSequence::segment(std::size_t index) const {
  if (index >= segments.size()) throw InvalidInputError(fmt::format("no segment {}", index));
  const auto [begin, end] = segments[index];
  TokenSequence out;
  for (std::size_t i = begin; i < end; ++i) {
    Token t = tokens[i];
    t.position = i - begin;
    out.tokens.push_back(std::move(t));
  }
  out.segments.push_back({0, out.tokens.size()});
  return out;
}

TokenSequence tokenize(std::string_view smiles) {
  if (smiles.empty()) throw SmilesError(Stage::Tokenize, 0, "empty SMILES string");
  TokenSequence seq;
  const auto& re = token_regex();
  std::size_t offset = 0;
  while (offset < smiles.size()) {
    std::cmatch match;
    const char* begin = smiles.data() + offset;
    const char* end = smiles.data() + smiles.size();
    if (!std::regex_search(begin, end, match, re, std::regex_constants::match_continuous)) {
      const char c = smiles[offset];
      const std::string what =
          c == '.' ? "disconnected SMILES ('.') not supported"
                   : (std::isprint(static_cast<unsigned char>(c)) ? fmt::format("unexpected character '{}'", c)
                                                                    : "unexpected non-printable character");
      throw SmilesError(Stage::Tokenize, offset, fmt::format("{} at offset {}", what, offset));
    }
    std::string text = match.str(0);
    const TokenKind kind = classify(text);
    seq.tokens.push_back(Token{std::move(text), kind, seq.tokens.size()});
    offset += static_cast<std::size_t>(match.length(0));
  }
  seq.segments.push_back({0, seq.tokens.size()});
  return seq;
}

TokenSequence prepare_input(const TokenSequence& solute, const std::optional<TokenSequence>& solvent) {
  const auto check = [](const TokenSequence& s, std::string_view what) {
    if (s.tokens.empty()) throw InvalidInputError(fmt::format("{} token sequence is empty", what));
    for (const auto& t : s.tokens) {
      if (t.kind == TokenKind::Special) {
        throw InvalidInputError(fmt::format("{} already contains special token {}", what, t.text));
      }
    }
  };
  check(solute, "solute");
  if (solvent) check(*solvent, "solvent");

  TokenSequence out;
  out.has_reg = true;
  out.tokens.push_back(special(kReg, 0));
  const auto append = [&out](const TokenSequence& s) {
    const std::size_t begin = out.tokens.size();
    for (const auto& t : s.tokens) {
      Token copy = t;
      copy.position = out.tokens.size();
      out.tokens.push_back(std::move(copy));
    }
    out.segments.push_back({begin, out.tokens.size()});
  };
  append(solute);
  if (solvent) {
    out.sep_position = out.tokens.size();
    out.tokens.push_back(special(kSep, out.tokens.size()));
    append(*solvent);
  }
  return out;
}

TokenSequence pad_to(TokenSequence tokens, std::size_t length) {
  while (tokens.tokens.size() < length) tokens.tokens.push_back(special(kPad, tokens.tokens.size()));
  return tokens;
}

std::vector<std::size_t> atom_token_indices(const TokenSequence& tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].is_atom()) out.push_back(i);
  return out;
}

std::vector<std::vector<std::size_t>> MolecularGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(atoms.size());
  for (const auto& b : bonds) {
    adj[b.a].push_back(b.b);
    adj[b.b].push_back(b.a);
  }
  return adj;
}

bool MolecularGraph::connected() const {
  if (atoms.empty()) return false;
  const auto adj = adjacency();
  std::vector<bool> seen(atoms.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t w : adj[v])
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        stack.push_back(w);
      }
  }
  return count == atoms.size();
}

namespace {

std::optional<BondOrder> bond_from_token(std::string_view text) {
  switch (text.front()) {
    case '-':
    case '/':
    case '\\':
      return BondOrder::Single;
    case '=':
      return BondOrder::Double;
    case '#':
      return BondOrder::Triple;
    case ':':
      return BondOrder::Aromatic;
    default:
      return std::nullopt;
  }
}

Atom organic_atom(std::string_view text) {
  Atom atom;
  if (std::islower(static_cast<unsigned char>(text.front()))) {
    atom.aromatic = true;
    atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(text.front()))));
  } else {
    atom.element = std::string(text);
  }
  return atom;
}

// [isotope? symbol chirality? hcount? charge? class?]
Atom bracket_atom(std::string_view text, std::size_t token_index) {
  const auto fail = [&](std::string_view why) {
    throw SmilesError(Stage::Parse, token_index,
                      fmt::format("malformed bracket atom {} at token {}: {}", text, token_index, why));
  };
  std::string_view body = text.substr(1, text.size() - 2);
  std::size_t i = 0;
  const auto digit = [&](std::size_t k) {
    return k < body.size() && std::isdigit(static_cast<unsigned char>(body[k]));
  };
  Atom atom;
  while (digit(i)) atom.isotope = atom.isotope * 10 + (body[i++] - '0');

  static constexpr std::string_view kAromatic2[] = {"se", "as"};
  bool matched = false;
  for (auto sym : kAromatic2) {
    if (body.substr(i, 2) == sym) {
      atom.element = std::string(1, static_cast<char>(std::toupper(sym[0]))) + sym[1];
      atom.aromatic = true;
      i += 2;
      matched = true;
      break;
    }
  }
  if (!matched) {
    if (i >= body.size()) fail("missing element symbol");
    const char c = body[i];
    if (c == '*') {
      atom.element = "*";
      ++i;
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      atom.element = std::string(1, c);
      ++i;
      // Hydrogen count 'H' is never the second letter of a symbol.
      if (i < body.size() && std::islower(static_cast<unsigned char>(body[i]))) atom.element += body[i++];
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      atom.aromatic = true;
      ++i;
    } else {
      fail("missing element symbol");
    }
  }
  // Chirality: @, @@, @TH1, @AL2, @SP3, @TB10, @OH25.
  if (i < body.size() && body[i] == '@') {
    ++i;
    if (i < body.size() && body[i] == '@') {
      ++i;
    } else {
      while (i < body.size() && std::isupper(static_cast<unsigned char>(body[i])) && body[i] != 'H') ++i;
      while (digit(i)) ++i;
    }
  }
  if (i < body.size() && body[i] == 'H') {
    ++i;
    atom.hydrogens = 1;
    if (digit(i)) {
      atom.hydrogens = 0;
      while (digit(i)) atom.hydrogens = atom.hydrogens * 10 + (body[i++] - '0');
    }
  }
  if (i < body.size() && (body[i] == '+' || body[i] == '-')) {
    const char sign = body[i];
    const int unit = sign == '+' ? 1 : -1;
    int magnitude = 0;
    while (i < body.size() && body[i] == sign) {
      ++magnitude;
      ++i;
    }
    if (magnitude == 1 && digit(i)) {
      magnitude = 0;
      while (digit(i)) magnitude = magnitude * 10 + (body[i++] - '0');
    }
    atom.charge = unit * magnitude;
  }
  if (i < body.size() && body[i] == ':') {
    ++i;
    if (!digit(i)) fail("atom class needs digits");
    while (digit(i)) ++i;
  }
  if (i != body.size()) fail(fmt::format("unexpected '{}'", body[i]));
  return atom;
}

int ring_number(std::string_view text) {
  return text.front() == '%' ? std::stoi(std::string(text.substr(1))) : text.front() - '0';
}

}  // namespace

MolecularGraph parse(const TokenSequence& tokens) {
  MolecularGraph graph;
  struct OpenRing {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t token;
  };
  std::map<int, OpenRing> open_rings;
  std::vector<std::size_t> branch_stack;  // atoms to return to
  std::vector<std::size_t> branch_tokens;
  std::optional<std::size_t> previous;
  std::optional<BondOrder> pending;
  std::size_t pending_token = 0;

  const auto error = [](std::size_t at, std::string msg) {
    throw SmilesError(Stage::Parse, at, fmt::format("{} at token {}", msg, at));
  };
  const auto implicit_order = [&](std::size_t a, std::size_t b) {
    return graph.atoms[a].aromatic && graph.atoms[b].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& tok = tokens[i];
    switch (tok.kind) {
      case TokenKind::Special:
        error(i, fmt::format("special token {} cannot be parsed", tok.text));
        break;
      case TokenKind::Atom:
      case TokenKind::BracketAtom: {
        Atom atom = tok.kind == TokenKind::Atom ? organic_atom(tok.text) : bracket_atom(tok.text, i);
        const std::size_t index = graph.atoms.size();
        graph.atoms.push_back(std::move(atom));
        graph.atom_token_map.push_back(i);
        if (previous) {
          graph.bonds.push_back({*previous, index, pending.value_or(implicit_order(*previous, index))});
        } else if (pending) {
          error(pending_token, "bond token with no preceding atom");
        }
        pending.reset();
        previous = index;
        break;
      }
      case TokenKind::Bond:
        if (pending) error(i, "two consecutive bond tokens");
        if (!previous) error(i, "bond token with no preceding atom");
        pending = bond_from_token(tok.text);
        pending_token = i;
        break;
      case TokenKind::BranchOpen:
        if (!previous) error(i, "'(' with no preceding atom");
        if (pending) error(i, "bond token before '('");
        branch_stack.push_back(*previous);
        branch_tokens.push_back(i);
        break;
      case TokenKind::BranchClose:
        if (branch_stack.empty()) error(i, "unmatched ')'");
        if (pending) error(pending_token, "bond token with no following atom");
        if (i > 0 && tokens[i - 1].kind == TokenKind::BranchOpen) error(i, "empty branch");
        previous = branch_stack.back();
        branch_stack.pop_back();
        branch_tokens.pop_back();
        break;
      case TokenKind::RingClosure: {
        if (!previous) error(i, "ring closure with no preceding atom");
        const int number = ring_number(tok.text);
        const bool stereo_bond = pending && pending_token < tokens.size() &&
                                 (tokens[pending_token].text == "/" || tokens[pending_token].text == "\\");
        auto it = open_rings.find(number);
        if (it == open_rings.end()) {
          open_rings.emplace(number, OpenRing{*previous, stereo_bond ? std::nullopt : pending, i});
        } else {
          const OpenRing ring = it->second;
          open_rings.erase(it);
          if (ring.atom == *previous) error(i, fmt::format("ring closure {} bonds an atom to itself", number));
          const std::optional<BondOrder> here = stereo_bond ? std::nullopt : pending;
          if (ring.order && here && *ring.order != *here) {
            error(i, fmt::format("conflicting bond orders on ring closure {}", number));
          }
          const BondOrder order = here ? *here : ring.order.value_or(implicit_order(ring.atom, *previous));
          graph.bonds.push_back({ring.atom, *previous, order});
          ++graph.ring_closures;
        }
        pending.reset();
        break;
      }
    }
  }
  if (pending) error(pending_token, "bond token with no following atom");
  if (!branch_stack.empty()) error(branch_tokens.back(), "unmatched '('");
  if (!open_rings.empty()) {
    const auto& [number, ring] = *open_rings.begin();
    error(ring.token, fmt::format("unpaired ring closure {}", number));
  }
  if (graph.atoms.empty()) error(0, "no atoms");
  return graph;
}

MolecularGraph parse(std::string_view smiles) { return parse(tokenize(smiles)); }

}  // namespace chemrel::smiles
