#include <algorithm>
#include <cctype>
#include <map>

#include "vqatom/chem/mol.hpp"

namespace vqatom::chem {

namespace {

using Kind = ParseError::Kind;

struct RingOpen {
  std::size_t atom;
  std::optional<BondOrder> order;
  std::size_t offset;
};

struct Branch {
  std::size_t atom;
  std::size_t offset;
};

std::optional<BondOrder> bond_from_char(char c) {
  switch (c) {
    case '-': return BondOrder::Single;
    case '=': return BondOrder::Double;
    case '#': return BondOrder::Triple;
    case ':': return BondOrder::Aromatic;
    default: return std::nullopt;
  }
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& options) : s_(text), options_(options) {}

  MolGraph run() {
    if (s_.empty()) throw ParseError(Kind::EmptyInput, 0, "empty SMILES");
    for (std::size_t i = 0; i < s_.size(); ++i) {
      if (static_cast<unsigned char>(s_[i]) > 127) throw ParseError(Kind::InvalidSyntax, i, "non-ASCII byte");
    }
    while (pos_ < s_.size()) step();
    finish_syntax();
    finish_chemistry();
    return std::move(g_);
  }

 private:
  [[noreturn]] void fail(Kind kind, std::size_t offset, const std::string& detail) const {
    throw ParseError(kind, offset, detail);
  }

  void step() {
    const char c = s_[pos_];
    if (c == '(') {
      if (!prev_) fail(Kind::InvalidSyntax, pos_, "branch opened before any atom");
      if (pending_) fail(Kind::InvalidSyntax, pos_, "bond symbol before '('");
      branches_.push_back({*prev_, pos_});
      ++pos_;
    } else if (c == ')') {
      if (branches_.empty()) fail(Kind::UnbalancedParenthesis, pos_, "')' without matching '('");
      if (pending_) fail(Kind::InvalidSyntax, pending_offset_, "bond symbol without a following atom");
      if (s_[pos_ - 1] == '(') fail(Kind::InvalidSyntax, pos_, "empty branch");
      prev_ = branches_.back().atom;
      branches_.pop_back();
      ++pos_;
    } else if (auto order = bond_from_char(c)) {
      if (!prev_) fail(Kind::InvalidSyntax, pos_, "bond symbol before any atom");
      if (pending_) fail(Kind::InvalidSyntax, pos_, "two consecutive bond symbols");
      pending_ = order;
      pending_offset_ = pos_;
      ++pos_;
    } else if (c == '/' || c == '\\') {
      fail(Kind::UnsupportedSyntax, pos_, "directional (stereo) bonds are not supported");
    } else if (c == '@') {
      fail(Kind::UnsupportedSyntax, pos_, "chirality markers are not supported");
    } else if (c == '*') {
      fail(Kind::UnsupportedSyntax, pos_, "wildcard atoms are not supported");
    } else if (c == '.') {
      fail(Kind::MultiComponentInput, pos_, "disconnected components ('.') are not accepted");
    } else if (is_digit(c) || c == '%') {
      ring_closure();
    } else if (c == '[') {
      bracket_atom();
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      organic_atom();
    } else {
      fail(Kind::InvalidSyntax, pos_, std::string("unexpected character '") + c + "'");
    }
  }

  BondOrder implicit_order(std::size_t a, std::size_t b) const {
    return g_.atoms[a].aromatic && g_.atoms[b].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  }

  void add_bond(std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    if (g_.find_bond(a, b)) fail(Kind::InvalidSyntax, offset, "duplicate bond between the same atoms");
    g_.bonds.push_back({a, b, order.value_or(implicit_order(a, b))});
    bond_explicit_.push_back(order.has_value());
  }

  void add_atom(Atom atom, std::size_t offset) {
    atom.index = g_.atoms.size();
    g_.atoms.push_back(atom);
    atom_offset_.push_back(offset);
    if (prev_) add_bond(*prev_, atom.index, pending_, pending_ ? pending_offset_ : offset);
    prev_ = atom.index;
    pending_.reset();
  }

  void organic_atom() {
    const std::size_t start = pos_;
    const char c = s_[pos_];
    Atom atom;
    auto next_is = [&](char n) { return pos_ + 1 < s_.size() && s_[pos_ + 1] == n; };
    if (c == 'B' && next_is('r')) {
      atom.element = Element::Br;
      pos_ += 2;
    } else if (c == 'C' && next_is('l')) {
      atom.element = Element::Cl;
      pos_ += 2;
    } else {
      switch (c) {
        case 'B': atom.element = Element::B; break;
        case 'C': atom.element = Element::C; break;
        case 'N': atom.element = Element::N; break;
        case 'O': atom.element = Element::O; break;
        case 'P': atom.element = Element::P; break;
        case 'S': atom.element = Element::S; break;
        case 'F': atom.element = Element::F; break;
        case 'I': atom.element = Element::I; break;
        case 'b': atom.element = Element::B; atom.aromatic = true; break;
        case 'c': atom.element = Element::C; atom.aromatic = true; break;
        case 'n': atom.element = Element::N; atom.aromatic = true; break;
        case 'o': atom.element = Element::O; atom.aromatic = true; break;
        case 'p': atom.element = Element::P; atom.aromatic = true; break;
        case 's': atom.element = Element::S; atom.aromatic = true; break;
        default:
          fail(Kind::UnknownElement, start,
               std::string("'") + c + "' is not an organic-subset atom; use brackets");
      }
      ++pos_;
    }
    add_atom(atom, start);
  }

  void bracket_atom() {
    const std::size_t open = pos_;
    const std::size_t close = s_.find(']', open);
    if (close == std::string_view::npos) fail(Kind::InvalidBracketAtom, open, "'[' without matching ']'");
    std::size_t i = open + 1;
    auto at = [&](std::size_t k) { return k < close ? s_[k] : '\0'; };

    if (is_digit(at(i))) fail(Kind::UnsupportedSyntax, i, "isotope labels are not supported");
    if (at(i) == '*') fail(Kind::UnsupportedSyntax, i, "wildcard atoms are not supported");

    Atom atom;
    atom.bracket = true;
    const std::size_t sym_start = i;
    std::string symbol;
    if (std::isupper(static_cast<unsigned char>(at(i)))) {
      symbol.push_back(at(i++));
      if (std::islower(static_cast<unsigned char>(at(i)))) symbol.push_back(at(i++));
    } else if (std::islower(static_cast<unsigned char>(at(i)))) {
      atom.aromatic = true;
      if (at(i) == 's' && at(i + 1) == 'e') {
        symbol = "Se";
        i += 2;
      } else {
        const char l = at(i++);
        const bool organic = l == 'b' || l == 'c' || l == 'n' || l == 'o' || l == 'p' || l == 's';
        symbol.push_back(organic ? static_cast<char>(std::toupper(static_cast<unsigned char>(l))) : l);
        while (!organic && std::islower(static_cast<unsigned char>(at(i)))) symbol.push_back(at(i++));
      }
    } else {
      fail(Kind::InvalidBracketAtom, i, "bracket atom has no element symbol");
    }

    if (auto e = element_from_symbol(symbol)) {
      atom.element = *e;
    } else if (options_.allow_unknown) {
      atom.element = Element::Unk;
    } else {
      fail(Kind::UnknownElement, sym_start, "unknown element '" + symbol + "'");
    }

    if (at(i) == '@') fail(Kind::UnsupportedSyntax, i, "chirality markers are not supported");
    if (at(i) == 'H') {
      ++i;
      atom.explicit_h = 1;
      if (is_digit(at(i))) {
        atom.explicit_h = at(i++) - '0';
        if (is_digit(at(i))) fail(Kind::InvalidBracketAtom, i, "hydrogen count must be a single digit");
      }
    }
    if (at(i) == '+' || at(i) == '-') {
      const char sign = at(i++);
      int magnitude = 1;
      if (is_digit(at(i))) {
        magnitude = at(i++) - '0';
        if (is_digit(at(i))) fail(Kind::InvalidBracketAtom, i, "charge must be a single digit");
      } else {
        while (at(i) == sign) {
          ++magnitude;
          ++i;
        }
      }
      atom.formal_charge = sign == '+' ? magnitude : -magnitude;
    }
    if (at(i) == ':') fail(Kind::UnsupportedSyntax, i, "atom classes are not supported");
    if (i != close) fail(Kind::InvalidBracketAtom, i, "unexpected text inside bracket atom");
    pos_ = close + 1;
    add_atom(atom, open);
  }

  void ring_closure() {
    const std::size_t start = pos_;
    if (!prev_) fail(Kind::InvalidSyntax, start, "ring-closure digit before any atom");
    int number = 0;
    if (s_[pos_] == '%') {
      if (pos_ + 2 >= s_.size() || !is_digit(s_[pos_ + 1]) || !is_digit(s_[pos_ + 2])) {
        fail(Kind::InvalidSyntax, start, "'%' must be followed by two digits");
      }
      number = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
      pos_ += 3;
    } else {
      number = s_[pos_] - '0';
      ++pos_;
    }
    auto it = rings_.find(number);
    if (it == rings_.end()) {
      rings_[number] = {*prev_, pending_, start};
      pending_.reset();
      return;
    }
    const RingOpen open = it->second;
    rings_.erase(it);
    if (open.atom == *prev_) fail(Kind::InvalidSyntax, start, "ring closure bonds an atom to itself");
    if (open.order && pending_ && *open.order != *pending_) {
      fail(Kind::InvalidSyntax, start, "ring-closure bond symbols disagree");
    }
    const std::optional<BondOrder> order = pending_ ? pending_ : open.order;
    add_bond(open.atom, *prev_, order, start);
    pending_.reset();
  }

  void finish_syntax() {
    if (pending_) fail(Kind::InvalidSyntax, pending_offset_, "bond symbol without a following atom");
    if (!branches_.empty()) fail(Kind::UnbalancedParenthesis, branches_.back().offset, "'(' is never closed");
    if (!rings_.empty()) {
      std::size_t first = s_.size();
      for (const auto& [num, open] : rings_) first = std::min(first, open.offset);
      fail(Kind::UnclosedRingBond, first, "ring-closure digit is never matched");
    }
    if (g_.atoms.empty()) fail(Kind::EmptyInput, 0, "no atoms");
  }

  void finish_chemistry() {
    const std::vector<bool> in_ring = ring_bonds(g_);
    for (std::size_t b = 0; b < g_.bonds.size(); ++b) {
      if (!in_ring[b] && !bond_explicit_[b] && g_.bonds[b].order == BondOrder::Aromatic) {
        g_.bonds[b].order = BondOrder::Single;
      }
    }
    std::vector<bool> atom_in_ring(g_.atoms.size(), false);
    for (std::size_t b = 0; b < g_.bonds.size(); ++b) {
      if (in_ring[b]) atom_in_ring[g_.bonds[b].a] = atom_in_ring[g_.bonds[b].b] = true;
    }
    // Aromatic bonds count 1.5 for hydrogen filling but 1 for the valence
    // limit, since a ring heteroatom such as furan O shares a lone pair.
    std::vector<int> half(g_.atoms.size(), 0), checked(g_.atoms.size(), 0);
    for (const Bond& b : g_.bonds) {
      half[b.a] += half_order(b.order);
      half[b.b] += half_order(b.order);
      const int limit_order = b.order == BondOrder::Aromatic ? 2 : half_order(b.order);
      checked[b.a] += limit_order / 2;
      checked[b.b] += limit_order / 2;
    }
    for (Atom& a : g_.atoms) {
      if (a.aromatic && !atom_in_ring[a.index]) {
        fail(Kind::NonRingAromaticAtom, atom_offset_[a.index], "aromatic atom outside any ring");
      }
      const int order_sum = half[a.index] / 2;
      if (a.element != Element::Unk &&
          checked[a.index] + a.explicit_h > max_valence(a.element) + std::abs(a.formal_charge)) {
        fail(Kind::ValenceViolation, atom_offset_[a.index],
             std::string(element_symbol(a.element)) + " has bond-order sum " + std::to_string(checked[a.index]) +
                 " plus " + std::to_string(a.explicit_h) + " H");
      }
      a.implicit_h = a.bracket ? 0 : std::max(0, default_valence(a.element, a.formal_charge) - order_sum);
    }
    g_.rings = perceive_rings(g_);
  }

  std::string_view s_;
  ParseOptions options_;
  std::size_t pos_ = 0;
  MolGraph g_;
  std::vector<std::size_t> atom_offset_;
  std::vector<bool> bond_explicit_;
  std::optional<std::size_t> prev_;
  std::optional<BondOrder> pending_;
  std::size_t pending_offset_ = 0;
  std::vector<Branch> branches_;
  std::map<int, RingOpen> rings_;
};

}  // namespace

std::string_view parse_error_name(ParseError::Kind kind) {
  switch (kind) {
    case Kind::EmptyInput: return "EmptyInput";
    case Kind::InvalidSyntax: return "InvalidSyntax";
    case Kind::UnbalancedParenthesis: return "UnbalancedParenthesis";
    case Kind::UnclosedRingBond: return "UnclosedRingBond";
    case Kind::UnknownElement: return "UnknownElement";
    case Kind::InvalidBracketAtom: return "InvalidBracketAtom";
    case Kind::MultiComponentInput: return "MultiComponentInput";
    case Kind::ValenceViolation: return "ValenceViolation";
    case Kind::UnsupportedSyntax: return "UnsupportedSyntax";
    case Kind::NonRingAromaticAtom: return "NonRingAromaticAtom";
  }
  return "ParseError";
}

ParseError::ParseError(Kind kind, std::size_t offset, const std::string& detail)
    : std::runtime_error(std::string(parse_error_name(kind)) + " at offset " + std::to_string(offset) + ": " +
                         detail),
      kind_(kind),
      offset_(offset),
      detail_(detail) {}

MolGraph parse_smiles(std::string_view text, const ParseOptions& options) {
  return Parser(text, options).run();
}

}  // namespace vqatom::chem
