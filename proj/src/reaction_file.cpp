#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "lfi/error.hpp"
#include "lfi/simulators.hpp"

namespace lfi {

namespace {

enum class Tok { Ident, Int, Plus, Arrow, At, Equals, Comma, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t column;  // 1-based
};

[[noreturn]] void fail(std::size_t line, std::size_t column, const std::string& msg) {
  throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " +
                   msg);
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '*' || c == '\'' ||
         c == '.';
}

std::vector<Token> lex(const std::string& s, std::size_t line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      break;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      out.push_back({Tok::Int, s.substr(i, j - i), i + 1});
      i = j;
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < s.size() && ident_char(s[j])) ++j;
      out.push_back({Tok::Ident, s.substr(i, j - i), i + 1});
      i = j;
    } else if (c == '-' && i + 1 < s.size() && s[i + 1] == '>') {
      out.push_back({Tok::Arrow, "->", i + 1});
      i += 2;
    } else if (c == '+') {
      out.push_back({Tok::Plus, "+", i + 1});
      ++i;
    } else if (c == '@') {
      out.push_back({Tok::At, "@", i + 1});
      ++i;
    } else if (c == '=') {
      out.push_back({Tok::Equals, "=", i + 1});
      ++i;
    } else if (c == ',') {
      out.push_back({Tok::Comma, ",", i + 1});
      ++i;
    } else {
      fail(line, i + 1, std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Tok::End, "", s.size() + 1});
  return out;
}

}  // namespace

ReactionNetwork parse_reaction_network(const std::string& text) {
  std::vector<std::string> species;
  std::vector<std::int64_t> counts;
  std::vector<std::string> params;
  std::map<std::string, std::size_t> species_ix, param_ix;
  std::vector<Reaction> reactions;

  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto toks = lex(raw, line);
    if (toks.front().kind == Tok::End) continue;
    std::size_t p = 0;
    auto expect = [&](Tok kind, const char* what) -> const Token& {
      if (toks[p].kind != kind) fail(line, toks[p].column, std::string("expected ") + what);
      return toks[p++];
    };

    if (toks[0].kind == Tok::Ident && toks[0].text == "species") {
      if (!reactions.empty()) fail(line, 1, "species must be declared before reactions");
      p = 1;
      while (toks[p].kind != Tok::End) {
        const Token& name = expect(Tok::Ident, "species name");
        if (species_ix.count(name.text)) fail(line, name.column, "duplicate species '" + name.text + "'");
        std::int64_t count = 0;
        if (toks[p].kind == Tok::Equals) {
          ++p;
          count = std::stoll(expect(Tok::Int, "initial count").text);
        }
        species_ix[name.text] = species.size();
        species.push_back(name.text);
        counts.push_back(count);
        if (toks[p].kind == Tok::Comma) ++p;
      }
      continue;
    }
    if (toks[0].kind == Tok::Ident && toks[0].text == "parameters") {
      if (!reactions.empty()) fail(line, 1, "parameters must be declared before reactions");
      p = 1;
      while (toks[p].kind != Tok::End) {
        const Token& name = expect(Tok::Ident, "parameter name");
        if (param_ix.count(name.text)) fail(line, name.column, "duplicate parameter '" + name.text + "'");
        param_ix[name.text] = params.size();
        params.push_back(name.text);
        if (toks[p].kind == Tok::Comma) ++p;
      }
      continue;
    }

    auto parse_side = [&](Tok terminator) {
      std::map<std::size_t, int> side;
      if (toks[p].kind == Tok::Int && toks[p].text == "0" && toks[p + 1].kind == terminator) {
        ++p;
        return side;
      }
      for (;;) {
        int coeff = 1;
        if (toks[p].kind == Tok::Int) {
          coeff = std::stoi(toks[p].text);
          if (coeff <= 0) fail(line, toks[p].column, "stoichiometry must be positive");
          ++p;
        }
        const Token& name = expect(Tok::Ident, "species name");
        auto it = species_ix.find(name.text);
        if (it == species_ix.end()) fail(line, name.column, "undeclared species '" + name.text + "'");
        side[it->second] += coeff;
        if (toks[p].kind == Tok::Plus || toks[p].kind == Tok::Comma) {
          ++p;
          continue;
        }
        if (toks[p].kind != terminator)
          fail(line, toks[p].column, terminator == Tok::Arrow ? "expected '->'" : "expected '@'");
        return side;
      }
    };

    Reaction rx;
    for (auto [s, m] : parse_side(Tok::Arrow)) rx.reactants.emplace_back(s, m);
    expect(Tok::Arrow, "'->'");
    for (auto [s, m] : parse_side(Tok::At)) rx.products.emplace_back(s, m);
    expect(Tok::At, "'@'");
    const Token& param = expect(Tok::Ident, "rate parameter name");
    auto it = param_ix.find(param.text);
    if (it == param_ix.end()) fail(line, param.column, "undeclared parameter '" + param.text + "'");
    rx.rate_param = it->second;
    if (toks[p].kind != Tok::End) fail(line, toks[p].column, "trailing input after rate parameter");
    int order = 0;
    for (auto [s, m] : rx.reactants) order += m;
    if (order > 2) fail(line, toks[0].column, "reactions beyond bimolecular order are not supported");
    reactions.push_back(std::move(rx));
  }
  if (species.empty()) throw ParseError("line " + std::to_string(line) + ", column 1: no species declared");
  return ReactionNetwork(std::move(species), std::move(counts), std::move(reactions), std::move(params));
}

ReactionNetwork load_reaction_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reaction file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_reaction_network(ss.str());
}

}  // namespace lfi
