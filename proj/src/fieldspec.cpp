// Parser for the textual coefficient-field grammar used by the CLI:
//   field := name | name '{' key '=' value (',' key '=' value)* '}'
//   value := number | '[' number (',' number)* ']' | field
#include <cctype>
#include <map>
#include <optional>
#include <stdexcept>
#include <variant>

#include "rieszlab/coeffs.hpp"

namespace riesz {

namespace {

struct SpecNode {
  std::string name;
  std::map<std::string, std::variant<double, std::vector<double>, SpecNode>> args;
};

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  SpecNode parse() {
    SpecNode n = parse_node();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return n;
  }

 private:
  SpecNode parse_node() {
    SpecNode n;
    n.name = parse_ident();
    skip_ws();
    if (peek() == '{') {
      ++pos_;
      skip_ws();
      while (peek() != '}') {
        std::string key = parse_ident();
        skip_ws();
        expect('=');
        skip_ws();
        n.args.emplace(key, parse_value());
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          skip_ws();
        } else if (peek() != '}') {
          fail("expected ',' or '}'");
        }
      }
      ++pos_;
    }
    return n;
  }

  std::variant<double, std::vector<double>, SpecNode> parse_value() {
    const char c = peek();
    if (c == '[') {
      ++pos_;
      std::vector<double> list;
      skip_ws();
      while (peek() != ']') {
        list.push_back(parse_number());
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
      return list;
    }
    if (std::isdigit(c) || c == '-' || c == '+' || c == '.') return parse_number();
    return parse_node();
  }

  std::string parse_ident() {
    size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(s_[pos_]) || s_[pos_] == '_')) ++pos_;
    if (pos_ == start) fail("expected identifier");
    return s_.substr(start, pos_ - start);
  }

  double parse_number() {
    char* end = nullptr;
    const double v = std::strtod(s_.c_str() + pos_, &end);
    if (end == s_.c_str() + pos_) fail("expected number");
    pos_ = end - s_.c_str();
    return v;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(s_[pos_])) ++pos_;
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw std::invalid_argument("field spec '" + s_ + "': " + why +
                                " at offset " + std::to_string(pos_));
  }

  const std::string& s_;
  size_t pos_ = 0;
};

double get_num(const SpecNode& n, const std::string& key) {
  auto it = n.args.find(key);
  if (it == n.args.end() || !std::holds_alternative<double>(it->second))
    throw std::invalid_argument("field spec '" + n.name + "': missing numeric arg '" +
                                key + "'");
  return std::get<double>(it->second);
}

double get_num_or(const SpecNode& n, const std::string& key, double dflt) {
  auto it = n.args.find(key);
  if (it == n.args.end()) return dflt;
  return std::get<double>(it->second);
}

std::vector<double> get_list(const SpecNode& n, const std::string& key) {
  auto it = n.args.find(key);
  if (it == n.args.end() || !std::holds_alternative<std::vector<double>>(it->second))
    throw std::invalid_argument("field spec '" + n.name + "': missing list arg '" +
                                key + "'");
  return std::get<std::vector<double>>(it->second);
}

const SpecNode& get_node(const SpecNode& n, const std::string& key) {
  auto it = n.args.find(key);
  if (it == n.args.end() || !std::holds_alternative<SpecNode>(it->second))
    throw std::invalid_argument("field spec '" + n.name + "': missing field arg '" +
                                key + "'");
  return std::get<SpecNode>(it->second);
}

MatrixField build_matrix(const SpecNode& n, int dim_hint) {
  const int dim = static_cast<int>(get_num_or(n, "n", dim_hint));
  if (n.name == "identity") return identity_field(dim);
  if (n.name == "scale") return scaled_identity(dim, get_num(n, "factor"));
  if (n.name == "meyer_conic") return meyer_conic(get_num(n, "beta"));
  if (n.name == "conic_nd") return conic_nd(get_num(n, "lambda"), dim);
  if (n.name == "partial_conic") return partial_conic(get_num(n, "beta"), dim);
  if (n.name == "strip")
    return strip_perturbation(build_matrix(get_node(n, "base"), dim),
                              build_matrix(get_node(n, "pert"), dim));
  if (n.name == "compact")
    return compact_perturbation(build_matrix(get_node(n, "base"), dim),
                                build_matrix(get_node(n, "pert"), dim),
                                get_num(n, "r0"));
  if (n.name == "mollified")
    return mollify(build_matrix(get_node(n, "base"), dim), get_num(n, "scale"));
  if (n.name == "tiled")
    return build_tiled(build_matrix(get_node(n, "base"), dim),
                       RadiiSchedule(get_list(n, "radii")), get_num(n, "moll"));
  if (n.name == "rescaled")
    return rescale(build_matrix(get_node(n, "base"), dim), get_num(n, "s"));
  throw std::invalid_argument("unknown matrix field '" + n.name + "'");
}

}  // namespace

MatrixField parse_matrix_field(const std::string& spec, int dim_hint) {
  return build_matrix(Parser(spec).parse(), dim_hint);
}

WeightField parse_weight_field(const std::string& spec, int dim_hint) {
  SpecNode n = Parser(spec).parse();
  const int dim = static_cast<int>(get_num_or(n, "n", dim_hint));
  if (n.name == "unit") return unit_weight(dim);
  if (n.name == "power") return power_weight(dim, get_num(n, "gamma"));
  throw std::invalid_argument("unknown weight field '" + n.name + "'");
}

}  // namespace riesz
