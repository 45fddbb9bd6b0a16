#include "mmfitz/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace mmfitz::cli {

struct Expression::Node {
  enum class Op { number, walk, add, sub, mul, div, neg, min, max, abs, clip };
  Op op = Op::number;
  double value = 0.0;
  std::vector<Node> args;
};

namespace {

using Node = Expression::Node;
using Op = Node::Op;

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Node parse() {
    Node n = expr();
    skip();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("payoff expression '" + std::string(text_) + "' at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Node binary(Op op, Node lhs, Node rhs) {
    Node n{op, 0.0, {}};
    n.args.push_back(std::move(lhs));
    n.args.push_back(std::move(rhs));
    return n;
  }

  Node expr() {
    Node lhs = term();
    while (true) {
      if (accept('+')) lhs = binary(Op::add, std::move(lhs), term());
      else if (accept('-')) lhs = binary(Op::sub, std::move(lhs), term());
      else return lhs;
    }
  }

  Node term() {
    Node lhs = unary();
    while (true) {
      if (accept('*')) lhs = binary(Op::mul, std::move(lhs), unary());
      else if (accept('/')) lhs = binary(Op::div, std::move(lhs), unary());
      else return lhs;
    }
  }

  Node unary() {
    if (accept('-')) {
      Node n{Op::neg, 0.0, {}};
      n.args.push_back(unary());
      return n;
    }
    if (accept('+')) return unary();
    return primary();
  }

  Node primary() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end");
    if (accept('(')) {
      Node n = expr();
      expect(')');
      return n;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
      if (ec != std::errc()) fail("malformed number");
      pos_ = static_cast<std::size_t>(ptr - text_.data());
      return Node{Op::number, v, {}};
    }
    if (!std::isalpha(static_cast<unsigned char>(c))) fail("unexpected '" + std::string(1, c) + "'");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string name(text_.substr(start, pos_ - start));
    if (name == "w") return Node{Op::walk, 0.0, {}};
    Op op;
    std::size_t min_args = 1;
    std::size_t max_args = 1;
    if (name == "min" || name == "max") {
      op = name == "min" ? Op::min : Op::max;
      min_args = 2;
      max_args = static_cast<std::size_t>(-1);
    } else if (name == "abs") {
      op = Op::abs;
    } else if (name == "clip") {
      op = Op::clip;
      min_args = max_args = 3;
    } else {
      pos_ = start;
      fail("unknown identifier '" + name + "'");
    }
    expect('(');
    Node n{op, 0.0, {}};
    n.args.push_back(expr());
    while (accept(',')) n.args.push_back(expr());
    expect(')');
    if (n.args.size() < min_args || n.args.size() > max_args) fail("wrong number of arguments to " + name);
    return n;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

double evaluate(const Node& n, double w) {
  auto arg = [&](std::size_t i) { return evaluate(n.args[i], w); };
  switch (n.op) {
    case Op::number: return n.value;
    case Op::walk: return w;
    case Op::add: return arg(0) + arg(1);
    case Op::sub: return arg(0) - arg(1);
    case Op::mul: return arg(0) * arg(1);
    case Op::div: return arg(0) / arg(1);
    case Op::neg: return -arg(0);
    case Op::abs: return std::abs(arg(0));
    case Op::clip: {
      const double lo = arg(1);
      const double hi = arg(2);
      return std::min(std::max(arg(0), lo), hi);
    }
    case Op::min:
    case Op::max: {
      double acc = arg(0);
      for (std::size_t i = 1; i < n.args.size(); ++i) acc = n.op == Op::min ? std::min(acc, arg(i)) : std::max(acc, arg(i));
      return acc;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.root_ = std::make_shared<const Node>(Parser(text).parse());
  e.source_ = std::string(text);
  return e;
}

double Expression::operator()(double w) const { return evaluate(*root_, w); }

}  // namespace mmfitz::cli
