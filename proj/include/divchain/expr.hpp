#pragma once

// Small scalar expression language used by scenario files.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Variables: x y t k u v. Constants: pi. Functions: sin cos exp log sqrt abs
// sign H min max Cantor. H(0) = 1/2, sign(0) = 0; Cantor is the middle-thirds
// function. Derivatives are almost-everywhere derivatives, so sign, H and
// Cantor differentiate to 0.

#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "divchain/cantor.hpp"
#include "divchain/core.hpp"

namespace divchain {

enum class Var { X = 0, Y, T, K, U, V };
inline constexpr int kVarCount = 6;
using VarValues = std::array<double, kVarCount>;

namespace detail {

enum class Op {
  Const, Var, Neg, Add, Sub, Mul, Div, Pow,
  Sin, Cos, Exp, Log, Sqrt, Abs, Sign, Heav, Min, Max, Cantor,
};

struct Node;
using NodeP = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Const;
  double value = 0.0;
  int var = 0;
  NodeP a, b;
};

inline NodeP mk_const(double v) { return std::make_shared<Node>(Node{Op::Const, v, 0, nullptr, nullptr}); }
inline NodeP mk_var(int v) { return std::make_shared<Node>(Node{Op::Var, 0.0, v, nullptr, nullptr}); }
inline bool is_const(const NodeP& n, double v) { return n->op == Op::Const && n->value == v; }

inline NodeP mk(Op op, NodeP a, NodeP b = nullptr) {
  if (a->op == Op::Const && (!b || b->op == Op::Const)) {
    const double x = a->value, y = b ? b->value : 0.0;
    switch (op) {
      case Op::Neg: return mk_const(-x);
      case Op::Add: return mk_const(x + y);
      case Op::Sub: return mk_const(x - y);
      case Op::Mul: return mk_const(x * y);
      default: break;
    }
  }
  switch (op) {
    case Op::Add:
      if (is_const(a, 0)) return b;
      if (is_const(b, 0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0)) return a;
      if (is_const(a, 0)) return mk(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0) || is_const(b, 0)) return mk_const(0.0);
      if (is_const(a, 1)) return b;
      if (is_const(b, 1)) return a;
      break;
    case Op::Div:
      if (is_const(a, 0)) return mk_const(0.0);
      if (is_const(b, 1)) return a;
      break;
    case Op::Neg:
      if (a->op == Op::Neg) return a->a;
      break;
    default: break;
  }
  return std::make_shared<Node>(Node{op, 0.0, 0, std::move(a), std::move(b)});
}

inline double heaviside(double x) { return x > 0 ? 1.0 : (x < 0 ? 0.0 : 0.5); }

class Parser {
 public:
  explicit Parser(std::string_view s) : src_(s) {}

  NodeP parse() {
    auto n = expr();
    skip();
    if (pos_ < src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return n;
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    std::ostringstream os;
    os << "column " << pos_ + 1 << ": " << msg << " in \"" << src_ << "\"";
    throw Error(ErrorKind::Parse, os.str());
  }
  void skip() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodeP expr() {
    auto n = term();
    for (;;) {
      if (eat('+')) n = mk(Op::Add, n, term());
      else if (eat('-')) n = mk(Op::Sub, n, term());
      else return n;
    }
  }
  NodeP term() {
    auto n = unary();
    for (;;) {
      if (eat('*')) n = mk(Op::Mul, n, unary());
      else if (eat('/')) n = mk(Op::Div, n, unary());
      else return n;
    }
  }
  NodeP unary() {
    if (eat('-')) return mk(Op::Neg, unary());
    if (eat('+')) return unary();
    return power();
  }
  NodeP power() {
    auto n = primary();
    if (eat('^')) return mk(Op::Pow, n, unary());
    return n;
  }
  NodeP primary() {
    skip();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      auto n = expr();
      if (!eat(')')) fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    fail("unexpected '" + std::string(1, c) + "'");
  }
  NodeP number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    const std::string text(src_.substr(start, pos_ - start));
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return mk_const(v);
    } catch (const std::exception&) {
      pos_ = start;
      fail("malformed number '" + text + "'");
    }
  }
  NodeP name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    const std::string id(src_.substr(start, pos_ - start));
    skip();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      ++pos_;
      std::vector<NodeP> args{expr()};
      while (eat(',')) args.push_back(expr());
      if (!eat(')')) fail("expected ')' after arguments of " + id);
      return call(id, args, start);
    }
    static const char* names[] = {"x", "y", "t", "k", "u", "v"};
    for (int i = 0; i < kVarCount; ++i)
      if (id == names[i]) return mk_var(i);
    if (id == "pi") return mk_const(std::numbers::pi);
    pos_ = start;
    fail("unknown name '" + id + "'");
  }
  NodeP call(const std::string& id, const std::vector<NodeP>& args, std::size_t at) {
    struct Fn {
      const char* name;
      Op op;
      std::size_t arity;
    };
    static const Fn fns[] = {{"sin", Op::Sin, 1},   {"cos", Op::Cos, 1},   {"exp", Op::Exp, 1},
                             {"log", Op::Log, 1},   {"sqrt", Op::Sqrt, 1}, {"abs", Op::Abs, 1},
                             {"sign", Op::Sign, 1}, {"H", Op::Heav, 1},    {"min", Op::Min, 2},
                             {"max", Op::Max, 2},   {"Cantor", Op::Cantor, 1}};
    for (const auto& f : fns) {
      if (id != f.name) continue;
      if (args.size() != f.arity) {
        pos_ = at;
        fail(id + " expects " + std::to_string(f.arity) + " argument(s)");
      }
      return mk(f.op, args[0], f.arity == 2 ? args[1] : nullptr);
    }
    pos_ = at;
    fail("unknown function '" + id + "'");
  }
};

inline NodeP differentiate(const NodeP& n, int v) {
  auto d = [v](const NodeP& m) { return differentiate(m, v); };
  const NodeP& a = n->a;
  const NodeP& b = n->b;
  switch (n->op) {
    case Op::Const: return mk_const(0.0);
    case Op::Var: return mk_const(n->var == v ? 1.0 : 0.0);
    case Op::Neg: return mk(Op::Neg, d(a));
    case Op::Add: return mk(Op::Add, d(a), d(b));
    case Op::Sub: return mk(Op::Sub, d(a), d(b));
    case Op::Mul: return mk(Op::Add, mk(Op::Mul, d(a), b), mk(Op::Mul, a, d(b)));
    case Op::Div:
      return mk(Op::Div, mk(Op::Sub, mk(Op::Mul, d(a), b), mk(Op::Mul, a, d(b))), mk(Op::Mul, b, b));
    case Op::Pow: {
      if (b->op == Op::Const) {
        return mk(Op::Mul, mk(Op::Mul, mk_const(b->value), mk(Op::Pow, a, mk_const(b->value - 1.0))), d(a));
      }
      auto db = d(b);
      auto term1 = mk(Op::Mul, db, mk(Op::Log, a));
      auto term2 = mk(Op::Div, mk(Op::Mul, b, d(a)), a);
      return mk(Op::Mul, n, mk(Op::Add, term1, term2));
    }
    case Op::Sin: return mk(Op::Mul, mk(Op::Cos, a), d(a));
    case Op::Cos: return mk(Op::Neg, mk(Op::Mul, mk(Op::Sin, a), d(a)));
    case Op::Exp: return mk(Op::Mul, n, d(a));
    case Op::Log: return mk(Op::Div, d(a), a);
    case Op::Sqrt: return mk(Op::Div, d(a), mk(Op::Mul, mk_const(2.0), n));
    case Op::Abs: return mk(Op::Mul, mk(Op::Sign, a), d(a));
    case Op::Sign:
    case Op::Heav:
    case Op::Cantor: return mk_const(0.0);
    case Op::Min:
      return mk(Op::Add, mk(Op::Mul, d(a), mk(Op::Heav, mk(Op::Sub, b, a))),
                mk(Op::Mul, d(b), mk(Op::Heav, mk(Op::Sub, a, b))));
    case Op::Max:
      return mk(Op::Add, mk(Op::Mul, d(a), mk(Op::Heav, mk(Op::Sub, a, b))),
                mk(Op::Mul, d(b), mk(Op::Heav, mk(Op::Sub, b, a))));
  }
  return mk_const(0.0);
}

inline bool depends(const NodeP& n, int v) {
  if (!n) return false;
  if (n->op == Op::Var) return n->var == v;
  return depends(n->a, v) || depends(n->b, v);
}

inline bool uses_op(const NodeP& n, Op op) {
  if (!n) return false;
  return n->op == op || uses_op(n->a, op) || uses_op(n->b, op);
}

inline void print(const NodeP& n, std::ostream& os) {
  static const char* fn[] = {"", "", "-", "+", "-", "*", "/", "^", "sin", "cos",
                             "exp", "log", "sqrt", "abs", "sign", "H", "min", "max", "Cantor"};
  static const char* vars[] = {"x", "y", "t", "k", "u", "v"};
  switch (n->op) {
    case Op::Const: {
      std::ostringstream s;
      s.precision(17);
      s << n->value;
      os << s.str();
      return;
    }
    case Op::Var: os << vars[n->var]; return;
    case Op::Neg: os << "(-"; print(n->a, os); os << ")"; return;
    case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow:
      os << "(";
      print(n->a, os);
      os << fn[int(n->op)];
      print(n->b, os);
      os << ")";
      return;
    default:
      os << fn[int(n->op)] << "(";
      print(n->a, os);
      if (n->b) {
        os << ",";
        print(n->b, os);
      }
      os << ")";
  }
}

struct Instr {
  Op op;
  double value;
  int var;
};

inline void emit(const NodeP& n, std::vector<Instr>& code, int& depth, int& max_depth) {
  if (n->a) emit(n->a, code, depth, max_depth);
  if (n->b) emit(n->b, code, depth, max_depth);
  if (n->op == Op::Const || n->op == Op::Var) {
    ++depth;
  } else if (n->b) {
    --depth;
  }
  max_depth = std::max(max_depth, depth);
  code.push_back(Instr{n->op, n->value, n->var});
}

}  // namespace detail

/// A compiled scalar expression in the variables x, y, t, k, u, v.
class Expr {
 public:
  Expr() : Expr(detail::mk_const(0.0)) {}
  static Expr parse(std::string_view src) { return Expr(detail::Parser(src).parse()); }
  static Expr constant(double c) { return Expr(detail::mk_const(c)); }

  double operator()(const VarValues& vals) const {
    double stack[64] = {};
    double* heap = nullptr;
    std::vector<double> big;
    if (stack_need_ > 64) {
      big.resize(std::size_t(stack_need_));
      heap = big.data();
    }
    double* s = heap ? heap : stack;
    int sp = 0;
    for (const auto& in : code_) {
      using detail::Op;
      switch (in.op) {
        case Op::Const: s[sp++] = in.value; break;
        case Op::Var: s[sp++] = vals[std::size_t(in.var)]; break;
        case Op::Neg: s[sp - 1] = -s[sp - 1]; break;
        case Op::Add: --sp; s[sp - 1] += s[sp]; break;
        case Op::Sub: --sp; s[sp - 1] -= s[sp]; break;
        case Op::Mul: --sp; s[sp - 1] *= s[sp]; break;
        case Op::Div: --sp; s[sp - 1] /= s[sp]; break;
        case Op::Pow: --sp; s[sp - 1] = pow_(s[sp - 1], s[sp]); break;
        case Op::Sin: s[sp - 1] = std::sin(s[sp - 1]); break;
        case Op::Cos: s[sp - 1] = std::cos(s[sp - 1]); break;
        case Op::Exp: s[sp - 1] = std::exp(s[sp - 1]); break;
        case Op::Log: s[sp - 1] = std::log(s[sp - 1]); break;
        case Op::Sqrt: s[sp - 1] = std::sqrt(s[sp - 1]); break;
        case Op::Abs: s[sp - 1] = std::abs(s[sp - 1]); break;
        case Op::Sign: s[sp - 1] = sgn(s[sp - 1]); break;
        case Op::Heav: s[sp - 1] = detail::heaviside(s[sp - 1]); break;
        case Op::Min: --sp; s[sp - 1] = std::min(s[sp - 1], s[sp]); break;
        case Op::Max: --sp; s[sp - 1] = std::max(s[sp - 1], s[sp]); break;
        case Op::Cantor: s[sp - 1] = cantor_function(s[sp - 1]); break;
      }
    }
    return s[0];
  }

  double operator()(double x, double y = 0.0, double t = 0.0, double k = 0.0, double u = 0.0, double v = 0.0) const {
    return (*this)(VarValues{x, y, t, k, u, v});
  }
  double at(const Point& p, double t = 0.0) const { return (*this)(VarValues{p[0], p[1], t, 0.0, 0.0, 0.0}); }

  Expr diff(Var v) const { return Expr(detail::differentiate(root_, int(v))); }
  bool depends_on(Var v) const { return detail::depends(root_, int(v)); }
  bool uses_cantor() const { return detail::uses_op(root_, detail::Op::Cantor); }
  bool is_constant() const { return root_->op == detail::Op::Const; }
  bool is_zero() const { return is_constant() && root_->value == 0.0; }

  std::string str() const {
    std::ostringstream os;
    detail::print(root_, os);
    return os.str();
  }

 private:
  explicit Expr(detail::NodeP root) : root_(std::move(root)) {
    int depth = 0;
    detail::emit(root_, code_, depth, stack_need_);
  }

  static double pow_(double a, double b) {
    if (b == 2.0) return a * a;
    if (b == 1.0) return a;
    return std::pow(a, b);
  }

  detail::NodeP root_;
  std::vector<detail::Instr> code_;
  int stack_need_ = 0;
};

}  // namespace divchain
