// SPDX-License-Identifier: Apache-2.0
#include "rnnopt/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace rnnopt::ad {

std::string_view op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Detach: return "detach";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sqrt: return "sqrt";
    case Op::Div: return "div";
    case Op::Pow: return "pow";
    case Op::Erf: return "erf";
    case Op::Max: return "max";
    case Op::Min: return "min";
    case Op::Dot: return "dot";
    case Op::Linear: return "linear";
    case Op::Custom: return "custom";
  }
  return "unknown";
}

AutodiffError::AutodiffError(Op op, const std::string& what)
    : std::runtime_error(std::string(op_name(op)) + ": " + what), op_(op) {}

namespace {

[[noreturn]] void domain_error(Op op, const char* what, double x) {
  std::ostringstream os;
  os << what << " (operand " << x << ")";
  throw AutodiffError(op, os.str());
}

constexpr double kTwoOverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;

}  // namespace

void Tape::check(Var v) const {
  if (v.tape() != this) {
    throw std::invalid_argument("autodiff: operand belongs to a different tape");
  }
}

std::uint32_t Tape::open(Op op, double value) {
  if (!std::isfinite(value)) {
    throw AutodiffError(op, "non-finite value");
  }
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{op, static_cast<std::uint32_t>(operands_.size()), 0});
  values_.push_back(value);
  return id;
}

Var Tape::variable(double value) { return close(open(Op::Leaf, value)); }

std::vector<Var> Tape::variables(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) {
    out.push_back(variable(v));
  }
  return out;
}

Var Tape::detach(Var v) {
  check(v);
  return close(open(Op::Detach, v.value()));
}

Var Tape::unary(Op op, Var a) {
  check(a);
  const double x = a.value();
  double y = 0.0;
  double d = 0.0;
  switch (op) {
    case Op::Neg:
      y = -x;
      d = -1.0;
      break;
    case Op::Exp:
      y = std::exp(x);
      d = y;
      break;
    case Op::Log:
      if (!(x > 0.0)) domain_error(op, "log of non-positive value", x);
      y = std::log(x);
      d = 1.0 / x;
      break;
    case Op::Tanh:
      y = std::tanh(x);
      d = 1.0 - y * y;
      break;
    case Op::Sigmoid:
      y = sigmoid(x);
      d = y * (1.0 - y);
      break;
    case Op::Sqrt:
      if (x < 0.0) domain_error(op, "sqrt of negative value", x);
      y = std::sqrt(x);
      // Infinite at zero; backward() only multiplies it by non-zero adjoints.
      d = y > 0.0 ? 0.5 / y : HUGE_VAL;
      break;
    case Op::Erf:
      y = std::erf(x);
      d = kTwoOverSqrtPi * std::exp(-x * x);
      break;
    default:
      throw std::invalid_argument("autodiff: not a unary op: " + std::string(op_name(op)));
  }
  const auto id = open(op, y);
  edge(a.id(), d);
  return close(id);
}

Var Tape::binary(Op op, Var a, Var b) {
  check(a);
  check(b);
  const double x = a.value();
  const double z = b.value();
  double y = 0.0;
  double da = 0.0;
  double db = 0.0;
  switch (op) {
    case Op::Add:
      y = x + z;
      da = 1.0;
      db = 1.0;
      break;
    case Op::Sub:
      y = x - z;
      da = 1.0;
      db = -1.0;
      break;
    case Op::Mul:
      y = x * z;
      da = z;
      db = x;
      break;
    case Op::Div:
      if (z == 0.0) domain_error(op, "division by zero", x);
      y = x / z;
      da = 1.0 / z;
      db = -y / z;
      break;
    case Op::Pow:
      if (!(x > 0.0)) domain_error(op, "pow with variable exponent needs a positive base", x);
      y = std::pow(x, z);
      da = z * std::pow(x, z - 1.0);
      db = y * std::log(x);
      break;
    case Op::Max:
      y = x >= z ? x : z;
      da = x >= z ? 1.0 : 0.0;
      db = 1.0 - da;
      break;
    case Op::Min:
      y = x <= z ? x : z;
      da = x <= z ? 1.0 : 0.0;
      db = 1.0 - da;
      break;
    default:
      throw std::invalid_argument("autodiff: not a binary op: " + std::string(op_name(op)));
  }
  const auto id = open(op, y);
  edge(a.id(), da);
  edge(b.id(), db);
  return close(id);
}

Var Tape::binary(Op op, Var a, double c, bool constant_left) {
  check(a);
  const double x = a.value();
  double y = 0.0;
  double d = 0.0;
  switch (op) {
    case Op::Add:
      y = x + c;
      d = 1.0;
      break;
    case Op::Sub:
      y = constant_left ? c - x : x - c;
      d = constant_left ? -1.0 : 1.0;
      break;
    case Op::Mul:
      y = x * c;
      d = c;
      break;
    case Op::Div:
      if (constant_left) {
        if (x == 0.0) domain_error(op, "division by zero", c);
        y = c / x;
        d = -y / x;
      } else {
        if (c == 0.0) domain_error(op, "division by zero", x);
        y = x / c;
        d = 1.0 / c;
      }
      break;
    case Op::Max:
      y = x >= c ? x : c;
      d = x >= c ? 1.0 : 0.0;
      break;
    case Op::Min:
      y = x <= c ? x : c;
      d = x <= c ? 1.0 : 0.0;
      break;
    default:
      throw std::invalid_argument("autodiff: not a binary op: " + std::string(op_name(op)));
  }
  const auto id = open(op, y);
  edge(a.id(), d);
  return close(id);
}

Var Tape::pow(Var base, double p) {
  check(base);
  const double x = base.value();
  if (x < 0.0 && p != std::floor(p)) {
    domain_error(Op::Pow, "negative base with non-integer exponent", x);
  }
  if (x == 0.0 && p < 0.0) {
    domain_error(Op::Pow, "zero base with negative exponent", x);
  }
  const double y = std::pow(x, p);
  const double d = p == 0.0 ? 0.0 : p * std::pow(x, p - 1.0);
  const auto id = open(Op::Pow, y);
  edge(base.id(), d);
  return close(id);
}

Var Tape::dot(Var bias, std::span<const Var> w, std::span<const Var> x) {
  check(bias);
  if (w.size() != x.size()) {
    throw std::invalid_argument("autodiff: dot operands differ in length");
  }
  double y = bias.value();
  for (std::size_t i = 0; i < w.size(); ++i) {
    y += w[i].value() * x[i].value();
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    check(w[i]);
    check(x[i]);
  }
  const auto id = open(Op::Dot, y);
  edge(bias.id(), 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    edge(w[i].id(), x[i].value());
    edge(x[i].id(), w[i].value());
  }
  return close(id);
}

Var Tape::dot(double bias, std::span<const Var> w, std::span<const Var> x) {
  if (w.size() != x.size()) {
    throw std::invalid_argument("autodiff: dot operands differ in length");
  }
  double y = bias;
  for (std::size_t i = 0; i < w.size(); ++i) {
    y += w[i].value() * x[i].value();
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    check(w[i]);
    check(x[i]);
  }
  const auto id = open(Op::Dot, y);
  for (std::size_t i = 0; i < w.size(); ++i) {
    edge(w[i].id(), x[i].value());
    edge(x[i].id(), w[i].value());
  }
  return close(id);
}

Var Tape::linear(double bias, std::span<const double> coeffs, std::span<const Var> x) {
  if (coeffs.size() != x.size()) {
    throw std::invalid_argument("autodiff: linear operands differ in length");
  }
  double y = bias;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y += coeffs[i] * x[i].value();
  }
  for (const Var& v : x) {
    check(v);
  }
  const auto id = open(Op::Linear, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    edge(x[i].id(), coeffs[i]);
  }
  return close(id);
}

Var Tape::custom(double value, std::span<const Var> operands,
                 std::span<const double> partials) {
  if (operands.size() != partials.size()) {
    throw std::invalid_argument("autodiff: custom node needs one partial per operand");
  }
  for (const Var& v : operands) {
    check(v);
  }
  const auto id = open(Op::Custom, value);
  for (std::size_t i = 0; i < operands.size(); ++i) {
    edge(operands[i].id(), partials[i]);
  }
  return close(id);
}

Gradient Tape::backward(Var root) const {
  if (root.tape() != this || root.id() >= nodes_.size()) {
    throw std::invalid_argument("autodiff: backward root is not on this tape");
  }
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[root.id()] = 1.0;
  for (std::uint32_t i = root.id() + 1; i-- > 0;) {
    const double a = adj[i];
    if (a == 0.0) {
      continue;
    }
    const Node& n = nodes_[i];
    const std::uint32_t end = n.begin + n.count;
    for (std::uint32_t k = n.begin; k < end; ++k) {
      const double contribution = partials_[k] * a;
      if (!std::isfinite(contribution)) {
        throw AutodiffError(n.op, "non-finite adjoint during backward pass");
      }
      adj[operands_[k]] += contribution;
    }
  }
  return Gradient(std::move(adj));
}

std::span<const std::uint32_t> Tape::operands(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return {operands_.data() + n.begin, n.count};
}

std::span<const double> Tape::partials(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return {partials_.data() + n.begin, n.count};
}

void Tape::reserve(std::size_t nodes, std::size_t operands) {
  nodes_.reserve(nodes);
  values_.reserve(nodes);
  operands_.reserve(operands);
  partials_.reserve(operands);
}

void Tape::clear() noexcept {
  nodes_.clear();
  values_.clear();
  operands_.clear();
  partials_.clear();
}

}  // namespace rnnopt::ad
