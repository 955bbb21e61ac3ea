// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over scalar expressions.
//
// A Tape is an append-only list of nodes. Each node stores its value, the ids
// of its operands and the local partial derivative with respect to each
// operand. Because operands are always recorded before their consumers, the
// node order is a topological order and backward() is a single reverse sweep.
//
// Besides the elementwise primitives there are three fused node kinds used to
// keep tapes small:
//   Dot     b + sum_i w_i * x_i with every term on the tape (LSTM gates)
//   Linear  c + sum_i a_i * x_i with constant coefficients
//   Custom  caller-supplied value and local partials (GP conditioning)
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rnnopt::ad {

enum class Op : std::uint8_t {
  Leaf,
  Detach,
  Add,
  Sub,
  Mul,
  Neg,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Sqrt,
  Div,
  Pow,
  Erf,
  Max,
  Min,
  Dot,
  Linear,
  Custom,
};

std::string_view op_name(Op op) noexcept;

/// Raised for domain violations and non-finite values. `op()` names the
/// primitive that produced the offending value.
class AutodiffError : public std::runtime_error {
 public:
  AutodiffError(Op op, const std::string& what);
  Op op() const noexcept { return op_; }

 private:
  Op op_;
};

class Tape;

class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::uint32_t id() const noexcept { return id_; }
  double value() const noexcept { return value_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id, double value) noexcept
      : tape_(tape), id_(id), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
  double value_ = 0.0;
};

/// Adjoints indexed by node id. Immutable once returned by backward().
class Gradient {
 public:
  Gradient() = default;
  explicit Gradient(std::vector<double> adjoints) : adj_(std::move(adjoints)) {}

  double operator[](Var v) const { return at(v.id()); }
  double at(std::uint32_t id) const { return id < adj_.size() ? adj_[id] : 0.0; }
  std::span<const double> adjoints() const noexcept { return adj_; }

 private:
  std::vector<double> adj_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf. Throws AutodiffError when `value` is not finite.
  Var variable(double value);
  std::vector<Var> variables(std::span<const double> values);

  Var detach(Var v);

  Var unary(Op op, Var a);
  Var binary(Op op, Var a, Var b);
  /// Binary primitive with a constant right (or left, if `constant_left`) operand.
  Var binary(Op op, Var a, double b, bool constant_left = false);
  Var pow(Var base, double exponent);

  /// bias + sum_i w[i] * x[i]; w and x are both differentiated.
  Var dot(Var bias, std::span<const Var> w, std::span<const Var> x);
  Var dot(double bias, std::span<const Var> w, std::span<const Var> x);
  /// bias + sum_i coeffs[i] * x[i] with constant coefficients.
  Var linear(double bias, std::span<const double> coeffs, std::span<const Var> x);
  /// Node with caller-computed value and local partials.
  Var custom(double value, std::span<const Var> operands,
             std::span<const double> partials);

  Gradient backward(Var root) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t operand_count() const noexcept { return operands_.size(); }
  Op op(std::uint32_t id) const { return nodes_.at(id).op; }
  double value(std::uint32_t id) const { return values_.at(id); }
  /// Operand ids of node `id`, in recording order.
  std::span<const std::uint32_t> operands(std::uint32_t id) const;
  std::span<const double> partials(std::uint32_t id) const;

  void reserve(std::size_t nodes, std::size_t operands);
  void clear() noexcept;

 private:
  struct Node {
    Op op;
    std::uint32_t begin;
    std::uint32_t count;
  };

  void check(Var v) const;
  std::uint32_t open(Op op, double value);
  void edge(std::uint32_t operand, double partial) {
    operands_.push_back(operand);
    partials_.push_back(partial);
  }
  Var close(std::uint32_t id) {
    nodes_[id].count = static_cast<std::uint32_t>(operands_.size()) - nodes_[id].begin;
    return Var(this, id, values_[id]);
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<std::uint32_t> operands_;
  std::vector<double> partials_;
};

// --- plain-double helpers shared with the taped primitives -----------------

/// Logistic function, evaluated without overflow for large |x|.
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double value_of(double x) noexcept { return x; }
inline double value_of(Var x) noexcept { return x.value(); }

// --- operators -------------------------------------------------------------

inline Var operator+(Var a, Var b) { return a.tape()->binary(Op::Add, a, b); }
inline Var operator+(Var a, double b) { return a.tape()->binary(Op::Add, a, b); }
inline Var operator+(double a, Var b) { return b.tape()->binary(Op::Add, b, a); }
inline Var operator-(Var a, Var b) { return a.tape()->binary(Op::Sub, a, b); }
inline Var operator-(Var a, double b) { return a.tape()->binary(Op::Sub, a, b); }
inline Var operator-(double a, Var b) { return b.tape()->binary(Op::Sub, b, a, true); }
inline Var operator*(Var a, Var b) { return a.tape()->binary(Op::Mul, a, b); }
inline Var operator*(Var a, double b) { return a.tape()->binary(Op::Mul, a, b); }
inline Var operator*(double a, Var b) { return b.tape()->binary(Op::Mul, b, a); }
inline Var operator/(Var a, Var b) { return a.tape()->binary(Op::Div, a, b); }
inline Var operator/(Var a, double b) { return a.tape()->binary(Op::Div, a, b); }
inline Var operator/(double a, Var b) { return b.tape()->binary(Op::Div, b, a, true); }
inline Var operator-(Var a) { return a.tape()->unary(Op::Neg, a); }

inline Var exp(Var a) { return a.tape()->unary(Op::Exp, a); }
inline Var log(Var a) { return a.tape()->unary(Op::Log, a); }
inline Var tanh(Var a) { return a.tape()->unary(Op::Tanh, a); }
inline Var sigmoid(Var a) { return a.tape()->unary(Op::Sigmoid, a); }
inline Var sqrt(Var a) { return a.tape()->unary(Op::Sqrt, a); }
inline Var erf(Var a) { return a.tape()->unary(Op::Erf, a); }
inline Var pow(Var a, double p) { return a.tape()->pow(a, p); }
inline Var pow(Var a, Var b) { return a.tape()->binary(Op::Pow, a, b); }
inline Var max(Var a, Var b) { return a.tape()->binary(Op::Max, a, b); }
inline Var max(Var a, double b) { return a.tape()->binary(Op::Max, a, b); }
inline Var min(Var a, Var b) { return a.tape()->binary(Op::Min, a, b); }
inline Var min(Var a, double b) { return a.tape()->binary(Op::Min, a, b); }
inline Var detach(Var a) { return a.tape()->detach(a); }

}  // namespace rnnopt::ad
