#pragma once

// Dense 2-D tensors with a tape-based reverse-mode autodiff graph, the Adam
// optimizer, and the named-tensor checkpoint container.
//
// Every tensor is a row-major matrix; vectors are 1 x n rows. Float64
// throughout.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fixloc::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered, address-stable collection of named parameters.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::deque<Parameter>& all() noexcept { return params_; }
  const std::deque<Parameter>& all() const noexcept { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

struct Var {
  int id = -1;
};

/// One forward computation. Nodes are appended in topological order; the
/// backward pass walks them once in reverse. Parameter nodes reference the
/// parameter storage directly and accumulate into Parameter::grad.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value);
  Var param(Parameter& p);
  const Tensor& value(Var v) const;
  /// Gradient of the last backward pass with respect to `v` (empty if unreached).
  const Tensor& grad(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// Elementwise sum; `b` may also be a 1 x cols row broadcast over `a`'s rows.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// s * a + c
  Var affine(Var a, double s, double c = 0.0);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var clamp(Var a, double lo, double hi);
  /// Sum of every element, 1 x 1.
  Var sum(Var a);
  /// Column sums, 1 x cols.
  Var sum_rows(Var a);
  /// Row-wise softmax.
  Var softmax(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t start, std::size_t count);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  Var transpose(Var a);
  /// Embedding lookup: row `indices[i]` of `table` becomes row i.
  Var gather_rows(Var table, std::vector<int> indices);

  /// Single-layer LSTM over `batch` sequences of equal length T.
  ///
  /// `gates_in` holds the input pre-activations x_t W_x + b for every step,
  /// laid out as (T * batch) x 4H with row t * batch + s for sequence s; the
  /// gate blocks are ordered [input, forget, cell, output]. `w_h` is H x 4H;
  /// `h0` and `c0` are batch x H. The result is (T * batch) x 2H holding
  /// [h_t | c_t] for every step and sequence.
  Var lstm(Var gates_in, Var w_h, Var h0, Var c0, std::size_t batch);

  /// Throws NonScalarLoss unless `loss` is 1 x 1. Gradients of parameters
  /// accumulate into Parameter::grad.
  void backward(Var loss);

 private:
  enum class Op : std::uint8_t {
    Input, Param, MatMul, Add, AddRow, Sub, Mul, Affine, Tanh, Sigmoid, Log, Clamp,
    Sum, SumRows, Softmax, ConcatCols, ConcatRows, SliceRows, SliceCols, Transpose,
    Gather, Lstm,
  };

  struct Node {
    Op op = Op::Input;
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    std::vector<int> inputs;
    std::vector<int> indices;
    double a = 0.0;
    double b = 0.0;
    std::size_t n0 = 0;
    std::size_t n1 = 0;
    Tensor cache;  // LSTM gate activations and tanh(c)
  };

  Var push(Node node);
  Node& at(Var v);
  const Node& at(Var v) const;
  Tensor& grad_buffer(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
};

// Dense kernels shared with the model code.
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c);     // c += a b
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c);  // c += a^T b
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c);  // c += a b^T

/// Central-difference check of every parameter tensor against the analytic
/// gradient. `build` must construct the loss on the given graph from `params`.
/// Per tensor, rel = |a - n| / max(|a|, |n|, 1e-12) using Euclidean norms.
struct GradCheckReport {
  std::vector<std::pair<std::string, double>> rel_error;  // per parameter tensor
  double max_rel_error = 0.0;
};
GradCheckReport gradient_check(ParameterSet& params, const std::function<Var(Graph&)>& build,
                               double h = 1e-5);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update of every parameter from Parameter::grad.
/// Throws NonFiniteGradient (leaving parameters untouched) if any gradient
/// is NaN or infinite.
void adam_step(AdamState& state, ParameterSet& params);

/// Versioned named-tensor container; byte layout in docs/checkpoint.md.
void write_checkpoint(std::ostream& out, const ParameterSet& params, const nlohmann::json& meta);
/// Returns the metadata document; parameters are appended to `params`.
nlohmann::json read_checkpoint(std::istream& in, ParameterSet& params);

}  // namespace fixloc::ad
