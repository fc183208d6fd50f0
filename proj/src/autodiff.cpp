#include "fixloc/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "fixloc/error.hpp"

namespace fixloc::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeMismatch(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

void add_into(Tensor& dst, const Tensor& src, double scale = 1.0) {
  auto d = dst.data();
  const auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) + " for shape " +
                        std::to_string(rows) + "x" + std::to_string(cols));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  // a: n x m, b: n x p, c: m x p
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  for (std::size_t k = 0; k < n; ++k) {
    const double* ak = a.row(k);
    const double* bk = b.row(k);
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.row(i);
      for (std::size_t j = 0; j < p; ++j) ci[j] += aki * bk[j];
    }
  }
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  // a: m x n, b: p x n, c: m x p
  const std::size_t m = a.rows(), n = a.cols(), p = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      const double* bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += ai[k] * bj[k];
      ci[j] += s;
    }
  }
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Tensor init) {
  if (contains(name)) throw FormatError("duplicate parameter '" + name + "'");
  Tensor grad(init.rows(), init.cols());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw FormatError("no parameter named '" + std::string(name) + "'");
}

const Parameter& ParameterSet::get(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      p.grad = Tensor(p.value.rows(), p.value.cols());
    else
      p.grad.fill(0.0);
  }
}

// ---------------------------------------------------------------------------
// Graph construction

Var Graph::push(Node node) {
  if (node.op != Op::Param && !node.value.all_finite())
    throw NonFiniteValue("non-finite value in forward pass (node " + std::to_string(nodes_.size()) + ")");
  if (node.op != Op::Input && node.op != Op::Param) {
    node.needs_grad = std::any_of(node.inputs.begin(), node.inputs.end(),
                                  [&](int i) { return nodes_[static_cast<std::size_t>(i)].needs_grad; });
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::at(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
const Graph::Node& Graph::at(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

const Tensor& Graph::value(Var v) const {
  const Node& n = at(v);
  return n.param ? n.param->value : n.value;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = at(v);
  return n.param ? n.param->grad : n.grad;
}

Var Graph::input(Tensor value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.param = &p;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.cols() != y.rows()) shape_error("matmul", x, y);
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a.id, b.id};
  n.value = Tensor(x.rows(), y.cols());
  matmul_acc(x, y, n.value);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  Node n;
  n.inputs = {a.id, b.id};
  n.value = x;
  if (x.rows() == y.rows() && x.cols() == y.cols()) {
    n.op = Op::Add;
    add_into(n.value, y);
  } else if (y.rows() == 1 && y.cols() == x.cols()) {
    n.op = Op::AddRow;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double* out = n.value.row(r);
      for (std::size_t c = 0; c < x.cols(); ++c) out[c] += y[c];
    }
  } else {
    shape_error("add", x, y);
  }
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error("sub", x, y);
  Node n;
  n.op = Op::Sub;
  n.inputs = {a.id, b.id};
  n.value = x;
  add_into(n.value, y, -1.0);
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error("mul", x, y);
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  n.value = x;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] *= y[i];
  return push(std::move(n));
}

Var Graph::affine(Var a, double s, double c) {
  Node n;
  n.op = Op::Affine;
  n.inputs = {a.id};
  n.a = s;
  n.value = value(a);
  for (auto& v : n.value.data()) v = s * v + c;
  return push(std::move(n));
}

Var Graph::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.inputs = {a.id};
  n.value = value(a);
  for (auto& v : n.value.data()) v = std::tanh(v);
  return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.inputs = {a.id};
  n.value = value(a);
  for (auto& v : n.value.data()) v = sigmoid_scalar(v);
  return push(std::move(n));
}

Var Graph::log(Var a) {
  Node n;
  n.op = Op::Log;
  n.inputs = {a.id};
  n.value = value(a);
  for (auto& v : n.value.data()) v = std::log(v);
  return push(std::move(n));
}

Var Graph::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::Clamp;
  n.inputs = {a.id};
  n.a = lo;
  n.b = hi;
  n.value = value(a);
  for (auto& v : n.value.data()) v = std::clamp(v, lo, hi);
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.inputs = {a.id};
  double s = 0.0;
  for (const double v : value(a).data()) s += v;
  n.value = Tensor(1, 1, s);
  return push(std::move(n));
}

Var Graph::sum_rows(Var a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::SumRows;
  n.inputs = {a.id};
  n.value = Tensor(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value[c] += x(r, c);
  return push(std::move(n));
}

Var Graph::softmax(Var a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::Softmax;
  n.inputs = {a.id};
  n.value = Tensor(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = x.row(r);
    double* out = n.value.row(r);
    const double mx = *std::max_element(in, in + x.cols());
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) z += (out[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] /= z;
  }
  return push(std::move(n));
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no operands");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  Node n;
  n.op = Op::ConcatCols;
  for (const Var p : parts) {
    const Tensor& t = value(p);
    if (t.rows() != rows) shape_error("concat_cols", value(parts[0]), t);
    cols += t.cols();
    n.inputs.push_back(p.id);
  }
  n.value = Tensor(rows, cols);
  std::size_t off = 0;
  for (const Var p : parts) {
    const Tensor& t = value(p);
    for (std::size_t r = 0; r < rows; ++r) std::copy(t.row(r), t.row(r) + t.cols(), n.value.row(r) + off);
    off += t.cols();
  }
  return push(std::move(n));
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no operands");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  Node n;
  n.op = Op::ConcatRows;
  for (const Var p : parts) {
    const Tensor& t = value(p);
    if (t.cols() != cols) shape_error("concat_rows", value(parts[0]), t);
    rows += t.rows();
    n.inputs.push_back(p.id);
  }
  n.value = Tensor(rows, cols);
  std::size_t off = 0;
  for (const Var p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data().begin(), t.data().end(), n.value.data().begin() + static_cast<std::ptrdiff_t>(off * cols));
    off += t.rows();
  }
  return push(std::move(n));
}

Var Graph::slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& x = value(a);
  if (start + count > x.rows())
    throw ShapeMismatch("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) +
                        ") of " + x.shape_string());
  Node n;
  n.op = Op::SliceRows;
  n.inputs = {a.id};
  n.n0 = start;
  n.value = Tensor(count, x.cols());
  std::copy(x.row(start), x.row(start) + count * x.cols(), n.value.data().begin());
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& x = value(a);
  if (start + count > x.cols())
    throw ShapeMismatch("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) +
                        ") of " + x.shape_string());
  Node n;
  n.op = Op::SliceCols;
  n.inputs = {a.id};
  n.n0 = start;
  n.value = Tensor(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy(x.row(r) + start, x.row(r) + start + count, n.value.row(r));
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  const Tensor& x = value(a);
  Node n;
  n.op = Op::Transpose;
  n.inputs = {a.id};
  n.value = Tensor(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value(c, r) = x(r, c);
  return push(std::move(n));
}

Var Graph::gather_rows(Var table, std::vector<int> indices) {
  const Tensor& t = value(table);
  Node n;
  n.op = Op::Gather;
  n.inputs = {table.id};
  n.value = Tensor(indices.size(), t.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || static_cast<std::size_t>(r) >= t.rows())
      throw ShapeMismatch("gather_rows: index " + std::to_string(r) + " outside " + t.shape_string());
    std::copy(t.row(static_cast<std::size_t>(r)), t.row(static_cast<std::size_t>(r)) + t.cols(),
              n.value.row(i));
  }
  n.indices = std::move(indices);
  return push(std::move(n));
}

Var Graph::lstm(Var gates_in, Var w_h, Var h0, Var c0, std::size_t batch) {
  const Tensor& x = value(gates_in);
  const Tensor& wh = value(w_h);
  const Tensor& hi = value(h0);
  const Tensor& ci = value(c0);
  const std::size_t hidden = wh.rows();
  if (wh.cols() != 4 * hidden) shape_error("lstm w_h", wh, x);
  if (batch == 0 || x.rows() % batch != 0 || x.cols() != 4 * hidden) shape_error("lstm gates_in", x, wh);
  if (hi.rows() != batch || hi.cols() != hidden) shape_error("lstm h0", hi, wh);
  if (ci.rows() != batch || ci.cols() != hidden) shape_error("lstm c0", ci, wh);
  const std::size_t steps = x.rows() / batch;

  Node n;
  n.op = Op::Lstm;
  n.inputs = {gates_in.id, w_h.id, h0.id, c0.id};
  n.n0 = batch;
  n.value = Tensor(steps * batch, 2 * hidden);
  n.cache = Tensor(steps * batch, 5 * hidden);
  std::vector<double> pre(4 * hidden);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < batch; ++s) {
      const std::size_t r = t * batch + s;
      const double* h_prev = t == 0 ? hi.row(s) : n.value.row(r - batch);
      const double* c_prev = t == 0 ? ci.row(s) : n.value.row(r - batch) + hidden;
      std::copy(x.row(r), x.row(r) + 4 * hidden, pre.begin());
      for (std::size_t k = 0; k < hidden; ++k) {
        const double hk = h_prev[k];
        if (hk == 0.0) continue;
        const double* wk = wh.row(k);
        for (std::size_t j = 0; j < 4 * hidden; ++j) pre[j] += hk * wk[j];
      }
      double* gates = n.cache.row(r);
      double* out = n.value.row(r);
      for (std::size_t k = 0; k < hidden; ++k) {
        const double ig = sigmoid_scalar(pre[k]);
        const double fg = sigmoid_scalar(pre[hidden + k]);
        const double gg = std::tanh(pre[2 * hidden + k]);
        const double og = sigmoid_scalar(pre[3 * hidden + k]);
        const double c = fg * c_prev[k] + ig * gg;
        const double tc = std::tanh(c);
        gates[k] = ig;
        gates[hidden + k] = fg;
        gates[2 * hidden + k] = gg;
        gates[3 * hidden + k] = og;
        gates[4 * hidden + k] = tc;
        out[k] = og * tc;
        out[hidden + k] = c;
      }
    }
  }
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  Tensor& g = n.param ? n.param->grad : n.grad;
  const Tensor& v = n.param ? n.param->value : n.value;
  if (g.rows() != v.rows() || g.cols() != v.cols()) g = Tensor(v.rows(), v.cols());
  return g;
}

void Graph::backward(Var loss) {
  const Tensor& l = value(loss);
  if (l.rows() != 1 || l.cols() != 1) throw NonScalarLoss("loss has shape " + l.shape_string());
  for (auto& n : nodes_)
    if (!n.param) n.grad = Tensor();
  grad_buffer(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.op == Op::Input || n.op == Op::Param || n.grad.empty()) continue;
    backward_node(id);
  }
}

void Graph::backward_node(int id) {
  // Copy what we need: grad_buffer() may reallocate other nodes' grads but
  // never this node's storage, so references to `self` stay valid.
  Node& self = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = self.grad;
  auto needs = [&](std::size_t k) {
    return nodes_[static_cast<std::size_t>(self.inputs[k])].needs_grad;
  };
  auto in_value = [&](std::size_t k) -> const Tensor& { return value(Var{self.inputs[k]}); };
  auto in_grad = [&](std::size_t k) -> Tensor& { return grad_buffer(self.inputs[k]); };

  switch (self.op) {
    case Op::MatMul:
      if (needs(0)) matmul_nt_acc(g, in_value(1), in_grad(0));
      if (needs(1)) matmul_tn_acc(in_value(0), g, in_grad(1));
      break;
    case Op::Add:
      if (needs(0)) add_into(in_grad(0), g);
      if (needs(1)) add_into(in_grad(1), g);
      break;
    case Op::AddRow:
      if (needs(0)) add_into(in_grad(0), g);
      if (needs(1)) {
        Tensor& gb = in_grad(1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      }
      break;
    case Op::Sub:
      if (needs(0)) add_into(in_grad(0), g);
      if (needs(1)) add_into(in_grad(1), g, -1.0);
      break;
    case Op::Mul:
      if (needs(0)) {
        Tensor& ga = in_grad(0);
        const Tensor& y = in_value(1);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (needs(1)) {
        Tensor& gb = in_grad(1);
        const Tensor& x = in_value(0);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
      break;
    case Op::Affine:
      add_into(in_grad(0), g, self.a);
      break;
    case Op::Tanh: {
      Tensor& ga = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - self.value[i] * self.value[i]);
      break;
    }
    case Op::Sigmoid: {
      Tensor& ga = in_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * self.value[i] * (1.0 - self.value[i]);
      break;
    }
    case Op::Log: {
      Tensor& ga = in_grad(0);
      const Tensor& x = in_value(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      break;
    }
    case Op::Clamp: {
      Tensor& ga = in_grad(0);
      const Tensor& x = in_value(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] >= self.a && x[i] <= self.b) ga[i] += g[i];
      break;
    }
    case Op::Sum: {
      Tensor& ga = in_grad(0);
      for (auto& v : ga.data()) v += g[0];
      break;
    }
    case Op::SumRows: {
      Tensor& ga = in_grad(0);
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
      break;
    }
    case Op::Softmax: {
      Tensor& ga = in_grad(0);
      const Tensor& y = self.value;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
      }
      break;
    }
    case Op::ConcatCols: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        const std::size_t w = in_value(k).cols();
        if (needs(k)) {
          Tensor& gk = in_grad(k);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) gk(r, c) += g(r, off + c);
        }
        off += w;
      }
      break;
    }
    case Op::ConcatRows: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        const std::size_t h = in_value(k).rows();
        if (needs(k)) {
          Tensor& gk = in_grad(k);
          const double* src = g.row(off);
          for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += src[i];
        }
        off += h;
      }
      break;
    }
    case Op::SliceRows: {
      Tensor& ga = in_grad(0);
      double* dst = ga.row(self.n0);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      break;
    }
    case Op::SliceCols: {
      Tensor& ga = in_grad(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, self.n0 + c) += g(r, c);
      break;
    }
    case Op::Transpose: {
      Tensor& ga = in_grad(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
      break;
    }
    case Op::Gather: {
      Tensor& gt = in_grad(0);
      for (std::size_t i = 0; i < self.indices.size(); ++i) {
        double* dst = gt.row(static_cast<std::size_t>(self.indices[i]));
        const double* src = g.row(i);
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
      }
      break;
    }
    case Op::Lstm: {
      const std::size_t batch = self.n0;
      const Tensor& wh = in_value(1);
      const Tensor& h0 = in_value(2);
      const Tensor& c0 = in_value(3);
      const std::size_t hidden = wh.rows();
      const std::size_t steps = self.value.rows() / batch;
      Tensor* gx = needs(0) ? &in_grad(0) : nullptr;
      Tensor* gwh = needs(1) ? &in_grad(1) : nullptr;
      Tensor dh_next(batch, hidden), dc_next(batch, hidden);
      Tensor dpre(batch, 4 * hidden), h_prev(batch, hidden);
      for (std::size_t t = steps; t-- > 0;) {
        for (std::size_t s = 0; s < batch; ++s) {
          const std::size_t r = t * batch + s;
          const double* gates = self.cache.row(r);
          const double* c_prev = t == 0 ? c0.row(s) : self.value.row(r - batch) + hidden;
          const double* hp = t == 0 ? h0.row(s) : self.value.row(r - batch);
          std::copy(hp, hp + hidden, h_prev.row(s));
          const double* gout = g.row(r);
          double* dp = dpre.row(s);
          for (std::size_t k = 0; k < hidden; ++k) {
            const double ig = gates[k], fg = gates[hidden + k], gg = gates[2 * hidden + k];
            const double og = gates[3 * hidden + k], tc = gates[4 * hidden + k];
            const double dh = gout[k] + dh_next(s, k);
            const double dc = gout[hidden + k] + dc_next(s, k) + dh * og * (1.0 - tc * tc);
            const double d_o = dh * tc;
            dp[k] = dc * gg * ig * (1.0 - ig);
            dp[hidden + k] = dc * c_prev[k] * fg * (1.0 - fg);
            dp[2 * hidden + k] = dc * ig * (1.0 - gg * gg);
            dp[3 * hidden + k] = d_o * og * (1.0 - og);
            dc_next(s, k) = dc * fg;
          }
          if (gx) {
            double* dst = gx->row(r);
            for (std::size_t j = 0; j < 4 * hidden; ++j) dst[j] += dp[j];
          }
        }
        if (gwh) matmul_tn_acc(h_prev, dpre, *gwh);
        dh_next.fill(0.0);
        matmul_nt_acc(dpre, wh, dh_next);
      }
      if (needs(2)) add_into(in_grad(2), dh_next);
      if (needs(3)) add_into(in_grad(3), dc_next);
      break;
    }
    case Op::Input:
    case Op::Param:
      break;
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport gradient_check(ParameterSet& params, const std::function<Var(Graph&)>& build, double h) {
  params.zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  auto eval = [&] {
    Graph g;
    const Var loss = build(g);
    return g.value(loss)[0];
  };
  GradCheckReport report;
  for (auto& p : params.all()) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = eval();
      p.value[i] = saved - h;
      const double down = eval();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    report.rel_error.emplace_back(p.name, rel);
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(AdamState& state, ParameterSet& params) {
  auto& all = params.all();
  for (const auto& p : all)
    if (!p.grad.all_finite()) throw NonFiniteGradient("gradient of '" + p.name + "' is not finite");
  if (state.m.size() != all.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : all) {
      state.m.emplace_back(p.value.rows(), p.value.cols());
      state.v.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  for (auto& p : all) {
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    ++k;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[8] = {'F', 'X', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated checkpoint");
  return v;
}

std::string get_bytes(std::istream& in, std::size_t n) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("truncated checkpoint");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterSet& params, const nlohmann::json& meta) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string doc = meta.dump();
  put<std::uint64_t>(out, doc.size());
  out.write(doc.data(), static_cast<std::streamsize>(doc.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.all().size()));
  for (const auto& p : params.all()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw FormatError("failed to write checkpoint");
}

nlohmann::json read_checkpoint(std::istream& in, ParameterSet& params) {
  const std::string magic = get_bytes(in, sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto doc_len = get<std::uint64_t>(in);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(get_bytes(in, doc_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get<std::uint32_t>(in));
    const auto ndims = get<std::uint32_t>(in);
    if (ndims == 0 || ndims > 2) throw FormatError("tensor '" + name + "' has unsupported rank");
    std::vector<std::uint64_t> dims;
    for (std::uint32_t d = 0; d < ndims; ++d) dims.push_back(get<std::uint64_t>(in));
    const std::size_t rows = ndims == 2 ? dims[0] : 1;
    const std::size_t cols = dims.back();
    std::vector<double> data(rows * cols);
    if (!data.empty() &&
        !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw FormatError("truncated tensor '" + name + "'");
    params.add(std::move(name), Tensor(rows, cols, std::move(data)));
  }
  return meta;
}

}  // namespace fixloc::ad
