#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "tsg/core/kernels.hpp"
#include "tsg/core/params.hpp"
#include "tsg/core/tensor.hpp"

// Reverse-mode differentiation over an eagerly evaluated tape. Each primitive
// records its inputs and whatever its backward rule needs; replaying the tape
// re-runs the same kernels on the same operands, so forward values reproduce
// bit-for-bit.
namespace tsg {

enum class Op : std::uint8_t {
  kLeaf,
  kParam,
  kMatmul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kAffine,        // c0 * x + c1
  kGateScale,     // inputs (scalar s, tensor x) -> s * x
  kBiasAddRows,   // (x m*n, b n)
  kScaleRows,     // (x m*n, g n) -> x * g per row
  kConcatCols,
  kSliceCols,     // [i0, i1)
  kSliceRows,     // [i0, i1)
  kReshape,
  kExp,
  kLog,
  kTanh,
  kSigmoid,
  kGelu,
  kMeanRows,      // (m*n) -> (1*n)
  kSumAll,        // -> {1}
  kSoftmaxCols,
  kSoftmaxRows,
  kMaskedFill,    // aux0: 0/1 mask, 1 = masked -> kern::kMaskedLogit
  kClamp,         // [c0, c1]
  kNormalizeRows  // (x - mean) / sqrt(var + eps) per row
};

class Tape;

// Lightweight handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
};

class Tape {
 public:
  struct Node {
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    bool requires_grad = false;
    Parameter* param = nullptr;
    double c0 = 0.0, c1 = 0.0;
    std::size_t i0 = 0, i1 = 0;
    std::vector<std::size_t> shape_arg;  // reshape target
    Tensor aux0;                         // mask
    Tensor value;
    Tensor grad;
  };

  Var leaf(Tensor v) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(v);
    return push_(std::move(n));
  }

  // A differentiable leaf that is not a Parameter (used by grad_check).
  Var input(Tensor v) {
    Node n;
    n.op = Op::kLeaf;
    n.requires_grad = true;
    n.value = std::move(v);
    return push_(std::move(n));
  }

  Var param(Parameter& p) {
    Node n;
    n.op = Op::kParam;
    n.requires_grad = true;
    n.param = &p;
    n.value = p.value;
    return push_(std::move(n));
  }

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // ---- primitives ----

  Var matmul(Var a, Var b) { return binary_(Op::kMatmul, a, b); }
  Var transpose(Var a) { return unary_(Op::kTranspose, a); }
  Var add(Var a, Var b) { return binary_(Op::kAdd, a, b); }
  Var sub(Var a, Var b) { return binary_(Op::kSub, a, b); }
  Var mul(Var a, Var b) { return binary_(Op::kMul, a, b); }

  Var affine(Var a, double scale, double shift) {
    Node n = base_(Op::kAffine, a);
    n.c0 = scale;
    n.c1 = shift;
    return push_(std::move(n));
  }

  Var gate_scale(Var s, Var x) { return binary_(Op::kGateScale, s, x); }
  Var bias_add_rows(Var x, Var b) { return binary_(Op::kBiasAddRows, x, b); }
  Var scale_rows(Var x, Var g) { return binary_(Op::kScaleRows, x, g); }
  Var concat_cols(Var a, Var b) { return binary_(Op::kConcatCols, a, b); }

  Var slice_cols(Var a, std::size_t j0, std::size_t j1) { return slice_(Op::kSliceCols, a, j0, j1); }
  Var slice_rows(Var a, std::size_t i0, std::size_t i1) { return slice_(Op::kSliceRows, a, i0, i1); }

  Var reshape(Var a, std::vector<std::size_t> shape) {
    Node n = base_(Op::kReshape, a);
    n.shape_arg = std::move(shape);
    return push_(std::move(n));
  }

  Var exp(Var a) { return unary_(Op::kExp, a); }
  Var log(Var a) { return unary_(Op::kLog, a); }
  Var tanh(Var a) { return unary_(Op::kTanh, a); }
  Var sigmoid(Var a) { return unary_(Op::kSigmoid, a); }
  Var gelu(Var a) { return unary_(Op::kGelu, a); }
  Var mean_rows(Var a) { return unary_(Op::kMeanRows, a); }
  Var sum_all(Var a) { return unary_(Op::kSumAll, a); }
  Var softmax_cols(Var a) { return unary_(Op::kSoftmaxCols, a); }
  Var softmax_rows(Var a) { return unary_(Op::kSoftmaxRows, a); }

  // Mask entries equal to 1 are replaced with kern::kMaskedLogit; their
  // gradient is cut.
  Var masked_fill(Var a, Tensor mask) {
    if (!mask.same_shape(value(a.id))) {
      throw ShapeError("masked_fill: mask " + mask.shape_str() + " vs operand " +
                       value(a.id).shape_str());
    }
    Node n = base_(Op::kMaskedFill, a);
    n.aux0 = std::move(mask);
    return push_(std::move(n));
  }

  Var clamp(Var a, double lo, double hi) {
    Node n = base_(Op::kClamp, a);
    n.c0 = lo;
    n.c1 = hi;
    return push_(std::move(n));
  }

  Var normalize_rows(Var a) { return unary_(Op::kNormalizeRows, a); }

  // ---- execution ----

  // Gradient of a scalar node w.r.t. every reachable differentiable node;
  // Parameter leaves accumulate into Parameter::grad. Unreached Parameters
  // simply keep whatever is in their accumulator (zero after zero_grads).
  void backward(Var loss) {
    check_owned_(loss);
    Node& top = nodes_[loss.id];
    if (top.value.size() != 1) {
      throw ContractError("backward: loss must be scalar, got " + top.value.shape_str());
    }
    if (!top.requires_grad) return;
    grad_buf_(loss.id).at(0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.op == Op::kParam) {
        accumulate_(n.param->grad, n.grad);
      } else if (n.op != Op::kLeaf) {
        backprop_(n);
      }
    }
  }

  // Re-runs every non-leaf node; true iff all recomputed values match the
  // recorded ones bit-for-bit.
  bool replay_matches() const {
    for (const Node& n : nodes_) {
      if (n.op == Op::kLeaf || n.op == Op::kParam) continue;
      if (!(eval_(n) == n.value)) return false;
    }
    return true;
  }

 private:
  friend struct Var;

  Node base_(Op op, Var a) {
    check_owned_(a);
    Node n;
    n.op = op;
    n.a = a.id;
    n.requires_grad = nodes_[a.id].requires_grad;
    return n;
  }

  Var unary_(Op op, Var a) { return push_(base_(op, a)); }

  Var binary_(Op op, Var a, Var b) {
    check_owned_(a);
    check_owned_(b);
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = nodes_[a.id].requires_grad || nodes_[b.id].requires_grad;
    return push_(std::move(n));
  }

  Var slice_(Op op, Var a, std::size_t i0, std::size_t i1) {
    Node n = base_(op, a);
    n.i0 = i0;
    n.i1 = i1;
    return push_(std::move(n));
  }

  void check_owned_(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw ContractError("variable does not belong to this tape");
    }
  }

  Var push_(Node n) {
    if (n.op != Op::kLeaf && n.op != Op::kParam) {
      n.value = eval_(n);
      if (!n.value.all_finite()) throw NumericError("non-finite primitive output");
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& in_(const Node& n) const { return nodes_[n.a].value; }
  const Tensor& in2_(const Node& n) const { return nodes_[n.b].value; }

  Tensor eval_(const Node& n) const;
  void backprop_(Node& n);

  static void accumulate_(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.at(i) += src.at(i);
  }

  Tensor& grad_buf_(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  // Adds `src` into the grad buffer of input slot `id` if it wants gradient.
  void add_grad_(int id, const Tensor& src) {
    if (id < 0) return;
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    accumulate_(grad_buf_(id), src);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// ---- forward evaluation ----

inline Tensor Tape::eval_(const Node& n) const {
  const Tensor& a = in_(n);
  switch (n.op) {
    case Op::kMatmul:
      return kern::matmul(a, in2_(n));
    case Op::kTranspose: {
      require_matrix(a, "transpose");
      Tensor out({a.cols(), a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      return out;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& b = in2_(n);
      if (!a.same_shape(b)) {
        throw ShapeError("elementwise op: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
      }
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        out.at(i) = n.op == Op::kAdd   ? a.at(i) + b.at(i)
                    : n.op == Op::kSub ? a.at(i) - b.at(i)
                                       : a.at(i) * b.at(i);
      }
      return out;
    }
    case Op::kAffine: {
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = n.c0 * a.at(i) + n.c1;
      return out;
    }
    case Op::kGateScale: {
      if (a.size() != 1) throw ShapeError("gate_scale: gate must be scalar, got " + a.shape_str());
      const Tensor& x = in2_(n);
      Tensor out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = a.at(0) * x.at(i);
      return out;
    }
    case Op::kBiasAddRows: {
      Tensor out = a;
      kern::add_bias_rows_inplace(out, in2_(n));
      return out;
    }
    case Op::kScaleRows: {
      const Tensor& g = in2_(n);
      if (g.size() != a.cols()) {
        throw ShapeError("scale_rows: gain " + g.shape_str() + " vs row width " + a.shape_str());
      }
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j) * g.at(j);
      return out;
    }
    case Op::kConcatCols: {
      const Tensor& b = in2_(n);
      if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row counts differ, " + a.shape_str() + " vs " + b.shape_str());
      }
      Tensor out({a.rows(), a.cols() + b.cols()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, a.cols() + j) = b.at(i, j);
      }
      return out;
    }
    case Op::kSliceCols: {
      if (n.i1 > a.cols() || n.i0 >= n.i1) throw ShapeError("slice_cols: bad range");
      Tensor out({a.rows(), n.i1 - n.i0});
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = n.i0; j < n.i1; ++j) out.at(i, j - n.i0) = a.at(i, j);
      return out;
    }
    case Op::kSliceRows: {
      if (n.i1 > a.rows() || n.i0 >= n.i1) throw ShapeError("slice_rows: bad range");
      Tensor out({n.i1 - n.i0, a.cols()});
      for (std::size_t i = n.i0; i < n.i1; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(i - n.i0, j) = a.at(i, j);
      return out;
    }
    case Op::kReshape:
      return a.reshaped(n.shape_arg);
    case Op::kExp:
      return kern::map(a, [](double x) { return std::exp(x); });
    case Op::kLog:
      return kern::map(a, [](double x) { return std::log(x); });
    case Op::kTanh:
      return kern::map(a, [](double x) { return std::tanh(x); });
    case Op::kSigmoid:
      return kern::map(a, [](double x) { return kern::sigmoid(x); });
    case Op::kGelu:
      return kern::map(a, [](double x) { return kern::gelu(x); });
    case Op::kMeanRows:
      return kern::mean_rows(a);
    case Op::kSumAll: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i);
      return Tensor::scalar(s);
    }
    case Op::kSoftmaxCols:
      return kern::softmax_cols(a);
    case Op::kSoftmaxRows:
      return kern::softmax_rows(a);
    case Op::kMaskedFill: {
      Tensor out = a;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (n.aux0.at(i) != 0.0) out.at(i) = kern::kMaskedLogit;
      }
      return out;
    }
    case Op::kClamp: {
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = std::min(std::max(a.at(i), n.c0), n.c1);
      return out;
    }
    case Op::kNormalizeRows:
      return kern::normalize_rows(a);
    case Op::kLeaf:
    case Op::kParam:
      break;
  }
  throw ContractError("eval: not a computable op");
}

// ---- backward rules ----

inline void Tape::backprop_(Node& n) {
  const Tensor& g = n.grad;
  const Tensor& a = in_(n);
  switch (n.op) {
    case Op::kMatmul: {
      const Tensor& b = in2_(n);
      if (nodes_[n.a].requires_grad) add_grad_(n.a, kern::matmul_bt(g, b));
      if (nodes_[n.b].requires_grad) add_grad_(n.b, kern::matmul_at(a, g));
      return;
    }
    case Op::kTranspose: {
      Tensor ga({g.cols(), g.rows()});
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga.at(j, i) = g.at(i, j);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kAdd:
      add_grad_(n.a, g);
      add_grad_(n.b, g);
      return;
    case Op::kSub: {
      add_grad_(n.a, g);
      if (nodes_[n.b].requires_grad) {
        Tensor gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gb.at(i) = -g.at(i);
        add_grad_(n.b, gb);
      }
      return;
    }
    case Op::kMul: {
      const Tensor& b = in2_(n);
      if (nodes_[n.a].requires_grad) {
        Tensor ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) = g.at(i) * b.at(i);
        add_grad_(n.a, ga);
      }
      if (nodes_[n.b].requires_grad) {
        Tensor gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gb.at(i) = g.at(i) * a.at(i);
        add_grad_(n.b, gb);
      }
      return;
    }
    case Op::kAffine: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) = n.c0 * g.at(i);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kGateScale: {
      const Tensor& x = in2_(n);
      if (nodes_[n.a].requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g.at(i) * x.at(i);
        add_grad_(n.a, Tensor::scalar(acc));
      }
      if (nodes_[n.b].requires_grad) {
        Tensor gx(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) gx.at(i) = a.at(0) * g.at(i);
        add_grad_(n.b, gx);
      }
      return;
    }
    case Op::kBiasAddRows: {
      add_grad_(n.a, g);
      if (nodes_[n.b].requires_grad) {
        Tensor gb(in2_(n).shape());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb.at(j) += g.at(i, j);
        add_grad_(n.b, gb);
      }
      return;
    }
    case Op::kScaleRows: {
      const Tensor& gain = in2_(n);
      if (nodes_[n.a].requires_grad) {
        Tensor ga(a.shape());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) = g.at(i, j) * gain.at(j);
        add_grad_(n.a, ga);
      }
      if (nodes_[n.b].requires_grad) {
        Tensor gg(gain.shape());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) gg.at(j) += g.at(i, j) * a.at(i, j);
        add_grad_(n.b, gg);
      }
      return;
    }
    case Op::kConcatCols: {
      const Tensor& b = in2_(n);
      if (nodes_[n.a].requires_grad) {
        Tensor ga(a.shape());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) = g.at(i, j);
        add_grad_(n.a, ga);
      }
      if (nodes_[n.b].requires_grad) {
        Tensor gb(b.shape());
        for (std::size_t i = 0; i < b.rows(); ++i)
          for (std::size_t j = 0; j < b.cols(); ++j) gb.at(i, j) = g.at(i, a.cols() + j);
        add_grad_(n.b, gb);
      }
      return;
    }
    case Op::kSliceCols: {
      Tensor ga(a.shape());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = n.i0; j < n.i1; ++j) ga.at(i, j) = g.at(i, j - n.i0);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kSliceRows: {
      Tensor ga(a.shape());
      for (std::size_t i = n.i0; i < n.i1; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) = g.at(i - n.i0, j);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kReshape:
      add_grad_(n.a, g.reshaped(a.shape()));
      return;
    case Op::kExp: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) = g.at(i) * n.value.at(i);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kLog: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) = g.at(i) / a.at(i);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kTanh: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.at(i) = g.at(i) * (1.0 - n.value.at(i) * n.value.at(i));
      }
      add_grad_(n.a, ga);
      return;
    }
    case Op::kSigmoid: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.at(i) = g.at(i) * n.value.at(i) * (1.0 - n.value.at(i));
      }
      add_grad_(n.a, ga);
      return;
    }
    case Op::kGelu: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) = g.at(i) * kern::gelu_grad(a.at(i));
      add_grad_(n.a, ga);
      return;
    }
    case Op::kMeanRows: {
      Tensor ga(a.shape());
      const double inv = 1.0 / static_cast<double>(a.rows());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) = g.at(0, j) * inv;
      add_grad_(n.a, ga);
      return;
    }
    case Op::kSumAll: {
      Tensor ga(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) ga.at(i) = g.at(0);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kSoftmaxCols: {
      const Tensor& s = n.value;
      Tensor ga(a.shape());
      for (std::size_t j = 0; j < a.cols(); ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) dot += g.at(i, j) * s.at(i, j);
        for (std::size_t i = 0; i < a.rows(); ++i) ga.at(i, j) = s.at(i, j) * (g.at(i, j) - dot);
      }
      add_grad_(n.a, ga);
      return;
    }
    case Op::kSoftmaxRows: {
      const Tensor& s = n.value;
      Tensor ga(a.shape());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) dot += g.at(i, j) * s.at(i, j);
        for (std::size_t j = 0; j < a.cols(); ++j) ga.at(i, j) = s.at(i, j) * (g.at(i, j) - dot);
      }
      add_grad_(n.a, ga);
      return;
    }
    case Op::kMaskedFill: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga.at(i) = n.aux0.at(i) != 0.0 ? 0.0 : g.at(i);
      add_grad_(n.a, ga);
      return;
    }
    case Op::kClamp: {
      Tensor ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.at(i) = (a.at(i) > n.c0 && a.at(i) < n.c1) ? g.at(i) : 0.0;
      }
      add_grad_(n.a, ga);
      return;
    }
    case Op::kNormalizeRows: {
      // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat)) per row.
      const Tensor& xhat = n.value;
      const std::size_t m = a.rows(), w = a.cols();
      Tensor ga(a.shape());
      for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < w; ++j) mean += a.at(i, j);
        mean /= static_cast<double>(w);
        for (std::size_t j = 0; j < w; ++j) {
          const double dxy = a.at(i, j) - mean;
          var += dxy * dxy;
        }
        var /= static_cast<double>(w);
        const double inv_std = 1.0 / std::sqrt(var + kern::kLayerNormEps);
        double gmean = 0.0, gxhat = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          gmean += g.at(i, j);
          gxhat += g.at(i, j) * xhat.at(i, j);
        }
        gmean /= static_cast<double>(w);
        gxhat /= static_cast<double>(w);
        for (std::size_t j = 0; j < w; ++j) {
          ga.at(i, j) = inv_std * (g.at(i, j) - gmean - xhat.at(i, j) * gxhat);
        }
      }
      add_grad_(n.a, ga);
      return;
    }
    case Op::kLeaf:
    case Op::kParam:
      return;
  }
}

// ---- composite blocks shared by the model modules ----

// x * w + b with w (in x out) and b (out).
inline Var linear(Var x, Var w, Var b) {
  Tape& t = *x.tape;
  return t.bias_add_rows(t.matmul(x, w), b);
}

// Standard multi-head scaled dot-product attention with an optional boolean
// mask (1 = blocked). No projections; rows of attention weights sum to 1
// over the unmasked positions and masked positions get exactly zero weight.
inline Var scaled_dot_attention(Var q, Var k, Var v, const std::optional<Tensor>& mask,
                                std::size_t heads) {
  Tape& t = *q.tape;
  const std::size_t m = q.value().rows(), d = q.value().cols(), p = k.value().rows();
  if (k.value().cols() != d || v.value().cols() != d || v.value().rows() != p) {
    throw ShapeError("attention: queries " + q.value().shape_str() + ", keys " +
                     k.value().shape_str() + ", values " + v.value().shape_str());
  }
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by head count");
  if (mask) {
    if (mask->rows() != m || mask->cols() != p) {
      throw ShapeError("attention: mask " + mask->shape_str() + " vs scores " +
                       std::to_string(m) + "x" + std::to_string(p));
    }
    for (std::size_t i = 0; i < m; ++i) {
      bool any_open = false;
      for (std::size_t j = 0; j < p; ++j) {
        if (mask->at(i, j) == 0.0) {
          any_open = true;
          break;
        }
      }
      if (!any_open) throw ContractError("attention: fully masked row " + std::to_string(i));
    }
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var out{};
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
    Var scores = t.affine(t.matmul(qh, t.transpose(kh)), scale, 0.0);
    if (mask) scores = t.masked_fill(scores, *mask);
    Var oh = t.matmul(t.softmax_rows(scores), vh);
    out = h == 0 ? oh : t.concat_cols(out, oh);
  }
  return out;
}

// Lower-triangular-allowed causal mask (1 = blocked) for an m x m score matrix.
inline Tensor causal_mask(std::size_t m) {
  Tensor mask({m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) mask.at(i, j) = 1.0;
  return mask;
}

}  // namespace tsg
