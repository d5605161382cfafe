#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace metaclust {

// Handle to a node on a Tape.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode autodiff over dense double matrices.
//
// The central trick: backward() does not produce raw matrices, it appends the
// adjoint computation to the tape using the same primitives. Gradients are
// therefore themselves differentiable, which is exactly what the one-step
// meta-gradient needs (differentiate an outer scalar through w - eta*grad(w)).
//
// Scalars are 1x1 matrices. A Tape is single-threaded.
class Tape {
 public:
  enum class Op {
    kConstant,
    kLeaf,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kMatMul,
    kTranspose,
    kScale,
    kMulScalar,
    kSpMM,
    kExp,
    kSqrt,
    kSigmoid,
    kStepMask,
    kRowSoftmax,
    kRowSum,
    kColSum,
    kSumAll,
    kBroadcastCol,
    kBroadcastRow,
    kBroadcastAll,
    kGatherRows,
    kScatterRows,
  };

  // Non-differentiable input (no gradient ever flows into it).
  Value constant(Eigen::MatrixXd v) { return push_input(Op::kConstant, std::move(v)); }

  // Differentiable input.
  Value leaf(Eigen::MatrixXd v) { return push_input(Op::kLeaf, std::move(v)); }

  Value add(Value x, Value y) {
    require_same_shape("add", x, y);
    return push(Op::kAdd, x, y);
  }

  Value sub(Value x, Value y) {
    require_same_shape("sub", x, y);
    return push(Op::kSub, x, y);
  }

  // Elementwise product.
  Value mul(Value x, Value y) {
    require_same_shape("mul", x, y);
    return push(Op::kMul, x, y);
  }

  // Elementwise quotient.
  Value div(Value x, Value y) {
    require_same_shape("div", x, y);
    return push(Op::kDiv, x, y);
  }

  Value matmul(Value x, Value y) {
    if (node(x).value.cols() != node(y).value.rows())
      throw std::invalid_argument("matmul: inner dimensions " +
                                  std::to_string(node(x).value.cols()) + " and " +
                                  std::to_string(node(y).value.rows()) + " disagree");
    return push(Op::kMatMul, x, y);
  }

  Value transpose(Value x) { return push(Op::kTranspose, x); }

  // Multiply by a compile-time-known constant.
  Value scale(Value x, double k) {
    Node n = make(Op::kScale, x);
    n.scalar = k;
    return commit(std::move(n));
  }

  // Multiply every entry of x by the 1x1 node s (s is differentiable).
  Value mul_scalar(Value x, Value s) {
    require_scalar("mul_scalar", s);
    return push(Op::kMulScalar, x, s);
  }

  // Left-multiply by a constant symmetric sparse matrix. The caller keeps the
  // matrix alive for the lifetime of the tape.
  Value spmm(const Eigen::SparseMatrix<double>* A, Value x) {
    if (A == nullptr) throw std::invalid_argument("spmm: null matrix");
    if (A->cols() != node(x).value.rows())
      throw std::invalid_argument("spmm: dimension mismatch");
    Node n = make(Op::kSpMM, x);
    n.sparse = A;
    return commit(std::move(n));
  }

  Value exp(Value x) { return push(Op::kExp, x); }
  Value sqrt(Value x) { return push(Op::kSqrt, x); }
  Value sigmoid(Value x) { return push(Op::kSigmoid, x); }

  // 1 where the entry is > 0, else 0. Derivative defined as zero everywhere,
  // so no gradient flows through this node.
  Value step_mask(Value x) { return push(Op::kStepMask, x); }

  Value row_softmax(Value x) { return push(Op::kRowSoftmax, x); }

  Value row_sum(Value x) { return push(Op::kRowSum, x); }   // N x M -> N x 1
  Value col_sum(Value x) { return push(Op::kColSum, x); }   // N x M -> 1 x M
  Value sum(Value x) { return push(Op::kSumAll, x); }       // N x M -> 1 x 1

  Value broadcast_col(Value x, int cols) {  // N x 1 -> N x cols
    if (node(x).value.cols() != 1)
      throw std::invalid_argument("broadcast_col: input must be a column");
    Node n = make(Op::kBroadcastCol, x);
    n.dim = cols;
    return commit(std::move(n));
  }

  Value broadcast_row(Value x, int rows) {  // 1 x M -> rows x M
    if (node(x).value.rows() != 1)
      throw std::invalid_argument("broadcast_row: input must be a row");
    Node n = make(Op::kBroadcastRow, x);
    n.dim = rows;
    return commit(std::move(n));
  }

  Value broadcast_all(Value x, int rows, int cols) {  // 1 x 1 -> rows x cols
    require_scalar("broadcast_all", x);
    Node n = make(Op::kBroadcastAll, x);
    n.dim = rows;
    n.dim2 = cols;
    return commit(std::move(n));
  }

  Value gather_rows(Value x, std::vector<int> rows) {
    for (int r : rows)
      if (r < 0 || r >= node(x).value.rows())
        throw std::invalid_argument("gather_rows: row index out of range");
    Node n = make(Op::kGatherRows, x);
    n.rows = std::make_shared<const std::vector<int>>(std::move(rows));
    return commit(std::move(n));
  }

  // Inverse of gather_rows: places row r of x at rows[r] of an n_total-row
  // zero matrix, accumulating duplicates.
  Value scatter_rows(Value x, std::shared_ptr<const std::vector<int>> rows, int n_total) {
    if (static_cast<int>(rows->size()) != node(x).value.rows())
      throw std::invalid_argument("scatter_rows: row-list length mismatch");
    for (int r : *rows)
      if (r < 0 || r >= n_total)
        throw std::invalid_argument("scatter_rows: row index out of range");
    Node n = make(Op::kScatterRows, x);
    n.rows = std::move(rows);
    n.dim = n_total;
    return commit(std::move(n));
  }

  Value scatter_rows(Value x, std::vector<int> rows, int n_total) {
    return scatter_rows(x, std::make_shared<const std::vector<int>>(std::move(rows)),
                        n_total);
  }

  const Eigen::MatrixXd& val(Value v) const { return node(v).value; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse pass from the 1x1 node `out`. Appends adjoint nodes to the tape
  // and returns, per requested node, the adjoint (a zero constant when no
  // differentiable path connects it to `out`).
  std::vector<Value> backward(Value out, const std::vector<Value>& wrt) {
    require_scalar("backward", out);
    const int limit = out.idx;

    std::vector<char> reaches(static_cast<std::size_t>(limit) + 1, 0);
    reaches[static_cast<std::size_t>(out.idx)] = 1;
    for (int i = limit; i >= 0; --i) {
      if (!reaches[static_cast<std::size_t>(i)]) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (diff_through(n.op)) {
        if (n.a >= 0) reaches[static_cast<std::size_t>(n.a)] = 1;
        if (n.b >= 0) reaches[static_cast<std::size_t>(n.b)] = 1;
      }
    }

    std::vector<char> fromw(static_cast<std::size_t>(limit) + 1, 0);
    for (Value v : wrt) {
      if (!v.valid() || v.idx > limit)
        throw std::invalid_argument("backward: wrt node not upstream of out");
      fromw[static_cast<std::size_t>(v.idx)] = 1;
    }
    for (int i = 0; i <= limit; ++i) {
      if (fromw[static_cast<std::size_t>(i)]) continue;
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!diff_through(n.op)) continue;
      if ((n.a >= 0 && fromw[static_cast<std::size_t>(n.a)]) ||
          (n.b >= 0 && fromw[static_cast<std::size_t>(n.b)]))
        fromw[static_cast<std::size_t>(i)] = 1;
    }

    std::vector<Value> adj(static_cast<std::size_t>(limit) + 1, Value{});
    if (fromw[static_cast<std::size_t>(out.idx)])
      adj[static_cast<std::size_t>(out.idx)] = constant(Eigen::MatrixXd::Ones(1, 1));

    auto accum = [this, &adj, &fromw](int target, Value g) {
      if (target < 0) return;
      if (!fromw[static_cast<std::size_t>(target)]) return;
      Value& slot = adj[static_cast<std::size_t>(target)];
      slot = slot.valid() ? add(slot, g) : g;
    };

    for (int i = limit; i >= 0; --i) {
      const Value g = adj[static_cast<std::size_t>(i)];
      if (!g.valid()) continue;
      // Copy the metadata (not the value): dispatch below appends nodes and
      // may reallocate the node vector.
      struct Meta {
        Op op;
        int a, b;
        double scalar;
        const Eigen::SparseMatrix<double>* sparse;
        std::shared_ptr<const std::vector<int>> rows;
        int out_cols;
      };
      const Node& src = nodes_[static_cast<std::size_t>(i)];
      const Meta n{src.op, src.a,      src.b,
                   src.scalar, src.sparse, src.rows,
                   static_cast<int>(src.value.cols())};
      const Value self{i};
      const Value a{n.a};
      const Value b{n.b};
      switch (n.op) {
        case Op::kConstant:
        case Op::kLeaf:
        case Op::kStepMask:
          break;
        case Op::kAdd:
          accum(n.a, g);
          accum(n.b, g);
          break;
        case Op::kSub:
          accum(n.a, g);
          if (n.b >= 0 && fromw[static_cast<std::size_t>(n.b)])
            accum(n.b, scale(g, -1.0));
          break;
        case Op::kMul:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, mul(g, b));
          if (fromw[static_cast<std::size_t>(n.b)]) accum(n.b, mul(g, a));
          break;
        case Op::kDiv:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, div(g, b));
          if (fromw[static_cast<std::size_t>(n.b)])
            accum(n.b, scale(div(mul(g, a), mul(b, b)), -1.0));
          break;
        case Op::kMatMul:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, matmul(g, transpose(b)));
          if (fromw[static_cast<std::size_t>(n.b)]) accum(n.b, matmul(transpose(a), g));
          break;
        case Op::kTranspose:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, transpose(g));
          break;
        case Op::kScale:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, scale(g, n.scalar));
          break;
        case Op::kMulScalar:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, mul_scalar(g, b));
          if (fromw[static_cast<std::size_t>(n.b)]) accum(n.b, sum(mul(g, a)));
          break;
        case Op::kSpMM:
          // The sparse matrix is symmetric, so the adjoint reuses it directly.
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, spmm(n.sparse, g));
          break;
        case Op::kExp:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, mul(g, self));
          break;
        case Op::kSqrt:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, scale(div(g, self), 0.5));
          break;
        case Op::kSigmoid:
          if (fromw[static_cast<std::size_t>(n.a)])
            accum(n.a, mul(g, sub(self, mul(self, self))));
          break;
        case Op::kRowSoftmax:
          if (fromw[static_cast<std::size_t>(n.a)]) {
            const int k = n.out_cols;
            Value gp = mul(g, self);
            Value centered = sub(g, broadcast_col(row_sum(gp), k));
            accum(n.a, mul(self, centered));
          }
          break;
        case Op::kRowSum:
          if (fromw[static_cast<std::size_t>(n.a)])
            accum(n.a, broadcast_col(g, static_cast<int>(node(a).value.cols())));
          break;
        case Op::kColSum:
          if (fromw[static_cast<std::size_t>(n.a)])
            accum(n.a, broadcast_row(g, static_cast<int>(node(a).value.rows())));
          break;
        case Op::kSumAll:
          if (fromw[static_cast<std::size_t>(n.a)])
            accum(n.a, broadcast_all(g, static_cast<int>(node(a).value.rows()),
                                     static_cast<int>(node(a).value.cols())));
          break;
        case Op::kBroadcastCol:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, row_sum(g));
          break;
        case Op::kBroadcastRow:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, col_sum(g));
          break;
        case Op::kBroadcastAll:
          if (fromw[static_cast<std::size_t>(n.a)]) accum(n.a, sum(g));
          break;
        case Op::kGatherRows:
          if (fromw[static_cast<std::size_t>(n.a)])
            accum(n.a, scatter_rows(g, n.rows, static_cast<int>(node(a).value.rows())));
          break;
        case Op::kScatterRows:
          if (fromw[static_cast<std::size_t>(n.a)]) {
            Node gath = make(Op::kGatherRows, g);
            gath.rows = n.rows;
            accum(n.a, commit(std::move(gath)));
          }
          break;
      }
    }

    std::vector<Value> result;
    result.reserve(wrt.size());
    for (Value v : wrt) {
      Value g = adj[static_cast<std::size_t>(v.idx)];
      if (!g.valid())
        g = constant(Eigen::MatrixXd::Zero(node(v).value.rows(), node(v).value.cols()));
      result.push_back(g);
    }
    return result;
  }

  // Recomputes every non-input node in place, in recorded order. With
  // unchanged inputs this reproduces all values bit-for-bit.
  void replay() {
    for (auto& n : nodes_) {
      if (n.op == Op::kConstant || n.op == Op::kLeaf) continue;
      n.value = compute(n);
    }
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kConstant: return "constant";
      case Op::kLeaf: return "leaf";
      case Op::kAdd: return "add";
      case Op::kSub: return "sub";
      case Op::kMul: return "mul";
      case Op::kDiv: return "div";
      case Op::kMatMul: return "matmul";
      case Op::kTranspose: return "transpose";
      case Op::kScale: return "scale";
      case Op::kMulScalar: return "mul_scalar";
      case Op::kSpMM: return "spmm";
      case Op::kExp: return "exp";
      case Op::kSqrt: return "sqrt";
      case Op::kSigmoid: return "sigmoid";
      case Op::kStepMask: return "step_mask";
      case Op::kRowSoftmax: return "row_softmax";
      case Op::kRowSum: return "row_sum";
      case Op::kColSum: return "col_sum";
      case Op::kSumAll: return "sum";
      case Op::kBroadcastCol: return "broadcast_col";
      case Op::kBroadcastRow: return "broadcast_row";
      case Op::kBroadcastAll: return "broadcast_all";
      case Op::kGatherRows: return "gather_rows";
      case Op::kScatterRows: return "scatter_rows";
    }
    return "?";
  }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    int dim = 0;
    int dim2 = 0;
    const Eigen::SparseMatrix<double>* sparse = nullptr;
    std::shared_ptr<const std::vector<int>> rows;
    Eigen::MatrixXd value;
  };

  const Node& node(Value v) const {
    if (!v.valid() || v.idx >= size()) throw std::invalid_argument("bad Value handle");
    return nodes_[static_cast<std::size_t>(v.idx)];
  }

  static bool diff_through(Op op) {
    return op != Op::kConstant && op != Op::kLeaf && op != Op::kStepMask;
  }

  void require_same_shape(const char* what, Value x, Value y) const {
    const auto& vx = node(x).value;
    const auto& vy = node(y).value;
    if (vx.rows() != vy.rows() || vx.cols() != vy.cols())
      throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                  std::to_string(vx.rows()) + "x" +
                                  std::to_string(vx.cols()) + " vs " +
                                  std::to_string(vy.rows()) + "x" +
                                  std::to_string(vy.cols()));
  }

  void require_scalar(const char* what, Value x) const {
    const auto& v = node(x).value;
    if (v.rows() != 1 || v.cols() != 1)
      throw std::invalid_argument(std::string(what) + ": expected a 1x1 value");
  }

  Node make(Op op, Value a, Value b = Value{}) const {
    node(a);  // validates
    if (b.valid()) node(b);
    Node n;
    n.op = op;
    n.a = a.idx;
    n.b = b.idx;
    return n;
  }

  Value push(Op op, Value a, Value b = Value{}) { return commit(make(op, a, b)); }

  Value push_input(Op op, Eigen::MatrixXd v) {
    if (!v.allFinite())
      throw std::runtime_error(std::string("non-finite value fed to ") + op_name(op));
    Node n;
    n.op = op;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return Value{size() - 1};
  }

  Value commit(Node n) {
    n.value = compute(n);
    if (!n.value.allFinite())
      throw std::runtime_error(std::string("non-finite value produced by ") +
                               op_name(n.op));
    nodes_.push_back(std::move(n));
    return Value{size() - 1};
  }

  Eigen::MatrixXd compute(const Node& n) const {
    const auto& A = [&]() -> const Eigen::MatrixXd& {
      return nodes_[static_cast<std::size_t>(n.a)].value;
    };
    const auto& B = [&]() -> const Eigen::MatrixXd& {
      return nodes_[static_cast<std::size_t>(n.b)].value;
    };
    switch (n.op) {
      case Op::kConstant:
      case Op::kLeaf:
        return n.value;
      case Op::kAdd:
        return A() + B();
      case Op::kSub:
        return A() - B();
      case Op::kMul:
        return A().cwiseProduct(B());
      case Op::kDiv:
        return A().cwiseQuotient(B());
      case Op::kMatMul:
        return A() * B();
      case Op::kTranspose:
        return A().transpose();
      case Op::kScale:
        return n.scalar * A();
      case Op::kMulScalar:
        return B()(0, 0) * A();
      case Op::kSpMM:
        return (*n.sparse) * A();
      case Op::kExp:
        return A().array().exp();
      case Op::kSqrt:
        return A().array().sqrt();
      case Op::kSigmoid:
        // tanh form is stable for large |x|.
        return (0.5 * (1.0 + (0.5 * A().array()).tanh()));
      case Op::kStepMask:
        return (A().array() > 0.0).cast<double>();
      case Op::kRowSoftmax: {
        Eigen::MatrixXd out = A();
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
          const double m = out.row(r).maxCoeff();
          out.row(r) = (out.row(r).array() - m).exp();
          out.row(r) /= out.row(r).sum();
        }
        return out;
      }
      case Op::kRowSum:
        return A().rowwise().sum();
      case Op::kColSum:
        return A().colwise().sum();
      case Op::kSumAll:
        return Eigen::MatrixXd::Constant(1, 1, A().sum());
      case Op::kBroadcastCol:
        return A().replicate(1, n.dim);
      case Op::kBroadcastRow:
        return A().replicate(n.dim, 1);
      case Op::kBroadcastAll:
        return Eigen::MatrixXd::Constant(n.dim, n.dim2, A()(0, 0));
      case Op::kGatherRows: {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(n.rows->size()), A().cols());
        for (std::size_t r = 0; r < n.rows->size(); ++r)
          out.row(static_cast<Eigen::Index>(r)) = A().row((*n.rows)[r]);
        return out;
      }
      case Op::kScatterRows: {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n.dim, A().cols());
        for (std::size_t r = 0; r < n.rows->size(); ++r)
          out.row((*n.rows)[r]) += A().row(static_cast<Eigen::Index>(r));
        return out;
      }
    }
    throw std::logic_error("unhandled op");
  }

  std::vector<Node> nodes_;
};

// ReLU and SELU built from primitives so that their adjoints stay on the tape.
inline Value relu(Tape& t, Value x) { return t.mul(t.step_mask(x), x); }

inline Value selu(Tape& t, Value x) {
  constexpr double kLambda = 1.0507009873554804934193349852946;
  constexpr double kAlpha = 1.6732632423543772848170429916717;
  const auto& v = t.val(x);
  Value ones = t.constant(Eigen::MatrixXd::Ones(v.rows(), v.cols()));
  Value m = t.step_mask(x);
  Value pos = t.mul(m, x);
  // Zero the negative branch's argument before exp so it cannot overflow:
  // exp(0) - 1 = 0 exactly where x > 0.
  Value neg_arg = t.mul(t.sub(ones, m), x);
  Value expm1 = t.sub(t.exp(neg_arg), ones);
  return t.add(t.scale(pos, kLambda), t.scale(expm1, kLambda * kAlpha));
}

}  // namespace metaclust
