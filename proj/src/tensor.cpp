#include "citeflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace citeflow {

namespace {

enum Op : std::uint8_t {
  kInput,
  kMatMul,
  kSpmm,
  kAdd,
  kAddBias,
  kSub,
  kMul,
  kRelu,
  kSigmoid,
  kTanh,
  kConcatCols,
  kGatherRows,
  kReduceSum,
  kReduceMeanAbs,
};

void check_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

// c += a * b with fixed i,k,j loop order; the j loop is contiguous over both
// the output row and the b row, which the compiler vectorizes.
void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& c) {
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* crow = c.row_ptr(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row_ptr(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Matrix::Matrix(int r, int c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(r) * c)
    throw ShapeError("matrix value count does not match shape");
}

bool Matrix::all_finite() const {
  double acc = 0.0;
  for (double v : data) acc += std::fabs(v);
  return std::isfinite(acc);
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols,
                                         std::vector<std::tuple<int, int, double>> triplets) {
  for (const auto& [r, c, v] : triplets) {
    (void)v;
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw ShapeError("sparse triplet out of bounds");
  }
  std::sort(triplets.begin(), triplets.end(), [](const auto& x, const auto& y) {
    return std::tie(std::get<0>(x), std::get<1>(x)) < std::tie(std::get<0>(y), std::get<1>(y));
  });
  SparseMatrix m(rows, cols);
  m.col_idx.reserve(triplets.size());
  m.values.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    auto [r, c, v] = triplets[i];
    if (i > 0 && std::get<0>(triplets[i - 1]) == r && std::get<1>(triplets[i - 1]) == c) {
      m.values.back() += v;
      continue;
    }
    m.col_idx.push_back(c);
    m.values.push_back(v);
    m.row_ptr[r + 1]++;
  }
  for (int r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) d.at(i, col_idx[k]) += values[k];
  return d;
}

double SparseMatrix::max_abs_asymmetry() const {
  Matrix d = to_dense();
  double worst = 0.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) worst = std::max(worst, std::fabs(d.at(i, j) - d.at(j, i)));
  return worst;
}

Var Tape::push(std::uint8_t op, std::vector<int> parents, Matrix value) {
  if (!value.all_finite()) throw NonFiniteError("op produced a non-finite value");
  Node n;
  n.op = op;
  n.parents = std::move(parents);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw Error("invalid tape variable");
  return nodes_[v.id];
}

Var Tape::input(Matrix value) { return push(kInput, {}, std::move(value)); }
Var Tape::param(Matrix value) { return push(kInput, {}, std::move(value)); }

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  check_shape(av.cols == bv.rows, "matmul: inner dimensions differ");
  Matrix c(av.rows, bv.cols);
  matmul_accumulate(av, bv, c);
  return push(kMatMul, {a.id, b.id}, std::move(c));
}

Var Tape::spmm(const SparseMatrix& s, Var h) {
  const Matrix& hv = node(h).value;
  check_shape(s.cols == hv.rows, "spmm: inner dimensions differ");
  Matrix c(s.rows, hv.cols);
  for (int i = 0; i < s.rows; ++i) {
    double* crow = c.row_ptr(i);
    for (int k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
      const double v = s.values[k];
      const double* hrow = hv.row_ptr(s.col_idx[k]);
      for (int j = 0; j < hv.cols; ++j) crow[j] += v * hrow[j];
    }
  }
  Var out = push(kSpmm, {h.id}, std::move(c));
  nodes_[out.id].sparse = &s;
  return out;
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.same_shape(bv)) {
    Matrix c = av;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += bv.data[i];
    return push(kAdd, {a.id, b.id}, std::move(c));
  }
  check_shape(bv.rows == 1 && bv.cols == av.cols, "add: shapes differ and b is not a row bias");
  Matrix c = av;
  for (int i = 0; i < c.rows; ++i) {
    double* crow = c.row_ptr(i);
    for (int j = 0; j < c.cols; ++j) crow[j] += bv.data[j];
  }
  return push(kAddBias, {a.id, b.id}, std::move(c));
}

Var Tape::sub(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  check_shape(av.same_shape(bv), "sub: shapes differ");
  Matrix c = av;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] -= bv.data[i];
  return push(kSub, {a.id, b.id}, std::move(c));
}

Var Tape::mul(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  check_shape(av.same_shape(bv), "mul: shapes differ");
  Matrix c = av;
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= bv.data[i];
  return push(kMul, {a.id, b.id}, std::move(c));
}

Var Tape::relu(Var a) {
  Matrix c = node(a).value;
  for (double& v : c.data) v = v > 0.0 ? v : 0.0;
  return push(kRelu, {a.id}, std::move(c));
}

Var Tape::sigmoid(Var a) {
  Matrix c = node(a).value;
  for (double& v : c.data) v = 1.0 / (1.0 + std::exp(-v));
  return push(kSigmoid, {a.id}, std::move(c));
}

Var Tape::tanh(Var a) {
  Matrix c = node(a).value;
  for (double& v : c.data) v = std::tanh(v);
  return push(kTanh, {a.id}, std::move(c));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int rows = node(parts[0]).value.rows;
  int cols = 0;
  std::vector<int> parents;
  for (Var p : parts) {
    check_shape(node(p).value.rows == rows, "concat_cols: row counts differ");
    cols += node(p).value.cols;
    parents.push_back(p.id);
  }
  Matrix c(rows, cols);
  int offset = 0;
  for (Var p : parts) {
    const Matrix& pv = node(p).value;
    for (int i = 0; i < rows; ++i)
      std::copy(pv.row_ptr(i), pv.row_ptr(i) + pv.cols, c.row_ptr(i) + offset);
    offset += pv.cols;
  }
  return push(kConcatCols, std::move(parents), std::move(c));
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  const Matrix& av = node(a).value;
  for (int r : rows)
    check_shape(r >= 0 && r < av.rows, "gather_rows: index out of range");
  Matrix c(static_cast<int>(rows.size()), av.cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(av.row_ptr(rows[i]), av.row_ptr(rows[i]) + av.cols, c.row_ptr(static_cast<int>(i)));
  Var out = push(kGatherRows, {a.id}, std::move(c));
  nodes_[out.id].rows = std::move(rows);
  return out;
}

Var Tape::reduce_sum(Var a) {
  double s = 0.0;
  for (double v : node(a).value.data) s += v;
  return push(kReduceSum, {a.id}, Matrix::scalar(s));
}

Var Tape::reduce_mean_abs(Var a, Matrix mask) {
  const Matrix& av = node(a).value;
  check_shape(av.same_shape(mask), "reduce_mean_abs: mask shape differs");
  long long count = 0;
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask.data[i] != 0.0) {
      s += std::fabs(av.data[i]);
      ++count;
    }
  }
  if (count == 0) throw Error("reduce_mean_abs: empty masked selection");
  Var out = push(kReduceMeanAbs, {a.id}, Matrix::scalar(s / static_cast<double>(count)));
  nodes_[out.id].mask = std::move(mask);
  nodes_[out.id].inv_denom = 1.0 / static_cast<double>(count);
  return out;
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.data.empty() && !n.value.data.empty())
    throw Error("grad requested before backward()");
  return n.grad;
}

void Tape::backward(Var loss) {
  const Node& l = node(loss);
  if (!l.value.is_scalar()) throw ShapeError("backward: loss is not a scalar");
  if (consumed_) throw Error("backward: tape already consumed; reset() first");
  consumed_ = true;

  for (Node& n : nodes_) n.grad = Matrix(n.value.rows, n.value.cols);
  nodes_[loss.id].grad.data[0] = 1.0;

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    const Matrix& g = n.grad;
    switch (n.op) {
      case kInput:
        break;
      case kMatMul: {
        const Matrix& a = nodes_[n.parents[0]].value;
        const Matrix& b = nodes_[n.parents[1]].value;
        Matrix& da = nodes_[n.parents[0]].grad;
        Matrix& db = nodes_[n.parents[1]].grad;
        // da += g * b^T, db += a^T * g; both with contiguous inner loops.
        for (int i = 0; i < a.rows; ++i) {
          const double* grow = g.row_ptr(i);
          double* darow = da.row_ptr(i);
          for (int k = 0; k < a.cols; ++k) {
            const double* brow = b.row_ptr(k);
            double acc = 0.0;
            for (int j = 0; j < b.cols; ++j) acc += grow[j] * brow[j];
            darow[k] += acc;
          }
        }
        for (int i = 0; i < a.rows; ++i) {
          const double* arow = a.row_ptr(i);
          const double* grow = g.row_ptr(i);
          for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            double* dbrow = db.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) dbrow[j] += aik * grow[j];
          }
        }
        break;
      }
      case kSpmm: {
        const SparseMatrix& s = *n.sparse;
        Matrix& dh = nodes_[n.parents[0]].grad;
        for (int i = 0; i < s.rows; ++i) {
          const double* grow = g.row_ptr(i);
          for (int k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
            const double v = s.values[k];
            double* dhrow = dh.row_ptr(s.col_idx[k]);
            for (int j = 0; j < g.cols; ++j) dhrow[j] += v * grow[j];
          }
        }
        break;
      }
      case kAdd: {
        Matrix& da = nodes_[n.parents[0]].grad;
        Matrix& db = nodes_[n.parents[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data[i] += g.data[i];
          db.data[i] += g.data[i];
        }
        break;
      }
      case kAddBias: {
        Matrix& da = nodes_[n.parents[0]].grad;
        Matrix& db = nodes_[n.parents[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) da.data[i] += g.data[i];
        for (int i = 0; i < g.rows; ++i) {
          const double* grow = g.row_ptr(i);
          for (int j = 0; j < g.cols; ++j) db.data[j] += grow[j];
        }
        break;
      }
      case kSub: {
        Matrix& da = nodes_[n.parents[0]].grad;
        Matrix& db = nodes_[n.parents[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data[i] += g.data[i];
          db.data[i] -= g.data[i];
        }
        break;
      }
      case kMul: {
        const Matrix& a = nodes_[n.parents[0]].value;
        const Matrix& b = nodes_[n.parents[1]].value;
        Matrix& da = nodes_[n.parents[0]].grad;
        Matrix& db = nodes_[n.parents[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          da.data[i] += g.data[i] * b.data[i];
          db.data[i] += g.data[i] * a.data[i];
        }
        break;
      }
      case kRelu: {
        Matrix& da = nodes_[n.parents[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (n.value.data[i] > 0.0) da.data[i] += g.data[i];
        break;
      }
      case kSigmoid: {
        Matrix& da = nodes_[n.parents[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = n.value.data[i];
          da.data[i] += g.data[i] * s * (1.0 - s);
        }
        break;
      }
      case kTanh: {
        Matrix& da = nodes_[n.parents[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double t = n.value.data[i];
          da.data[i] += g.data[i] * (1.0 - t * t);
        }
        break;
      }
      case kConcatCols: {
        int offset = 0;
        for (int pid : n.parents) {
          Matrix& dp = nodes_[pid].grad;
          for (int i = 0; i < g.rows; ++i) {
            const double* grow = g.row_ptr(i) + offset;
            double* drow = dp.row_ptr(i);
            for (int j = 0; j < dp.cols; ++j) drow[j] += grow[j];
          }
          offset += dp.cols;
        }
        break;
      }
      case kGatherRows: {
        Matrix& da = nodes_[n.parents[0]].grad;
        for (std::size_t r = 0; r < n.rows.size(); ++r) {
          const double* grow = g.row_ptr(static_cast<int>(r));
          double* drow = da.row_ptr(n.rows[r]);
          for (int j = 0; j < g.cols; ++j) drow[j] += grow[j];
        }
        break;
      }
      case kReduceSum: {
        Matrix& da = nodes_[n.parents[0]].grad;
        const double gv = g.data[0];
        for (double& v : da.data) v += gv;
        break;
      }
      case kReduceMeanAbs: {
        const Matrix& a = nodes_[n.parents[0]].value;
        Matrix& da = nodes_[n.parents[0]].grad;
        const double gv = g.data[0] * n.inv_denom;
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (n.mask.data[i] == 0.0) continue;
          const double x = a.data[i];
          if (x > 0.0)
            da.data[i] += gv;
          else if (x < 0.0)
            da.data[i] -= gv;
        }
        break;
      }
      default:
        throw Error("backward: unknown op");
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

void AdamState::step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: param/grad count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows, p->cols);
      v_.emplace_back(p->rows, p->cols);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam: parameter count changed");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    const Matrix& g = *grads[p];
    if (!w.same_shape(g) || !w.same_shape(m_[p]))
      throw ShapeError("adam: shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data[i];
      m_[p].data[i] = cfg_.beta1 * m_[p].data[i] + (1.0 - cfg_.beta1) * gi;
      v_[p].data[i] = cfg_.beta2 * v_[p].data[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m_[p].data[i] / bc1;
      const double vhat = v_[p].data[i] / bc2;
      w.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double grad_check(const TapeFn& f, const std::vector<Matrix>& point, double h) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const Matrix& p : point) vars.push_back(tape.param(p));
  Var loss = f(tape, vars);
  if (!tape.value(loss).is_scalar()) throw ShapeError("grad_check: function is not scalar-valued");
  tape.backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(vars.size());
  for (Var v : vars) analytic.push_back(tape.grad(v));

  auto eval = [&f](const std::vector<Matrix>& pt) {
    Tape t;
    std::vector<Var> vs;
    vs.reserve(pt.size());
    for (const Matrix& p : pt) vs.push_back(t.param(p));
    return t.value(f(t, vs)).data[0];
  };

  std::vector<Matrix> shifted = point;
  double worst = 0.0;
  for (std::size_t p = 0; p < point.size(); ++p) {
    for (std::size_t i = 0; i < point[p].size(); ++i) {
      const double orig = shifted[p].data[i];
      shifted[p].data[i] = orig + h;
      const double fp = eval(shifted);
      shifted[p].data[i] = orig - h;
      const double fm = eval(shifted);
      shifted[p].data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p].data[i];
      const double err =
          std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace citeflow
