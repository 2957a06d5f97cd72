#pragma once

// Dense/sparse numeric core with reverse-mode differentiation and Adam.
// All values are 64-bit floats. A Tape records primitive ops in execution
// order and supports one backward sweep per forward pass.

#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "citeflow/common.hpp"

namespace citeflow {

// Row-major dense matrix. Scalars are 1x1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  Matrix(int r, int c, std::vector<double> values);

  static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool all_finite() const;
};

// Compressed sparse row matrix with sorted column indices per row.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // length rows + 1
  std::vector<int> col_idx;
  std::vector<double> values;

  SparseMatrix() = default;
  SparseMatrix(int r, int c) : rows(r), cols(c), row_ptr(r + 1, 0) {}

  // Builds CSR from (row, col, value) triplets; duplicates are summed.
  static SparseMatrix from_triplets(int rows, int cols,
                                    std::vector<std::tuple<int, int, double>> triplets);

  std::size_t nnz() const { return values.size(); }
  Matrix to_dense() const;
  double max_abs_asymmetry() const;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records primitive ops and their saved activations; owns node storage.
// Sparse operands passed to spmm are referenced, not copied: the caller keeps
// them alive for the tape's lifetime. A tape is confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. input() is a constant, param() marks a trainable leaf; both are
  // differentiable nodes, the flag only affects bookkeeping helpers.
  Var input(Matrix value);
  Var param(Matrix value);

  Var matmul(Var a, Var b);
  Var spmm(const SparseMatrix& s, Var h);
  // add supports equal shapes or row-broadcast of a 1 x c bias as b.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var a, std::vector<int> rows);
  Var reduce_sum(Var a);
  // Mean of |a_ij| over cells where mask_ij != 0. Errors on an empty mask.
  // Subgradient at 0 is 0.
  Var reduce_mean_abs(Var a, Matrix mask);

  const Matrix& value(Var v) const;
  // Gradient of the last backward()'s loss w.r.t. v. Zeros if v is off-path.
  const Matrix& grad(Var v) const;

  // Reverse sweep from a scalar loss. A second backward on the same forward
  // pass throws; reset() clears the tape for reuse.
  void backward(Var loss);
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::uint8_t op;
    std::vector<int> parents;
    Matrix value;
    Matrix grad;
    const SparseMatrix* sparse = nullptr;
    std::vector<int> rows;   // gather_rows payload
    Matrix mask;             // reduce_mean_abs payload
    double inv_denom = 0.0;  // reduce_mean_abs payload
  };

  Var push(std::uint8_t op, std::vector<int> parents, Matrix value);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Bias-corrected Adam. Moment buffers are sized on the first step and must
// keep matching the parameter shapes afterwards.
struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

  long long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  long long step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// Builds a scalar loss on the tape from the given parameter leaves.
using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares backward() against central finite differences coordinate-wise and
// returns the max error |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const TapeFn& f, const std::vector<Matrix>& point, double h = 1e-5);

}  // namespace citeflow
