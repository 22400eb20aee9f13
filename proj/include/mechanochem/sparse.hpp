#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mechanochem {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Compressed-row sparse matrix. Within each row column indices strictly
// increase; duplicate triplets are summed during compression.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  static SparseMatrix from_triplets(int n_rows, int n_cols,
                                    std::vector<Triplet> triplets) {
    if (n_rows < 0 || n_cols < 0)
      throw std::invalid_argument("negative matrix dimension");
    for (const auto& t : triplets) {
      if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
        throw std::invalid_argument("triplet index out of range");
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const Triplet& a, const Triplet& b) {
                return a.row != b.row ? a.row < b.row : a.col < b.col;
              });
    SparseMatrix m;
    m.n_rows_ = n_rows;
    m.n_cols_ = n_cols;
    m.row_offsets_.assign(static_cast<size_t>(n_rows) + 1, 0);
    for (size_t i = 0; i < triplets.size();) {
      size_t j = i;
      double sum = 0.0;
      while (j < triplets.size() && triplets[j].row == triplets[i].row &&
             triplets[j].col == triplets[i].col) {
        sum += triplets[j].value;
        ++j;
      }
      m.col_indices_.push_back(triplets[i].col);
      m.values_.push_back(sum);
      m.row_offsets_[triplets[i].row + 1]++;
      i = j;
    }
    for (int r = 0; r < n_rows; ++r)
      m.row_offsets_[r + 1] += m.row_offsets_[r];
    return m;
  }

  static SparseMatrix identity(int n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  const std::vector<int>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const {
    if (static_cast<int>(x.size()) != n_cols_ ||
        static_cast<int>(y.size()) != n_rows_)
      throw std::invalid_argument("matvec dimension mismatch");
    for (int r = 0; r < n_rows_; ++r) {
      double s = 0.0;
      for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
        s += values_[k] * x[col_indices_[k]];
      y[r] = s;
    }
  }

  std::vector<double> multiply(const std::vector<double>& x) const {
    std::vector<double> y(n_rows_, 0.0);
    multiply(x, y);
    return y;
  }

  double entry(int row, int col) const {
    for (int k = row_offsets_[row]; k < row_offsets_[row + 1]; ++k)
      if (col_indices_[k] == col) return values_[k];
    return 0.0;
  }

  double quadratic_form(std::span<const double> x) const {
    double s = 0.0;
    for (int r = 0; r < n_rows_; ++r) {
      double row = 0.0;
      for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
        row += values_[k] * x[col_indices_[k]];
      s += x[r] * row;
    }
    return s;
  }

  double infinity_norm() const {
    double m = 0.0;
    for (int r = 0; r < n_rows_; ++r) {
      double s = 0.0;
      for (int k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
        s += std::abs(values_[k]);
      m = std::max(m, s);
    }
    return m;
  }

 private:
  int n_rows_ = 0;
  int n_cols_ = 0;
  std::vector<int> row_offsets_{0};
  std::vector<int> col_indices_;
  std::vector<double> values_;
};

// Randomized symmetry certificate: x.(Ay) == y.(Ax) for `pairs` random
// pairs, relative tolerance 1e-12. Deterministic seed.
inline bool randomized_symmetry_check(const SparseMatrix& a, int pairs = 5,
                                      double rtol = 1e-12) {
  if (a.n_rows() != a.n_cols()) return false;
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const int n = a.n_rows();
  std::vector<double> x(n), y(n);
  for (int p = 0; p < pairs; ++p) {
    for (int i = 0; i < n; ++i) {
      x[i] = dist(rng);
      y[i] = dist(rng);
    }
    const auto ay = a.multiply(y);
    const auto ax = a.multiply(x);
    double xay = 0.0, yax = 0.0, scale = 0.0;
    for (int i = 0; i < n; ++i) {
      xay += x[i] * ay[i];
      yax += y[i] * ax[i];
      scale += std::abs(x[i] * ay[i]) + std::abs(y[i] * ax[i]);
    }
    if (std::abs(xay - yax) > rtol * (scale + 1.0)) return false;
  }
  return true;
}

enum class SolveMethod { CG, DIRECT };
enum class Preconditioner { NONE, JACOBI };

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  SolveMethod method = SolveMethod::CG;
};

// Preconditioned conjugate gradients for SPD systems.
// Converged when ||Ax - b||_2 <= tol * ||b||_2.
inline std::pair<std::vector<double>, SolveReport> cg_solve(
    const SparseMatrix& a, const std::vector<double>& b, double tol = 1e-10,
    int max_iter = -1, Preconditioner precond = Preconditioner::NONE) {
  if (a.n_rows() != a.n_cols())
    throw std::invalid_argument("cg_solve: matrix not square");
  if (static_cast<int>(b.size()) != a.n_rows())
    throw std::invalid_argument("cg_solve: dimension mismatch");
  if (tol <= 0.0) throw std::invalid_argument("cg_solve: tol must be > 0");
  const int n = a.n_rows();
  if (max_iter < 0) max_iter = 10 * n;

  std::vector<double> diag_inv;
  if (precond == Preconditioner::JACOBI) {
    diag_inv.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double d = a.entry(i, i);
      if (d <= 0.0)
        throw std::runtime_error("cg_solve: matrix not SPD");
      diag_inv[i] = 1.0 / d;
    }
  }

  SolveReport rep;
  rep.method = SolveMethod::CG;
  std::vector<double> x(n, 0.0);
  double bnorm = 0.0;
  for (double v : b) bnorm += v * v;
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0.0) {
    rep.converged = true;
    return {std::move(x), rep};
  }

  std::vector<double> r = b;
  std::vector<double> z(n), p(n), ap(n);
  auto apply_precond = [&](const std::vector<double>& in,
                           std::vector<double>& out) {
    if (precond == Preconditioner::JACOBI) {
      for (int i = 0; i < n; ++i) out[i] = diag_inv[i] * in[i];
    } else {
      out = in;
    }
  };
  apply_precond(r, z);
  p = z;
  double rz = 0.0;
  for (int i = 0; i < n; ++i) rz += r[i] * z[i];

  double rnorm = bnorm;
  for (int it = 0; it < max_iter; ++it) {
    a.multiply(p, ap);
    double pap = 0.0;
    for (int i = 0; i < n; ++i) pap += p[i] * ap[i];
    if (pap <= 0.0) throw std::runtime_error("cg_solve: matrix not SPD");
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    rnorm = 0.0;
    for (double v : r) rnorm += v * v;
    rnorm = std::sqrt(rnorm);
    rep.iterations = it + 1;
    if (rnorm <= tol * bnorm) {
      rep.converged = true;
      break;
    }
    apply_precond(r, z);
    double rz_new = 0.0;
    for (int i = 0; i < n; ++i) rz_new += r[i] * z[i];
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  rep.final_residual = rnorm;
  if (!rep.converged && rnorm <= tol * bnorm) rep.converged = true;
  return {std::move(x), rep};
}

namespace detail {

// Banded LU with partial pivoting (LAPACK gbtrf layout). All assembled
// operators here are banded under the structured-grid node ordering, so
// band elimination is the sparse factorization of choice at desk scale.
class BandLU {
 public:
  explicit BandLU(const SparseMatrix& a) {
    const int n = a.n_rows();
    if (n != a.n_cols())
      throw std::invalid_argument("direct_solve: matrix not square");
    n_ = n;
    kl_ = 0;
    ku_ = 0;
    for (int r = 0; r < n; ++r) {
      for (int k = a.row_offsets()[r]; k < a.row_offsets()[r + 1]; ++k) {
        const int c = a.col_indices()[k];
        kl_ = std::max(kl_, r - c);
        ku_ = std::max(ku_, c - r);
      }
    }
    kv_ = kl_ + ku_;
    ldab_ = 2 * kl_ + ku_ + 1;
    ab_.assign(static_cast<size_t>(ldab_) * n, 0.0);
    col_max_.assign(n, 0.0);
    for (int r = 0; r < n; ++r) {
      for (int k = a.row_offsets()[r]; k < a.row_offsets()[r + 1]; ++k) {
        const int c = a.col_indices()[k];
        at(kv_ + r - c, c) = a.values()[k];
        col_max_[c] = std::max(col_max_[c], std::abs(a.values()[k]));
      }
    }
    pivots_.assign(n, 0);
    factorize();
  }

  std::vector<double> solve(std::vector<double> b) const {
    if (static_cast<int>(b.size()) != n_)
      throw std::invalid_argument("direct_solve: dimension mismatch");
    for (int j = 0; j < n_; ++j) {
      if (pivots_[j] != j) std::swap(b[j], b[pivots_[j]]);
      const int km = std::min(kl_, n_ - 1 - j);
      for (int t = 1; t <= km; ++t) b[j + t] -= at(kv_ + t, j) * b[j];
    }
    for (int j = n_ - 1; j >= 0; --j) {
      b[j] /= at(kv_, j);
      const int top = std::max(0, j - kv_);
      for (int i = top; i < j; ++i) b[i] -= at(kv_ + i - j, j) * b[j];
    }
    return b;
  }

 private:
  double& at(int band_row, int col) {
    return ab_[static_cast<size_t>(col) * ldab_ + band_row];
  }
  double at(int band_row, int col) const {
    return ab_[static_cast<size_t>(col) * ldab_ + band_row];
  }

  void factorize() {
    for (int j = 0; j < n_; ++j) {
      const int km = std::min(kl_, n_ - 1 - j);
      int piv = 0;
      double piv_val = std::abs(at(kv_, j));
      for (int t = 1; t <= km; ++t) {
        if (std::abs(at(kv_ + t, j)) > piv_val) {
          piv_val = std::abs(at(kv_ + t, j));
          piv = t;
        }
      }
      if (piv_val < 1e-14 * col_max_[j] || piv_val == 0.0)
        throw std::runtime_error("direct_solve: singular system");
      pivots_[j] = j + piv;
      const int jend = std::min(n_ - 1, j + kv_);
      if (piv != 0) {
        for (int c = j; c <= jend; ++c)
          std::swap(at(kv_ + j - c, c), at(kv_ + pivots_[j] - c, c));
      }
      for (int t = 1; t <= km; ++t) {
        const double m = at(kv_ + t, j) / at(kv_, j);
        at(kv_ + t, j) = m;
        for (int c = j + 1; c <= jend; ++c)
          at(kv_ + (j + t) - c, c) -= m * at(kv_ + j - c, c);
      }
    }
  }

  int n_ = 0, kl_ = 0, ku_ = 0, kv_ = 0, ldab_ = 0;
  std::vector<double> ab_;
  std::vector<double> col_max_;
  std::vector<int> pivots_;
};

}  // namespace detail

inline std::vector<double> direct_solve(const SparseMatrix& a,
                                        const std::vector<double>& b) {
  detail::BandLU lu(a);
  return lu.solve(b);
}

// Row-sum mass lumping; preserves the total: sum_i lump(M)_i = sum_ij M_ij.
inline std::vector<double> lump_mass(const SparseMatrix& m) {
  std::vector<double> d(m.n_rows(), 0.0);
  for (int r = 0; r < m.n_rows(); ++r) {
    double s = 0.0;
    for (int k = m.row_offsets()[r]; k < m.row_offsets()[r + 1]; ++k)
      s += m.values()[k];
    if (s < 0.0) throw std::invalid_argument("lump_mass: invalid mass matrix");
    d[r] = s;
  }
  return d;
}

}  // namespace mechanochem
