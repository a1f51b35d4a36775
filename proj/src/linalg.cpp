#include "seflow/linalg.hpp"

#include <cmath>
#include <random>

#include "seflow/errors.hpp"
#include "seflow/rng.hpp"

namespace seflow::linalg {

Lu lu_factor(const std::vector<double>& m, int n) {
  Lu lu;
  lu.n = n;
  lu.a = m;
  lu.piv.resize(n);
  for (int i = 0; i < n; ++i) lu.piv[i] = i;
  double log_det = 0;
  double sign = 1;
  for (int col = 0; col < n; ++col) {
    int p = col;
    double best = std::fabs(lu.a[static_cast<std::size_t>(col) * n + col]);
    for (int r = col + 1; r < n; ++r) {
      double v = std::fabs(lu.a[static_cast<std::size_t>(r) * n + col]);
      if (v > best) {
        best = v;
        p = r;
      }
    }
    if (best == 0.0) {
      lu.singular = true;
      return lu;
    }
    if (p != col) {
      for (int c = 0; c < n; ++c)
        std::swap(lu.a[static_cast<std::size_t>(p) * n + c],
                  lu.a[static_cast<std::size_t>(col) * n + c]);
      std::swap(lu.piv[p], lu.piv[col]);
      sign = -sign;
    }
    const double pivot = lu.a[static_cast<std::size_t>(col) * n + col];
    log_det += std::log(std::fabs(pivot));
    if (pivot < 0) sign = -sign;
    for (int r = col + 1; r < n; ++r) {
      double f = lu.a[static_cast<std::size_t>(r) * n + col] / pivot;
      lu.a[static_cast<std::size_t>(r) * n + col] = f;
      for (int c = col + 1; c < n; ++c)
        lu.a[static_cast<std::size_t>(r) * n + c] -= f * lu.a[static_cast<std::size_t>(col) * n + c];
    }
  }
  lu.log_abs_det = log_det;
  lu.det_sign = sign;
  return lu;
}

std::vector<double> lu_inverse(const Lu& lu) {
  if (lu.singular) throw NumericError("matrix inverse of a singular factorization");
  const int n = lu.n;
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> col(n), y(n);
  for (int e = 0; e < n; ++e) {
    // Solve A x = e_e using PA = LU: first permute, then two triangular solves.
    for (int i = 0; i < n; ++i) col[i] = (lu.piv[i] == e) ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i) {
      double s = col[i];
      for (int j = 0; j < i; ++j) s -= lu.a[static_cast<std::size_t>(i) * n + j] * y[j];
      y[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[i];
      for (int j = i + 1; j < n; ++j) s -= lu.a[static_cast<std::size_t>(i) * n + j] * inv[static_cast<std::size_t>(j) * n + e];
      inv[static_cast<std::size_t>(i) * n + e] = s / lu.a[static_cast<std::size_t>(i) * n + i];
    }
  }
  return inv;
}

std::vector<double> random_orthogonal(int n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> q(static_cast<std::size_t>(n) * n);
  for (int attempt = 0; attempt < 16; ++attempt) {
    for (auto& v : q) v = gauss(rng);
    // Modified Gram-Schmidt over rows.
    bool ok = true;
    for (int r = 0; r < n && ok; ++r) {
      double* row = q.data() + static_cast<std::size_t>(r) * n;
      for (int p = 0; p < r; ++p) {
        const double* prev = q.data() + static_cast<std::size_t>(p) * n;
        double d = 0;
        for (int c = 0; c < n; ++c) d += row[c] * prev[c];
        for (int c = 0; c < n; ++c) row[c] -= d * prev[c];
      }
      double norm = 0;
      for (int c = 0; c < n; ++c) norm += row[c] * row[c];
      norm = std::sqrt(norm);
      if (norm < 1e-8) {
        ok = false;
        break;
      }
      for (int c = 0; c < n; ++c) row[c] /= norm;
    }
    if (ok) return q;
  }
  throw NumericError("failed to draw a random orthogonal matrix");
}

}  // namespace seflow::linalg
