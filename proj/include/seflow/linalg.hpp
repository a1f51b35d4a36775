#pragma once

// Small dense matrix helpers for the channel-mixing matrices (order <= a few
// dozen). Factorization always runs in double, whatever the model scalar type.

#include <cstdint>
#include <vector>

namespace seflow::linalg {

struct Lu {
  int n = 0;
  std::vector<double> a;   // packed LU, row-major
  std::vector<int> piv;    // row permutation
  bool singular = false;
  double log_abs_det = 0;  // valid when !singular
  double det_sign = 1;
};

Lu lu_factor(const std::vector<double>& m, int n);

/// Inverse from a prior factorization. Must not be called on a singular Lu.
std::vector<double> lu_inverse(const Lu& lu);

/// Random orthogonal matrix by modified Gram-Schmidt of a Gaussian draw.
std::vector<double> random_orthogonal(int n, std::uint64_t seed);

}  // namespace seflow::linalg
