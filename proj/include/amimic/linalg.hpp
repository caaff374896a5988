#pragma once

#include <vector>

#include "amimic/tensor.hpp"

namespace amimic {

struct SvdResult {
  Matrix U;
  /// Descending.
  std::vector<double> singular_values;
  Matrix V;
  bool converged = false;
};

/// Full singular value decomposition of a square matrix, A = U diag(s) V^T.
/// Two-sided Jacobi (Eigen), which is deterministic and accurate for the
/// small dense matrices used here.
SvdResult svd(const Matrix& a);

}  // namespace amimic
