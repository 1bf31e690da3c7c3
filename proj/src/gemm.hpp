#pragma once

#include <cstdint>

namespace heracles::detail {

/// C[m x n] (+)= op(A) * op(B). A is [m x k] row-major, or [k x m] when
/// trans_a; B is [k x n], or [n x k] when trans_b.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate);

}  // namespace heracles::detail
