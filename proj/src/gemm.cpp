#include "gemm.hpp"

#include <algorithm>
#include <vector>

#include "heracles/parallel.hpp"

namespace heracles::detail {

namespace {

// Register tile and cache blocks. Every C element accumulates its k terms in
// ascending order within each KC block, independent of the thread split.
constexpr std::int64_t MR = 4;
constexpr std::int64_t NR = 8;
constexpr std::int64_t KC = 256;
constexpr std::int64_t NC = 512;

/// acc[MR][NR] = sum_p ap[p][:] (x) bp[p][:], then C += acc on the valid part.
void micro_kernel(std::int64_t kc, const double* ap, const double* bp, std::int64_t ldb, double* c, std::int64_t ldc,
                  std::int64_t mr, std::int64_t nr) {
    double acc[MR][NR] = {};
    if (nr == NR) {
        for (std::int64_t p = 0; p < kc; ++p) {
            const double* brow = bp + p * ldb;
            const double* acol = ap + p * MR;
            for (std::int64_t r = 0; r < MR; ++r) {
                const double av = acol[r];
                for (std::int64_t j = 0; j < NR; ++j) acc[r][j] += av * brow[j];
            }
        }
    } else {
        for (std::int64_t p = 0; p < kc; ++p) {
            const double* brow = bp + p * ldb;
            const double* acol = ap + p * MR;
            for (std::int64_t r = 0; r < MR; ++r) {
                const double av = acol[r];
                for (std::int64_t j = 0; j < nr; ++j) acc[r][j] += av * brow[j];
            }
        }
    }
    for (std::int64_t r = 0; r < mr; ++r) {
        double* crow = c + r * ldc;
        for (std::int64_t j = 0; j < nr; ++j) crow[j] += acc[r][j];
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    if (m == 0 || n == 0 || k == 0) return;

    std::vector<double> bpack(static_cast<std::size_t>(std::min(KC, k) * std::min(NC, n)));
    const std::int64_t row_blocks = (m + MR - 1) / MR;

    for (std::int64_t p0 = 0; p0 < k; p0 += KC) {
        const std::int64_t kc = std::min(KC, k - p0);
        for (std::int64_t j0 = 0; j0 < n; j0 += NC) {
            const std::int64_t nc = std::min(NC, n - j0);
            // Pack op(B)[p0:p0+kc, j0:j0+nc] row-major with leading dimension nc.
            for (std::int64_t p = 0; p < kc; ++p) {
                double* dst = bpack.data() + p * nc;
                if (trans_b) {
                    for (std::int64_t j = 0; j < nc; ++j) dst[j] = b[(j0 + j) * k + p0 + p];
                } else {
                    std::copy(b + (p0 + p) * n + j0, b + (p0 + p) * n + j0 + nc, dst);
                }
            }
            const double* bp = bpack.data();
            const std::int64_t min_blocks = std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, kc * nc / MR));
            parallel_for(row_blocks, min_blocks, [&](std::int64_t rb0, std::int64_t rb1) {
                std::vector<double> apack(static_cast<std::size_t>(kc * MR));
                for (std::int64_t rb = rb0; rb < rb1; ++rb) {
                    const std::int64_t i0 = rb * MR;
                    const std::int64_t mr = std::min(MR, m - i0);
                    // Pack op(A)[i0:i0+mr, p0:p0+kc] as [kc][MR], zero-padded.
                    for (std::int64_t p = 0; p < kc; ++p) {
                        double* dst = apack.data() + p * MR;
                        for (std::int64_t r = 0; r < MR; ++r) {
                            if (r >= mr) {
                                dst[r] = 0.0;
                            } else {
                                dst[r] = trans_a ? a[(p0 + p) * m + i0 + r] : a[(i0 + r) * k + p0 + p];
                            }
                        }
                    }
                    for (std::int64_t j = 0; j < nc; j += NR) {
                        micro_kernel(kc, apack.data(), bp + j, nc, c + i0 * n + j0 + j, n, mr, std::min(NR, nc - j));
                    }
                }
            });
        }
    }
}

}  // namespace heracles::detail
