#pragma once

#include <cstdint>
#include <functional>

#include "octevo/tensor.hpp"

// Internal matrix-multiply backend. Row-major buffers with explicit leading
// dimensions, BLAS-style transpose flags. Heavy products are split into a
// fixed number of column blocks executed on a small persistent pool; the
// block partition depends only on the shapes, never on the worker count, so
// results are reproducible run to run.

namespace octevo::detail {

enum class Tr { N, T };

// C(m,n) (+)= opA(A) * opB(B); opA(A) is m x k, opB(B) is k x n.
// lda/ldb are the leading dimensions of the stored (untransposed) matrices.
void gemm(Tr ta, Tr tb, int64_t m, int64_t n, int64_t k, const Real* A,
          int64_t lda, const Real* B, int64_t ldb, Real* C, int64_t ldc,
          bool accumulate);

// Runs fn(0..nblocks-1) across the pool (caller participates). Blocks must
// touch disjoint output; results are then independent of scheduling.
void parallel_blocks(int nblocks, const std::function<void(int)>& fn);

int pool_workers();

}  // namespace octevo::detail
