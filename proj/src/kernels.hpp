#pragma once

#include <cstddef>

// Dense matrix kernels shared by the autodiff ops and the graph-free
// inference engine. All matrices are row-major. Accumulating variants (+=)
// let gradient buffers be filled without temporaries. The i-k-j loop order
// keeps the inner loop contiguous on both operands; each output row is
// computed independently from whole input rows, so results for a row do
// not depend on which other rows are present in the batch.

namespace har::kern {

// c[m x n] += a[m x k] * b[k x n]
template <class S>
void gemm_acc(const S* a, const S* b, S* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* ai = a + i * k;
    S* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = ai[p];
      const S* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x k] += a[m x n] * b^T with b[k x n]
template <class S>
void gemm_abt_acc(const S* a, const S* b, S* c, std::size_t m, std::size_t n,
                  std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* ai = a + i * n;
    S* ci = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const S* bj = b + j * n;
      S acc = S(0);
      for (std::size_t p = 0; p < n; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[k x n] += a^T * b with a[m x k], b[m x n]
template <class S>
void gemm_atb_acc(const S* a, const S* b, S* c, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* ai = a + i * k;
    const S* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = ai[p];
      S* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace har::kern
