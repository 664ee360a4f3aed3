#pragma once

#include <cstddef>
#include <cstring>

// Small dense kernels for the convolution and dense layers. All matrices
// are row-major; every kernel accumulates into C. Summation order is fixed
// by the tiling, so results are deterministic for a given build.
namespace wsr::ag::detail {

// Dot product with eight running partial sums. Strict IEEE semantics keep a
// single accumulator from vectorizing.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t u = 0; u < 8; ++u) acc[u] += a[i + u] * b[i + u];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// 32-byte lane group; lowered to pairs of SSE registers without AVX.
template <typename T>
struct Lanes {
  typedef T type __attribute__((vector_size(32)));
  static constexpr std::size_t width = 32 / sizeof(T);
};

// C[M x N] += op(A) * B[K x N], where op(A) is A[M x K] or, with TransA,
// the transpose of A[K x M]. Written with explicit lane vectors because
// the auto-vectorizer otherwise picks the reduction axis.
template <bool TransA, typename T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* __restrict a,
              const T* __restrict b, T* __restrict c) {
  using V = typename Lanes<T>::type;
  constexpr std::size_t W = Lanes<T>::width;
  constexpr std::size_t MR = 4;
  const std::size_t a_row = TransA ? 1 : K;
  const std::size_t a_col = TransA ? M : 1;
  std::size_t i = 0;
  for (; i + MR <= M; i += MR) {
    std::size_t j = 0;
    for (; j + W <= N; j += W) {
      V acc[MR];
      for (std::size_t r = 0; r < MR; ++r) std::memcpy(&acc[r], c + (i + r) * N + j, sizeof(V));
      for (std::size_t p = 0; p < K; ++p) {
        V bv;
        std::memcpy(&bv, b + p * N + j, sizeof(V));
        for (std::size_t r = 0; r < MR; ++r) acc[r] += a[(i + r) * a_row + p * a_col] * bv;
      }
      for (std::size_t r = 0; r < MR; ++r) std::memcpy(c + (i + r) * N + j, &acc[r], sizeof(V));
    }
    for (std::size_t r = 0; r < MR; ++r)
      for (std::size_t p = 0; p < K; ++p) {
        const T av = a[(i + r) * a_row + p * a_col];
        for (std::size_t jj = j; jj < N; ++jj) c[(i + r) * N + jj] += av * b[p * N + jj];
      }
  }
  for (; i < M; ++i)
    for (std::size_t p = 0; p < K; ++p) {
      const T av = a[i * a_row + p * a_col];
      for (std::size_t jj = 0; jj < N; ++jj) c[i * N + jj] += av * b[p * N + jj];
    }
}

// C[M x N] += A[M x K] * B[N x K]^T.
template <typename T>
void gemm_nt_acc(std::size_t M, std::size_t N, std::size_t K, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) c[i * N + j] += dot(a + i * K, b + j * K, K);
}

}  // namespace wsr::ag::detail
