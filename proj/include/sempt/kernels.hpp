#pragma once

#include <cmath>
#include <cstdint>

#include "sempt/errors.hpp"

// Dense inner loops shared by the tensor layer. Every kernel comes in two
// flavours: a plain serial reference (`*_serial`) and an OpenMP version that
// partitions independent output rows/elements across threads. The parallel
// versions keep the per-element accumulation order identical to the serial
// reference, so results are bitwise equal for any thread count; the unit
// tests assert exactly that and the kernel_bench tool compares throughput.

namespace sempt::kernels {

inline bool& parallel_flag() {
  static bool enabled = true;
  return enabled;
}

inline bool parallel_enabled() { return parallel_flag(); }
inline void set_parallel_enabled(bool on) { parallel_flag() = on; }

// Work below this many output elements is not worth a thread team.
inline constexpr int64_t kParallelGrain = 16 * 1024;

// ---------------------------------------------------------------------------
// matmul: out(m x n) = a(m x k) * b(k x n), optionally accumulating into out.
// ikj loop order: row-major friendly and identical in both flavours.

template <typename T>
void matmul_nn_serial(const T* a, const T* b, T* out, int64_t m, int64_t k, int64_t n,
                      bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    T* orow = out + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) orow[j] = T(0);
    }
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* out, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  const bool par = parallel_enabled() && m > 1 && m * k * n >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < m; ++i) {
    T* orow = out + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) orow[j] = T(0);
    }
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out(m x n) = a(m x k) * b(n x k)^T
template <typename T>
void matmul_nt_serial(const T* a, const T* bt, T* out, int64_t m, int64_t k, int64_t n,
                      bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* orow = out + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = bt + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] = accumulate ? orow[j] + acc : acc;
    }
  }
}

template <typename T>
void matmul_nt(const T* a, const T* bt, T* out, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  const bool par = parallel_enabled() && m > 1 && m * k * n >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* orow = out + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = bt + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] = accumulate ? orow[j] + acc : acc;
    }
  }
}

// out(m x n) = a(k x m)^T * b(k x n)
template <typename T>
void matmul_tn_serial(const T* at, const T* b, T* out, int64_t m, int64_t k, int64_t n,
                      bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    T* orow = out + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) orow[j] = T(0);
    }
    for (int64_t p = 0; p < k; ++p) {
      const T av = at[p * m + i];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

template <typename T>
void matmul_tn(const T* at, const T* b, T* out, int64_t m, int64_t k, int64_t n,
               bool accumulate) {
  const bool par = parallel_enabled() && m > 1 && m * k * n >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < m; ++i) {
    T* orow = out + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) orow[j] = T(0);
    }
    for (int64_t p = 0; p < k; ++p) {
      const T av = at[p * m + i];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise maps.

template <typename T>
void tanh_map_serial(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

template <typename T>
void tanh_map(const T* x, T* y, int64_t n) {
  const bool par = parallel_enabled() && n >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction; logits are pre-scaled by inv_temp.

template <typename T>
void softmax_row(const T* x, T* y, int64_t cols, T inv_temp) {
  T mx = x[0];
  for (int64_t j = 1; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
  T sum = T(0);
  for (int64_t j = 0; j < cols; ++j) {
    y[j] = std::exp((x[j] - mx) * inv_temp);
    sum += y[j];
  }
  const T inv = T(1) / sum;
  for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
}

template <typename T>
void softmax_rows_serial(const T* x, T* y, int64_t rows, int64_t cols, T inv_temp) {
  for (int64_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols, inv_temp);
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols, T inv_temp) {
  const bool par = parallel_enabled() && rows > 1 && rows * cols >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < rows; ++i) softmax_row(x + i * cols, y + i * cols, cols, inv_temp);
}

// ---------------------------------------------------------------------------
// Row-wise L2 normalization. Zero rows are reported via the norms output; the
// caller decides whether that is an error.

template <typename T>
void l2_normalize_row(const T* x, T* y, T* norm_out, int64_t cols) {
  T sq = T(0);
  for (int64_t j = 0; j < cols; ++j) sq += x[j] * x[j];
  const T norm = std::sqrt(sq);
  *norm_out = norm;
  if (norm == T(0)) {
    for (int64_t j = 0; j < cols; ++j) y[j] = T(0);
    return;
  }
  const T inv = T(1) / norm;
  for (int64_t j = 0; j < cols; ++j) y[j] = x[j] * inv;
}

template <typename T>
void l2_normalize_rows_serial(const T* x, T* y, T* norms, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i)
    l2_normalize_row(x + i * cols, y + i * cols, norms + i, cols);
}

template <typename T>
void l2_normalize_rows(const T* x, T* y, T* norms, int64_t rows, int64_t cols) {
  const bool par = parallel_enabled() && rows > 1 && rows * cols >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < rows; ++i)
    l2_normalize_row(x + i * cols, y + i * cols, norms + i, cols);
}

// ---------------------------------------------------------------------------
// axpy-style helpers used by backward passes.

template <typename T>
void add_scaled_serial(T* out, const T* x, T scale, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] += scale * x[i];
}

template <typename T>
void add_scaled(T* out, const T* x, T scale, int64_t n) {
  const bool par = parallel_enabled() && n >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (int64_t i = 0; i < n; ++i) out[i] += scale * x[i];
}

}  // namespace sempt::kernels
