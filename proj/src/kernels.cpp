#include "stpgn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stpgn::kernels {

namespace {

std::atomic<bool> g_force_serial{false};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1u << 16;

bool use_parallel(std::size_t work) {
  if (g_force_serial.load(std::memory_order_relaxed) || work < kParallelThreshold) return false;
#ifdef _OPENMP
  return !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  return false;
#endif
}

// Block kernels shared by both paths so the per-element order is identical:
// every output element is a sum over the inner index taken in ascending order.
// Blocks of kBlock rows share each pass over the streamed operand.
constexpr std::size_t kBlock = 4;

std::size_t block_count(std::size_t rows) { return (rows + kBlock - 1) / kBlock; }

// Rows [i0, i0 + R) of C += A * B.
template <std::size_t R>
inline void gemm_block(const double* a, const double* b, double* c, std::size_t i0, std::size_t k, std::size_t n) {
  const double* ar[R];
  double* cr[R];
  for (std::size_t r = 0; r < R; ++r) {
    ar[r] = a + (i0 + r) * k;
    cr[r] = c + (i0 + r) * n;
  }
  for (std::size_t p = 0; p < k; ++p) {
    double av[R];
    bool any = false;
    for (std::size_t r = 0; r < R; ++r) any |= (av[r] = ar[r][p]) != 0.0;
    if (!any) continue;
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double bv = b_row[j];
      for (std::size_t r = 0; r < R; ++r) cr[r][j] += av[r] * bv;
    }
  }
}

// Rows [i0, i0 + R) of C += A * B^T.
template <std::size_t R>
inline void gemm_nt_block(const double* a, const double* b, double* c, std::size_t i0, std::size_t k, std::size_t n) {
  const double* ar[R];
  for (std::size_t r = 0; r < R; ++r) ar[r] = a + (i0 + r) * k;
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    const double* b0 = b + j * k;
    const double* b1 = b0 + k;
    double s0[R] = {}, s1[R] = {};
    for (std::size_t p = 0; p < k; ++p) {
      const double x0 = b0[p], x1 = b1[p];
      for (std::size_t r = 0; r < R; ++r) {
        s0[r] += ar[r][p] * x0;
        s1[r] += ar[r][p] * x1;
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      c[(i0 + r) * n + j] += s0[r];
      c[(i0 + r) * n + j + 1] += s1[r];
    }
  }
  for (; j < n; ++j) {
    const double* b0 = b + j * k;
    double s0[R] = {};
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t r = 0; r < R; ++r) s0[r] += ar[r][p] * b0[p];
    for (std::size_t r = 0; r < R; ++r) c[(i0 + r) * n + j] += s0[r];
  }
}

// Rows [p0, p0 + R) of C += A^T * B, A being m x k.
template <std::size_t R>
inline void gemm_tn_block(const double* a, const double* b, double* c, std::size_t p0, std::size_t m, std::size_t k,
                          std::size_t n) {
  double* cr[R];
  for (std::size_t r = 0; r < R; ++r) cr[r] = c + (p0 + r) * n;
  for (std::size_t i = 0; i < m; ++i) {
    double av[R];
    bool any = false;
    for (std::size_t r = 0; r < R; ++r) any |= (av[r] = a[i * k + p0 + r]) != 0.0;
    if (!any) continue;
    const double* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double bv = b_row[j];
      for (std::size_t r = 0; r < R; ++r) cr[r][j] += av[r] * bv;
    }
  }
}

// Dispatches block `blk` of `rows` to the full-width or remainder kernel.
template <template <std::size_t> class K, typename... Args>
inline void run_block(std::size_t blk, std::size_t rows, Args... args) {
  const std::size_t r0 = blk * kBlock;
  switch (std::min(kBlock, rows - r0)) {
    case 4: K<4>::run(r0, args...); break;
    case 3: K<3>::run(r0, args...); break;
    case 2: K<2>::run(r0, args...); break;
    default: K<1>::run(r0, args...); break;
  }
}

template <std::size_t R>
struct GemmK {
  static void run(std::size_t i0, const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
    gemm_block<R>(a, b, c, i0, k, n);
  }
};
template <std::size_t R>
struct GemmNtK {
  static void run(std::size_t i0, const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
    gemm_nt_block<R>(a, b, c, i0, k, n);
  }
};
template <std::size_t R>
struct GemmTnK {
  static void run(std::size_t p0, const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
    gemm_tn_block<R>(a, b, c, p0, m, k, n);
  }
};

inline void node_mix_frame(const double* mix, const double* x, double* out, std::size_t out_nodes,
                           std::size_t in_nodes, std::size_t channels) {
  for (std::size_t i = 0; i < out_nodes; ++i) {
    double* o = out + i * channels;
    for (std::size_t j = 0; j < in_nodes; ++j) {
      const double w = mix[i * in_nodes + j];
      if (w == 0.0) continue;
      const double* xr = x + j * channels;
      for (std::size_t c = 0; c < channels; ++c) o[c] += w * xr[c];
    }
  }
}

inline void node_mix_input_grad_frame(const double* mix, const double* g, double* xg, std::size_t out_nodes,
                                      std::size_t in_nodes, std::size_t channels) {
  for (std::size_t j = 0; j < in_nodes; ++j) {
    double* xr = xg + j * channels;
    for (std::size_t i = 0; i < out_nodes; ++i) {
      const double w = mix[i * in_nodes + j];
      if (w == 0.0) continue;
      const double* gr = g + i * channels;
      for (std::size_t c = 0; c < channels; ++c) xr[c] += w * gr[c];
    }
  }
}

inline void node_mix_weight_grad_row(const double* g, const double* x, double* mg_row, std::size_t i,
                                     std::size_t out_nodes, std::size_t in_nodes, std::size_t frames,
                                     std::size_t channels) {
  for (std::size_t t = 0; t < frames; ++t) {
    const double* gr = g + (t * out_nodes + i) * channels;
    const double* xb = x + t * in_nodes * channels;
    for (std::size_t j = 0; j < in_nodes; ++j) {
      const double* xr = xb + j * channels;
      double s = 0.0;
      for (std::size_t c = 0; c < channels; ++c) s += gr[c] * xr[c];
      mg_row[j] += s;
    }
  }
}

}  // namespace

void set_force_serial(bool on) { g_force_serial.store(on, std::memory_order_relaxed); }
bool force_serial() { return g_force_serial.load(std::memory_order_relaxed); }

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t blk = 0; blk < block_count(m); ++blk) run_block<GemmK>(blk, m, a, b, c, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t blk = 0; blk < block_count(m); ++blk) run_block<GemmNtK>(blk, m, a, b, c, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t blk = 0; blk < block_count(k); ++blk) run_block<GemmTnK>(blk, k, a, b, c, m, k, n);
}

void node_mix(const double* mix, const double* x, double* out, std::size_t out_nodes, std::size_t in_nodes,
              std::size_t frames, std::size_t channels) {
  for (std::size_t t = 0; t < frames; ++t)
    node_mix_frame(mix, x + t * in_nodes * channels, out + t * out_nodes * channels, out_nodes, in_nodes,
                   channels);
}

void node_mix_input_grad(const double* mix, const double* out_grad, double* x_grad, std::size_t out_nodes,
                         std::size_t in_nodes, std::size_t frames, std::size_t channels) {
  for (std::size_t t = 0; t < frames; ++t)
    node_mix_input_grad_frame(mix, out_grad + t * out_nodes * channels, x_grad + t * in_nodes * channels,
                              out_nodes, in_nodes, channels);
}

void node_mix_weight_grad(const double* out_grad, const double* x, double* mix_grad, std::size_t out_nodes,
                          std::size_t in_nodes, std::size_t frames, std::size_t channels) {
  for (std::size_t i = 0; i < out_nodes; ++i)
    node_mix_weight_grad_row(out_grad, x, mix_grad + i * in_nodes, i, out_nodes, in_nodes, frames, channels);
}

}  // namespace serial

namespace parallel {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto blocks = static_cast<std::int64_t>(block_count(m));
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < blocks; ++blk) run_block<GemmK>(static_cast<std::size_t>(blk), m, a, b, c, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto blocks = static_cast<std::int64_t>(block_count(m));
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < blocks; ++blk) run_block<GemmNtK>(static_cast<std::size_t>(blk), m, a, b, c, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto blocks = static_cast<std::int64_t>(block_count(k));
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < blocks; ++blk)
    run_block<GemmTnK>(static_cast<std::size_t>(blk), k, a, b, c, m, k, n);
}

void node_mix(const double* mix, const double* x, double* out, std::size_t out_nodes, std::size_t in_nodes,
              std::size_t frames, std::size_t channels) {
  const auto nf = static_cast<std::int64_t>(frames);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < nf; ++t)
    node_mix_frame(mix, x + t * in_nodes * channels, out + t * out_nodes * channels, out_nodes, in_nodes,
                   channels);
}

void node_mix_input_grad(const double* mix, const double* out_grad, double* x_grad, std::size_t out_nodes,
                         std::size_t in_nodes, std::size_t frames, std::size_t channels) {
  const auto nf = static_cast<std::int64_t>(frames);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < nf; ++t)
    node_mix_input_grad_frame(mix, out_grad + t * out_nodes * channels, x_grad + t * in_nodes * channels,
                              out_nodes, in_nodes, channels);
}

void node_mix_weight_grad(const double* out_grad, const double* x, double* mix_grad, std::size_t out_nodes,
                          std::size_t in_nodes, std::size_t frames, std::size_t channels) {
  const auto rows = static_cast<std::int64_t>(out_nodes);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i)
    node_mix_weight_grad_row(out_grad, x, mix_grad + i * in_nodes, static_cast<std::size_t>(i), out_nodes,
                             in_nodes, frames, channels);
}

}  // namespace parallel

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) parallel::gemm(a, b, c, m, k, n);
  else serial::gemm(a, b, c, m, k, n);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) parallel::gemm_nt(a, b, c, m, k, n);
  else serial::gemm_nt(a, b, c, m, k, n);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m * k * n)) parallel::gemm_tn(a, b, c, m, k, n);
  else serial::gemm_tn(a, b, c, m, k, n);
}

void node_mix(const double* mix, const double* x, double* out, std::size_t out_nodes, std::size_t in_nodes,
              std::size_t frames, std::size_t channels) {
  if (use_parallel(out_nodes * in_nodes * frames * channels))
    parallel::node_mix(mix, x, out, out_nodes, in_nodes, frames, channels);
  else
    serial::node_mix(mix, x, out, out_nodes, in_nodes, frames, channels);
}

void node_mix_input_grad(const double* mix, const double* out_grad, double* x_grad, std::size_t out_nodes,
                         std::size_t in_nodes, std::size_t frames, std::size_t channels) {
  if (use_parallel(out_nodes * in_nodes * frames * channels))
    parallel::node_mix_input_grad(mix, out_grad, x_grad, out_nodes, in_nodes, frames, channels);
  else
    serial::node_mix_input_grad(mix, out_grad, x_grad, out_nodes, in_nodes, frames, channels);
}

void node_mix_weight_grad(const double* out_grad, const double* x, double* mix_grad, std::size_t out_nodes,
                          std::size_t in_nodes, std::size_t frames, std::size_t channels) {
  if (use_parallel(out_nodes * in_nodes * frames * channels))
    parallel::node_mix_weight_grad(out_grad, x, mix_grad, out_nodes, in_nodes, frames, channels);
  else
    serial::node_mix_weight_grad(out_grad, x, mix_grad, out_nodes, in_nodes, frames, channels);
}

}  // namespace stpgn::kernels
