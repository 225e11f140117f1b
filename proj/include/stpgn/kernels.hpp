#pragma once

#include <cstddef>

// Dense inner loops shared by the autodiff engine. Every kernel exists twice:
// `serial` is the straightforward reference and `parallel` splits the same
// per-element arithmetic across OpenMP threads. Each output element is
// accumulated in identical order by both, so results agree bit for bit.
//
// All matrices are row-major. Kernels accumulate into their output (+=).

namespace stpgn::kernels {

namespace serial {

// C[m x n] += A[m x k] * B[k x n]
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

// Per-frame node mixing. x holds `frames` blocks of `in_nodes` rows with
// `channels` columns; out holds `frames` blocks of `out_nodes` rows.
//   out[t, i, :] += sum_j mix[i, j] * x[t, j, :]
void node_mix(const double* mix, const double* x, double* out, std::size_t out_nodes, std::size_t in_nodes,
              std::size_t frames, std::size_t channels);
//   x_grad[t, j, :] += sum_i mix[i, j] * out_grad[t, i, :]
void node_mix_input_grad(const double* mix, const double* out_grad, double* x_grad, std::size_t out_nodes,
                         std::size_t in_nodes, std::size_t frames, std::size_t channels);
//   mix_grad[i, j] += sum_{t, c} out_grad[t, i, c] * x[t, j, c]
void node_mix_weight_grad(const double* out_grad, const double* x, double* mix_grad, std::size_t out_nodes,
                          std::size_t in_nodes, std::size_t frames, std::size_t channels);

}  // namespace serial

namespace parallel {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void node_mix(const double* mix, const double* x, double* out, std::size_t out_nodes, std::size_t in_nodes,
              std::size_t frames, std::size_t channels);
void node_mix_input_grad(const double* mix, const double* out_grad, double* x_grad, std::size_t out_nodes,
                         std::size_t in_nodes, std::size_t frames, std::size_t channels);
void node_mix_weight_grad(const double* out_grad, const double* x, double* mix_grad, std::size_t out_nodes,
                          std::size_t in_nodes, std::size_t frames, std::size_t channels);

}  // namespace parallel

// Dispatchers used by the engine: parallel when the work is large enough and
// the caller is not already inside an OpenMP region, serial otherwise.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void node_mix(const double* mix, const double* x, double* out, std::size_t out_nodes, std::size_t in_nodes,
              std::size_t frames, std::size_t channels);
void node_mix_input_grad(const double* mix, const double* out_grad, double* x_grad, std::size_t out_nodes,
                         std::size_t in_nodes, std::size_t frames, std::size_t channels);
void node_mix_weight_grad(const double* out_grad, const double* x, double* mix_grad, std::size_t out_nodes,
                          std::size_t in_nodes, std::size_t frames, std::size_t channels);

// Forces the dispatchers onto the serial path (used by tests and benchmarks).
void set_force_serial(bool on);
bool force_serial();

}  // namespace stpgn::kernels
