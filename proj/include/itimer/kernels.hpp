#pragma once

#include <cstddef>

#include "itimer/matrix.hpp"

// Dense matrix-product kernels. `serial` is the reference; `parallel` splits
// output rows across OpenMP threads while keeping each output entry's
// accumulation order identical, so both paths agree bitwise.
namespace itimer::kernels {

namespace serial {
// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b^T
void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace serial

namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace parallel

bool openmp_enabled();
int max_threads();

// Multiply-add count above which the dispatchers use the parallel path.
inline constexpr std::size_t kParallelThreshold = 1 << 16;

// Dispatchers used by the autodiff engine.
Matrix matmul(const Matrix& a, const Matrix& b);
void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out);

}  // namespace itimer::kernels
