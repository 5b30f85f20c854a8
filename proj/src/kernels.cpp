#include "itimer/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include "itimer/errors.hpp"

namespace itimer::kernels {

namespace {

void check_mm(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    throw ShapeError("matmul shape mismatch: " + a.shape().str() + " x " + b.shape().str() +
                     " -> " + out.shape().str());
  }
}

void check_at_b(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ShapeError("matmul_at_b shape mismatch: " + a.shape().str() + "^T x " +
                     b.shape().str() + " -> " + out.shape().str());
  }
}

void check_a_bt(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    throw ShapeError("matmul_a_bt shape mismatch: " + a.shape().str() + " x " +
                     b.shape().str() + "^T -> " + out.shape().str());
  }
}

// One output row of a * b; the k-then-j order fixes the summation sequence.
inline void mm_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t n = b.cols();
  double* o = out.data().data() + i * out.cols();
  for (std::size_t j = 0; j < n; ++j) o[j] = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = a(i, k);
    const double* brow = b.data().data() + k * b.cols();
    for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
  }
}

// Row i of a^T * b, i.e. column i of a against every column of b.
inline void at_b_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t n = b.cols();
  double* o = out.data().data() + i * out.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double aki = a(k, i);
    const double* brow = b.data().data() + k * b.cols();
    for (std::size_t j = 0; j < n; ++j) o[j] += aki * brow[j];
  }
}

inline void a_bt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t kk = a.cols();
  const double* arow = a.data().data() + i * a.cols();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* brow = b.data().data() + j * b.cols();
    double s = 0.0;
    for (std::size_t k = 0; k < kk; ++k) s += arow[k] * brow[k];
    out(i, j) += s;
  }
}

}  // namespace

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_mm(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i) mm_row(a, b, out, i);
}

void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_at_b(a, b, out);
  for (std::size_t i = 0; i < a.cols(); ++i) at_b_row(a, b, out, i);
}

void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_a_bt(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i) a_bt_row(a, b, out, i);
}

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_mm(a, b, out);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) mm_row(a, b, out, static_cast<std::size_t>(i));
}

void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_at_b(a, b, out);
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) at_b_row(a, b, out, static_cast<std::size_t>(i));
}

void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_a_bt(a, b, out);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) a_bt_row(a, b, out, static_cast<std::size_t>(i));
}

}  // namespace parallel

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
bool use_parallel(std::size_t work) {
  return openmp_enabled() && max_threads() > 1 && work >= kParallelThreshold;
}
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  if (use_parallel(a.rows() * a.cols() * b.cols())) {
    parallel::matmul(a, b, out);
  } else {
    serial::matmul(a, b, out);
  }
  return out;
}

void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (use_parallel(a.rows() * a.cols() * b.cols())) {
    parallel::matmul_at_b_acc(a, b, out);
  } else {
    serial::matmul_at_b_acc(a, b, out);
  }
}

void matmul_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (use_parallel(a.rows() * a.cols() * b.rows())) {
    parallel::matmul_a_bt_acc(a, b, out);
  } else {
    serial::matmul_a_bt_acc(a, b, out);
  }
}

}  // namespace itimer::kernels
