#include "itimer/matrix.hpp"

#include <numeric>

#include "itimer/errors.hpp"

namespace itimer {

std::string Shape::str() const {
  return "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : shape_{rows, cols}, data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

double Matrix::item() const {
  if (data_.size() != 1) throw ContractError("item() on non-scalar of shape " + shape_.str());
  return data_[0];
}

std::size_t Mask::count() const {
  return std::accumulate(data_.begin(), data_.end(), std::size_t{0});
}

}  // namespace itimer
