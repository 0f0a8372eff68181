#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace sadcbo {

// Evaluated design/context points. Rows of X live in the unit cube with the
// first design_dim columns holding design coordinates and the remaining
// context_dim columns the context coordinates; y holds scaled outputs.
struct Dataset {
  int design_dim = 0;
  int context_dim = 0;
  Eigen::MatrixXd X;  // n x (design_dim + context_dim)
  Eigen::VectorXd y;  // n

  Dataset() = default;
  Dataset(int d, int c) : design_dim(d), context_dim(c), X(0, d + c), y(0) {}

  Eigen::Index size() const { return X.rows(); }
  int width() const { return design_dim + context_dim; }

  void append(const Eigen::VectorXd& point, double value) {
    if (point.size() != width()) {
      throw std::invalid_argument("Dataset::append: point width mismatch");
    }
    X.conservativeResize(X.rows() + 1, width());
    X.row(X.rows() - 1) = point.transpose();
    y.conservativeResize(y.size() + 1);
    y[y.size() - 1] = value;
  }

  double best_value() const {
    if (y.size() == 0) throw std::runtime_error("Dataset: empty");
    return y.maxCoeff();
  }

  Eigen::Index best_index() const {
    if (y.size() == 0) throw std::runtime_error("Dataset: empty");
    Eigen::Index idx = 0;
    y.maxCoeff(&idx);
    return idx;
  }
};

// Bitmask encoding of a selected-context index set, used in trial logs.
inline std::uint64_t context_mask(const std::vector<int>& selected) {
  std::uint64_t mask = 0;
  for (int j : selected) {
    if (j < 0 || j >= 64) throw std::invalid_argument("context_mask: index out of range");
    mask |= (1ull << j);
  }
  return mask;
}

inline std::vector<int> mask_to_indices(std::uint64_t mask) {
  std::vector<int> out;
  for (int j = 0; j < 64; ++j) {
    if (mask & (1ull << j)) out.push_back(j);
  }
  return out;
}

}  // namespace sadcbo
