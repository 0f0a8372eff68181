#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace sadcbo {

// Gray-code Sobol' sequence (32-bit direction numbers, Joe-Kuo order-6
// polynomials) with optional seed-derived digital-shift scrambling.
// seed == 0 gives the canonical unscrambled sequence whose first point is the
// origin.
class SobolSequence {
 public:
  static constexpr int kMaxDimension = 48;

  explicit SobolSequence(int dimension, std::uint64_t seed = 0);

  int dimension() const { return dimension_; }

  // Next point of the sequence, in [0, 1)^dimension.
  Eigen::VectorXd next();

  // Next `count` points as rows.
  Eigen::MatrixXd generate(Eigen::Index count);

  void reset();

 private:
  int dimension_;
  std::uint64_t seed_;
  std::uint64_t index_ = 0;                  // points emitted so far
  std::vector<std::uint32_t> state_;         // current integer coordinates
  std::vector<std::uint32_t> shift_;         // digital-shift mask per dim
  std::vector<std::array<std::uint32_t, 32>> directions_;
};

}  // namespace sadcbo
