#include "sadcbo/quasirandom.hpp"

#include <bit>
#include <stdexcept>

#include "sadcbo/rng.hpp"

namespace sadcbo {
namespace {

struct PolyEntry {
  std::uint32_t poly;                 // primitive polynomial, all bits
  std::vector<std::uint32_t> m;       // initial direction integers m_1..m_s
};

// Joe-Kuo direction numbers for dimensions 2..48 (dimension 1 is the plain
// van der Corput sequence in base 2, handled separately).
const std::vector<PolyEntry>& poly_table() {
  static const std::vector<PolyEntry> table = {
      {3u, {1u}},
      {7u, {1u, 3u}},
      {11u, {1u, 3u, 1u}},
      {13u, {1u, 1u, 1u}},
      {19u, {1u, 1u, 3u, 3u}},
      {25u, {1u, 3u, 5u, 13u}},
      {37u, {1u, 1u, 5u, 5u, 17u}},
      {41u, {1u, 1u, 5u, 5u, 5u}},
      {47u, {1u, 1u, 7u, 11u, 19u}},
      {55u, {1u, 1u, 5u, 1u, 1u}},
      {59u, {1u, 1u, 1u, 3u, 11u}},
      {61u, {1u, 3u, 5u, 5u, 31u}},
      {67u, {1u, 3u, 3u, 9u, 7u, 49u}},
      {91u, {1u, 1u, 1u, 15u, 21u, 21u}},
      {97u, {1u, 3u, 1u, 13u, 27u, 49u}},
      {103u, {1u, 1u, 1u, 15u, 7u, 5u}},
      {109u, {1u, 3u, 1u, 15u, 13u, 25u}},
      {115u, {1u, 1u, 5u, 5u, 19u, 61u}},
      {131u, {1u, 3u, 7u, 11u, 23u, 15u, 103u}},
      {137u, {1u, 3u, 7u, 13u, 13u, 15u, 69u}},
      {143u, {1u, 1u, 3u, 13u, 7u, 35u, 63u}},
      {145u, {1u, 3u, 5u, 9u, 1u, 25u, 53u}},
      {157u, {1u, 3u, 1u, 13u, 9u, 35u, 107u}},
      {167u, {1u, 3u, 1u, 5u, 27u, 61u, 31u}},
      {171u, {1u, 1u, 5u, 11u, 19u, 41u, 61u}},
      {185u, {1u, 3u, 5u, 3u, 3u, 13u, 69u}},
      {191u, {1u, 1u, 7u, 13u, 1u, 19u, 1u}},
      {193u, {1u, 3u, 7u, 5u, 13u, 19u, 59u}},
      {203u, {1u, 1u, 3u, 9u, 25u, 29u, 41u}},
      {211u, {1u, 3u, 5u, 13u, 23u, 1u, 55u}},
      {213u, {1u, 3u, 7u, 3u, 13u, 59u, 17u}},
      {229u, {1u, 3u, 1u, 3u, 5u, 53u, 69u}},
      {239u, {1u, 1u, 5u, 5u, 23u, 33u, 13u}},
      {241u, {1u, 1u, 7u, 7u, 1u, 61u, 123u}},
      {247u, {1u, 1u, 7u, 9u, 13u, 61u, 49u}},
      {253u, {1u, 3u, 3u, 5u, 3u, 55u, 33u}},
      {285u, {1u, 3u, 1u, 15u, 31u, 13u, 49u, 245u}},
      {299u, {1u, 3u, 5u, 15u, 31u, 59u, 63u, 97u}},
      {301u, {1u, 3u, 1u, 11u, 11u, 11u, 77u, 249u}},
      {333u, {1u, 3u, 1u, 11u, 27u, 43u, 71u, 9u}},
      {351u, {1u, 1u, 7u, 15u, 21u, 11u, 81u, 45u}},
      {355u, {1u, 3u, 7u, 3u, 25u, 31u, 65u, 79u}},
      {357u, {1u, 3u, 1u, 1u, 19u, 11u, 3u, 205u}},
      {361u, {1u, 1u, 5u, 9u, 19u, 21u, 29u, 157u}},
      {369u, {1u, 3u, 7u, 11u, 1u, 33u, 89u, 185u}},
      {391u, {1u, 3u, 3u, 3u, 15u, 9u, 79u, 71u}},
      {397u, {1u, 3u, 7u, 11u, 15u, 39u, 119u, 27u}},
  };
  return table;
}

std::array<std::uint32_t, 32> build_directions(int dim_index) {
  std::array<std::uint32_t, 32> v{};
  if (dim_index == 0) {
    for (int k = 0; k < 32; ++k) v[k] = 1u << (31 - k);
    return v;
  }
  const PolyEntry& entry = poly_table().at(static_cast<std::size_t>(dim_index - 1));
  const int degree = std::bit_width(entry.poly) - 1;
  for (int k = 0; k < degree; ++k) v[k] = entry.m[k] << (31 - k);
  for (int k = degree; k < 32; ++k) {
    std::uint32_t value = v[k - degree] ^ (v[k - degree] >> degree);
    for (int i = 1; i < degree; ++i) {
      if ((entry.poly >> (degree - i)) & 1u) value ^= v[k - i];
    }
    v[k] = value;
  }
  return v;
}

}  // namespace

SobolSequence::SobolSequence(int dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension < 1 || dimension > kMaxDimension) {
    throw std::invalid_argument("SobolSequence: dimension out of range");
  }
  directions_.reserve(static_cast<std::size_t>(dimension));
  for (int d = 0; d < dimension; ++d) directions_.push_back(build_directions(d));
  shift_.assign(static_cast<std::size_t>(dimension), 0u);
  if (seed != 0) {
    Rng rng(derive_seed(seed, {0x536f626f6cull}));
    for (auto& s : shift_) s = static_cast<std::uint32_t>(rng.next_u64() >> 32);
  }
  reset();
}

void SobolSequence::reset() {
  index_ = 0;
  state_.assign(static_cast<std::size_t>(dimension_), 0u);
}

Eigen::VectorXd SobolSequence::next() {
  Eigen::VectorXd point(dimension_);
  if (index_ > 0) {
    // Gray-code update: flip the direction indexed by the lowest zero bit of
    // the previous index.
    const int bit = std::countr_one(index_ - 1);
    for (int d = 0; d < dimension_; ++d) {
      state_[static_cast<std::size_t>(d)] ^=
          directions_[static_cast<std::size_t>(d)][static_cast<std::size_t>(bit)];
    }
  }
  for (int d = 0; d < dimension_; ++d) {
    const std::uint32_t bits = state_[static_cast<std::size_t>(d)] ^
                               shift_[static_cast<std::size_t>(d)];
    point[d] = static_cast<double>(bits) * 0x1.0p-32;
  }
  ++index_;
  return point;
}

Eigen::MatrixXd SobolSequence::generate(Eigen::Index count) {
  Eigen::MatrixXd points(count, dimension_);
  for (Eigen::Index i = 0; i < count; ++i) points.row(i) = next();
  return points;
}

}  // namespace sadcbo
