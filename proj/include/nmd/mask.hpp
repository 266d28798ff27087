#ifndef NMD_MASK_HPP_
#define NMD_MASK_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nmd/error.hpp"

namespace nmd {

/// The set of observed entries of an m x n matrix.
class ObservationMask {
 public:
  ObservationMask() = default;

  ObservationMask(std::size_t rows, std::size_t cols, bool observed = true)
      : rows_(rows), cols_(cols), bits_(rows * cols, observed ? 1 : 0) {}

  ObservationMask(std::size_t rows, std::size_t cols,
                  std::vector<std::uint8_t> bits)
      : rows_(rows), cols_(cols), bits_(std::move(bits)) {
    if (bits_.size() != rows_ * cols_) {
      throw ShapeError("ObservationMask: bit count does not match shape");
    }
    for (auto& b : bits_) b = b != 0 ? 1 : 0;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool observed(std::size_t k) const { return bits_[k] != 0; }
  bool observed(std::size_t i, std::size_t j) const {
    return bits_[i * cols_ + j] != 0;
  }
  void set(std::size_t i, std::size_t j, bool value) {
    bits_[i * cols_ + j] = value ? 1 : 0;
  }
  void set(std::size_t k, bool value) { bits_[k] = value ? 1 : 0; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  bool all_observed() const noexcept { return count() == bits_.size(); }

  /// Linear (row-major) indices of observed entries, ascending.
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    out.reserve(count());
    for (std::size_t k = 0; k < bits_.size(); ++k)
      if (bits_[k] != 0) out.push_back(k);
    return out;
  }

  /// Throws unless at least one entry is observed.
  void require_nonempty(const char* what) const {
    if (count() == 0) throw DomainError(std::string(what) + ": empty mask");
  }

  friend bool operator==(const ObservationMask&,
                         const ObservationMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace nmd

#endif  // NMD_MASK_HPP_
