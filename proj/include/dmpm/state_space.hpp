#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dmpm/common.hpp"

namespace dmpm {

/// A point of {0,1}^d. Coordinates are 0-based in code.
class BitState {
 public:
  BitState() = default;
  explicit BitState(std::size_t d) : bits_(d, 0) {}
  explicit BitState(std::vector<std::uint8_t> bits);

  /// Parses a 0/1 string such as "0110".
  static BitState from_string(const std::string& s);
  /// Bit i of `index` becomes coordinate i.
  static BitState from_index(std::uint64_t index, std::size_t d);

  std::size_t dim() const { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  void set(std::size_t i, std::uint8_t v) { bits_[i] = v ? 1 : 0; }
  /// In-place flip of coordinate i (unchecked).
  void toggle(std::size_t i) { bits_[i] ^= 1U; }

  std::uint64_t to_index() const;
  std::string to_string() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const BitState&, const BitState&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// phi^(l): x with coordinate `coord` (0-based) inverted.
BitState flip(const BitState& x, std::size_t coord);

std::size_t hamming(const BitState& a, const BitState& b);

/// Independent Bernoulli coordinates, p_i in (0,1) strictly.
class ProductBernoulli {
 public:
  explicit ProductBernoulli(std::vector<double> probs);
  std::size_t dim() const { return probs_.size(); }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Explicit mass table over the 2^d states, indexed by BitState::to_index.
class DenseTable {
 public:
  /// Masses must be nonnegative and sum to 1 within 1e-12.
  DenseTable(std::size_t d, std::vector<double> mass);
  /// Rescales nonnegative masses to sum to 1.
  static DenseTable normalized(std::size_t d, std::vector<double> mass);
  static DenseTable uniform(std::size_t d);
  static DenseTable point_mass(const BitState& x);

  std::size_t dim() const { return d_; }
  std::size_t size() const { return mass_.size(); }
  double operator[](std::size_t idx) const { return mass_[idx]; }
  double at(const BitState& x) const;
  const std::vector<double>& mass() const { return mass_; }

 private:
  std::size_t d_;
  std::vector<double> mass_;
};

/// Sample multiset; all states share one dimension.
class EmpiricalSet {
 public:
  explicit EmpiricalSet(std::vector<BitState> samples);
  std::size_t dim() const { return samples_.front().dim(); }
  std::size_t size() const { return samples_.size(); }
  const std::vector<BitState>& samples() const { return samples_; }
  const BitState& operator[](std::size_t i) const { return samples_[i]; }
  /// Empirical frequencies as a table (requires d <= enumeration limit).
  DenseTable histogram() const;

 private:
  std::vector<BitState> samples_;
};

using Distribution = std::variant<ProductBernoulli, DenseTable>;

std::size_t dim(const Distribution& dist);

/// Throws kEnumerationLimit if 2^d tables are not allowed for d.
void check_enumerable(std::size_t d);

/// Triangle-wave Bernoulli parameters between 0.05 and 0.95 with one peak at floor(d/2).
ProductBernoulli sawtooth_params(std::size_t d);

double prob(const ProductBernoulli& dist, const BitState& x);
double prob(const DenseTable& dist, const BitState& x);
double prob(const Distribution& dist, const BitState& x);

/// Full enumeration of a product law (d <= enumeration limit).
DenseTable to_table(const Distribution& dist);

EmpiricalSet sample(const Distribution& dist, std::size_t n, Rng& rng);
BitState sample_one(const Distribution& dist, Rng& rng);
BitState uniform_state(std::size_t d, Rng& rng);

}  // namespace dmpm
