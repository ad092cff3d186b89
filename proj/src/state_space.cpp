#include "dmpm/state_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dmpm {

BitState::BitState(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_) require(b <= 1, "BitState entries must be 0 or 1");
}

BitState BitState::from_string(const std::string& s) {
  std::vector<std::uint8_t> bits;
  bits.reserve(s.size());
  for (char c : s) {
    if (c != '0' && c != '1') fail(ErrorCode::kArgument, "invalid character in bit string: '" + s + "'");
    bits.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  require(!bits.empty(), "empty bit string");
  return BitState(std::move(bits));
}

BitState BitState::from_index(std::uint64_t index, std::size_t d) {
  require(d <= 64, "from_index supports d <= 64");
  BitState x(d);
  for (std::size_t i = 0; i < d; ++i) x.bits_[i] = static_cast<std::uint8_t>((index >> i) & 1U);
  return x;
}

std::uint64_t BitState::to_index() const {
  require(bits_.size() <= 64, "to_index supports d <= 64");
  std::uint64_t idx = 0;
  for (std::size_t i = 0; i < bits_.size(); ++i) idx |= static_cast<std::uint64_t>(bits_[i]) << i;
  return idx;
}

std::string BitState::to_string() const {
  std::string s(bits_.size(), '0');
  for (std::size_t i = 0; i < bits_.size(); ++i) s[i] = bits_[i] ? '1' : '0';
  return s;
}

BitState flip(const BitState& x, std::size_t coord) {
  if (coord >= x.dim()) {
    fail(ErrorCode::kArgument,
         "flip coordinate " + std::to_string(coord) + " out of range for d=" + std::to_string(x.dim()));
  }
  BitState y = x;
  y.toggle(coord);
  return y;
}

std::size_t hamming(const BitState& a, const BitState& b) {
  if (a.dim() != b.dim()) fail(ErrorCode::kDimensionMismatch, "hamming: dimension mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) n += a[i] != b[i];
  return n;
}

ProductBernoulli::ProductBernoulli(std::vector<double> probs) : probs_(std::move(probs)) {
  require(!probs_.empty(), "ProductBernoulli needs d >= 1");
  for (double p : probs_) {
    if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::kArgument, "ProductBernoulli probabilities must lie in (0,1)");
  }
}

void check_enumerable(std::size_t d) {
  if (d == 0) fail(ErrorCode::kArgument, "dimension must be positive");
  if (d > static_cast<std::size_t>(kEnumerationLimit)) {
    fail(ErrorCode::kEnumerationLimit, "d=" + std::to_string(d) + " exceeds the enumeration limit of " +
                                           std::to_string(kEnumerationLimit));
  }
}

DenseTable::DenseTable(std::size_t d, std::vector<double> mass) : d_(d), mass_(std::move(mass)) {
  check_enumerable(d);
  if (mass_.size() != (std::size_t{1} << d)) {
    fail(ErrorCode::kDimensionMismatch, "DenseTable needs 2^d masses");
  }
  double total = 0.0;
  for (double m : mass_) {
    if (!(m >= 0.0) || !std::isfinite(m)) fail(ErrorCode::kArgument, "DenseTable masses must be finite and >= 0");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    fail(ErrorCode::kArgument, "DenseTable masses sum to " + std::to_string(total) + ", expected 1");
  }
}

DenseTable DenseTable::normalized(std::size_t d, std::vector<double> mass) {
  double total = 0.0;
  for (double m : mass) {
    if (!(m >= 0.0) || !std::isfinite(m)) fail(ErrorCode::kArgument, "masses must be finite and >= 0");
    total += m;
  }
  if (!(total > 0.0)) fail(ErrorCode::kArgument, "masses sum to zero");
  for (double& m : mass) m /= total;
  return DenseTable(d, std::move(mass));
}

DenseTable DenseTable::uniform(std::size_t d) {
  check_enumerable(d);
  const std::size_t n = std::size_t{1} << d;
  return DenseTable(d, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DenseTable DenseTable::point_mass(const BitState& x) {
  check_enumerable(x.dim());
  std::vector<double> mass(std::size_t{1} << x.dim(), 0.0);
  mass[x.to_index()] = 1.0;
  return DenseTable(x.dim(), std::move(mass));
}

double DenseTable::at(const BitState& x) const {
  if (x.dim() != d_) fail(ErrorCode::kDimensionMismatch, "DenseTable: dimension mismatch");
  return mass_[x.to_index()];
}

EmpiricalSet::EmpiricalSet(std::vector<BitState> samples) : samples_(std::move(samples)) {
  require(!samples_.empty(), "EmpiricalSet must be nonempty");
  const std::size_t d = samples_.front().dim();
  require(d > 0, "EmpiricalSet states must have d >= 1");
  for (const auto& s : samples_) {
    if (s.dim() != d) fail(ErrorCode::kDimensionMismatch, "EmpiricalSet states must share one dimension");
  }
}

DenseTable EmpiricalSet::histogram() const {
  check_enumerable(dim());
  std::vector<double> counts(std::size_t{1} << dim(), 0.0);
  for (const auto& s : samples_) counts[s.to_index()] += 1.0;
  return DenseTable::normalized(dim(), std::move(counts));
}

std::size_t dim(const Distribution& dist) {
  return std::visit([](const auto& d) { return d.dim(); }, dist);
}

ProductBernoulli sawtooth_params(std::size_t d) {
  require(d >= 2, "sawtooth needs d >= 2");
  constexpr double lo = 0.05;
  constexpr double hi = 0.95;
  const std::size_t peak = d / 2;
  const std::size_t fall = d - 1 - peak;
  std::vector<double> p(d);
  for (std::size_t i = 0; i <= peak; ++i) {
    p[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(peak);
  }
  for (std::size_t i = peak + 1; i < d; ++i) {
    p[i] = hi - (hi - lo) * static_cast<double>(i - peak) / static_cast<double>(fall);
  }
  return ProductBernoulli(std::move(p));
}

double prob(const ProductBernoulli& dist, const BitState& x) {
  if (x.dim() != dist.dim()) fail(ErrorCode::kDimensionMismatch, "prob: dimension mismatch");
  double p = 1.0;
  for (std::size_t i = 0; i < x.dim(); ++i) p *= x[i] ? dist.probs()[i] : 1.0 - dist.probs()[i];
  return p;
}

double prob(const DenseTable& dist, const BitState& x) { return dist.at(x); }

double prob(const Distribution& dist, const BitState& x) {
  return std::visit([&](const auto& d) { return prob(d, x); }, dist);
}

DenseTable to_table(const Distribution& dist) {
  if (const auto* t = std::get_if<DenseTable>(&dist)) return *t;
  const auto& pb = std::get<ProductBernoulli>(dist);
  const std::size_t d = pb.dim();
  check_enumerable(d);
  // Build by doubling: table over the first i coordinates, then split on coordinate i.
  std::vector<double> mass{1.0};
  mass.reserve(std::size_t{1} << d);
  for (std::size_t i = 0; i < d; ++i) {
    const double p1 = pb.probs()[i];
    const std::size_t half = mass.size();
    mass.resize(2 * half);
    for (std::size_t j = 0; j < half; ++j) {
      mass[half + j] = mass[j] * p1;
      mass[j] *= 1.0 - p1;
    }
  }
  double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= total;
  return DenseTable(d, std::move(mass));
}

BitState uniform_state(std::size_t d, Rng& rng) {
  BitState x(d);
  for (std::size_t i = 0; i < d; ++i) x.set(i, rng.bernoulli(0.5));
  return x;
}

namespace {

BitState sample_table(const DenseTable& t, const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
  if (idx >= t.size()) idx = t.size() - 1;
  // Skip zero-mass states that share a cdf value with their neighbour.
  while (t[idx] == 0.0 && idx > 0) --idx;
  return BitState::from_index(idx, t.dim());
}

std::vector<double> cumulative(const DenseTable& t) {
  std::vector<double> cdf(t.size());
  std::partial_sum(t.mass().begin(), t.mass().end(), cdf.begin());
  return cdf;
}

}  // namespace

BitState sample_one(const Distribution& dist, Rng& rng) {
  if (const auto* pb = std::get_if<ProductBernoulli>(&dist)) {
    BitState x(pb->dim());
    for (std::size_t i = 0; i < pb->dim(); ++i) x.set(i, rng.bernoulli(pb->probs()[i]));
    return x;
  }
  const auto& t = std::get<DenseTable>(dist);
  return sample_table(t, cumulative(t), rng);
}

EmpiricalSet sample(const Distribution& dist, std::size_t n, Rng& rng) {
  require(n >= 1, "sample: n must be >= 1");
  std::vector<BitState> out;
  out.reserve(n);
  if (const auto* t = std::get_if<DenseTable>(&dist)) {
    const auto cdf = cumulative(*t);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_table(*t, cdf, rng));
  } else {
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_one(dist, rng));
  }
  return EmpiricalSet(std::move(out));
}

}  // namespace dmpm
