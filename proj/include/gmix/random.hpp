#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "gmix/linalg.hpp"

namespace gmix {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derive an independent stream seed from (root, purpose, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return detail::splitmix64(detail::splitmix64(root ^ h) + detail::splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0) {
  std::seed_seq seq{derive_seed(root, purpose, index)};
  return Rng(seq);
}

inline Vec standard_normal(Rng& rng, Index n) {
  std::normal_distribution<double> nd;
  Vec out(n);
  for (Index i = 0; i < n; ++i) out(i) = nd(rng);
  return out;
}

/// Uniform on the open interval (0, 1).
inline double open_uniform(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0) return u;
  }
}

/// Exponential draws by inverse CDF: w = -log(U) / rate.
inline Vec exponential_sample(const Vec& rates, Rng& rng) {
  Vec out(rates.size());
  for (Index i = 0; i < rates.size(); ++i) out(i) = -std::log(open_uniform(rng)) / rates(i);
  return out;
}

/// n draws stored as columns of a rates.size() x n matrix.
inline Mat exponential_sample(const Vec& rates, Index n, Rng& rng) {
  for (Index i = 0; i < rates.size(); ++i)
    if (!(rates(i) > 0.0)) throw ArgError("exponential rates must be positive");
  Mat out(rates.size(), n);
  for (Index j = 0; j < n; ++j) out.col(j) = exponential_sample(rates, rng);
  return out;
}

}  // namespace gmix
