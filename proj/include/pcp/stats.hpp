#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace pcp {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a master seed and a stream index.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// 64-bit FNV-1a, used for schema and config fingerprints.
std::uint64_t fnv1a(std::string_view bytes);

double normal_cdf(double x);
double normal_quantile(double p);

/// Type-7 empirical quantile (linear interpolation between order statistics).
/// `sorted` must be in ascending order.
double quantile_type7(std::span<const double> sorted, double prob);

double logistic(double x);

/// Worker count used when parallel_for gets threads = 0; 0 restores the
/// default (PCP_THREADS if set, else hardware concurrency).
void set_default_threads(unsigned threads);

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 = default).
/// Each index is processed exactly once; callers write results into per-index
/// slots so the output does not depend on scheduling. Calls made from inside a
/// worker run serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace pcp
