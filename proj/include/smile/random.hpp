#pragma once

#include "smile/tensor.hpp"

#include <cstdint>
#include <random>

namespace smile {

/// Portable random stream. std::normal_distribution is implementation-defined,
/// so normals come from Box–Muller over the fully specified mt19937_64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double normal();
    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// splitmix64 finalizer over (a, b); used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);
DenseVector gaussian_vector(std::size_t dim, Rng& rng, double stddev = 1.0);
DenseVector random_unit_vector(std::size_t dim, Rng& rng);
/// dim×count matrix with orthonormal columns (QR of a Gaussian matrix).
DenseMatrix random_orthonormal(std::size_t dim, std::size_t count, Rng& rng);

} // namespace smile
