#include "smile/random.hpp"

#include "smile/linalg.hpp"

#include <cmath>
#include <numbers>

namespace smile {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = stddev * rng.normal();
    return m;
}

DenseVector gaussian_vector(std::size_t dim, Rng& rng, double stddev) {
    DenseVector v(dim);
    for (double& x : v.values()) x = stddev * rng.normal();
    return v;
}

DenseVector random_unit_vector(std::size_t dim, Rng& rng) {
    DenseVector v = gaussian_vector(dim, rng);
    const double n = l2_norm(v);
    return scale(v, 1.0 / n);
}

DenseMatrix random_orthonormal(std::size_t dim, std::size_t count, Rng& rng) {
    return thin_qr(gaussian_matrix(dim, count, rng)).Q;
}

} // namespace smile
