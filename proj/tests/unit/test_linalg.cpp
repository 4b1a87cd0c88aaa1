#include "helpers.hpp"

#include "smile/linalg.hpp"

#include <cmath>
#include <limits>

using namespace smile;

namespace {

double orthonormality_error(const DenseMatrix& q) {
    return max_abs_diff(matmul_tn(q, q), DenseMatrix::identity(q.cols()));
}

void check_factors(const DenseMatrix& a, const SvdFactors& f) {
    for (std::size_t i = 0; i + 1 < f.sigma.dim(); ++i) CHECK(f.sigma[i] >= f.sigma[i + 1]);
    for (double s : f.sigma.values()) CHECK(s >= 0.0);
    CHECK(orthonormality_error(f.U) < 1e-8);
    CHECK(orthonormality_error(f.V) < 1e-8);
    const std::size_t k = std::min({f.U.cols(), f.V.cols(), f.sigma.dim()});
    const DenseMatrix rec = reconstruct(column_slice(f.U, 0, k), DenseVector(std::vector<double>(f.sigma.values().begin(), f.sigma.values().begin() + k)), column_slice(f.V, 0, k));
    CHECK(frobenius_norm(sub(rec, a)) <= 1e-6 * std::max(1.0, frobenius_norm(a)));
}

} // namespace

TEST_CASE("svd of a diagonal matrix") {
    const auto f = svd(DenseMatrix{{3, 0}, {0, 2}});
    CHECK(f.rank == 2);
    CHECK(f.sigma == DenseVector{3, 2});
    CHECK(f.U == DenseMatrix::identity(2));
    CHECK(f.V == DenseMatrix::identity(2));
}

TEST_CASE("svd of the 2x2 swap matrix") {
    const DenseMatrix a{{0, 1}, {1, 0}};
    const auto f = svd(a);
    CHECK(f.sigma[0] == doctest::Approx(1.0));
    CHECK(f.sigma[1] == doctest::Approx(1.0));
    CHECK(max_abs_diff(reconstruct(f.U, f.sigma, f.V), a) < 1e-10);
}

TEST_CASE("svd of a scaled rank-one matrix") {
    Rng rng(11);
    const auto a = scale(outer(random_unit_vector(6, rng), random_unit_vector(5, rng)), 7.0);
    const auto f = svd(a);
    CHECK(f.rank == 1);
    CHECK(f.sigma[0] == doctest::Approx(7.0).epsilon(1e-12));
    const auto full = svd(a, SvdMode::Full);
    CHECK(full.U.cols() == 6);
    CHECK(full.V.cols() == 5);
    CHECK(full.sigma[1] < 1e-12);
    check_factors(a, full);
}

TEST_CASE("svd factor invariants on random shapes") {
    Rng rng(12);
    for (auto [m, n] : {std::pair{8, 6}, {6, 8}, {1, 5}, {5, 1}, {7, 7}}) {
        const auto a = gaussian_matrix(m, n, rng);
        check_factors(a, svd(a, SvdMode::Full));
        check_factors(a, svd(a, SvdMode::Reduced));
    }
}

TEST_CASE("sign convention: largest entry of each left vector is positive") {
    Rng rng(13);
    const auto f = svd(gaussian_matrix(7, 5, rng), SvdMode::Full);
    for (std::size_t j = 0; j < f.U.cols(); ++j) {
        const DenseVector u = f.U.column(j);
        std::size_t best = 0;
        for (std::size_t i = 1; i < u.dim(); ++i)
            if (std::abs(u[i]) > std::abs(u[best])) best = i;
        CHECK(u[best] > 0.0);
    }
}

TEST_CASE("svd of the transpose has the same singular values") {
    Rng rng(14);
    const auto a = gaussian_matrix(8, 5, rng);
    const auto f = svd(a), g = svd(transpose(a));
    REQUIRE(f.sigma.dim() == g.sigma.dim());
    CHECK(max_abs_diff(f.sigma, g.sigma) < 1e-9);
}

TEST_CASE("svd is deterministic") {
    Rng rng(15);
    const auto a = gaussian_matrix(9, 7, rng);
    const auto f = svd(a, SvdMode::Full), g = svd(a, SvdMode::Full);
    CHECK(f.U == g.U);
    CHECK(f.V == g.V);
    CHECK(f.sigma == g.sigma);
}

TEST_CASE("svd errors") {
    CHECK_THROWS_KIND(svd(DenseMatrix{{1, std::numeric_limits<double>::infinity()}}), ErrorKind::Domain);
    SvdOptions tight;
    tight.max_sweeps = 1;
    Rng rng(16);
    CHECK_THROWS_KIND(svd(gaussian_matrix(12, 12, rng), SvdMode::Reduced, tight), ErrorKind::Numeric);
}

TEST_CASE("zero matrix has rank zero") {
    const auto f = svd(DenseMatrix(3, 2));
    CHECK(f.rank == 0);
    CHECK(f.U.cols() == 0);
    const auto full = svd(DenseMatrix(3, 2), SvdMode::Full);
    CHECK(orthonormality_error(full.U) < 1e-12);
    CHECK(orthonormality_error(full.V) < 1e-12);
}

TEST_CASE("rank threshold formula") {
    CHECK(rank_threshold(8, 6, 2.0) == 8 * 2.0 * std::ldexp(1.0, -52) * 16);
}

TEST_CASE("truncate diag(3,2,1) at k=2") {
    const DenseMatrix a = DenseMatrix::diagonal(DenseVector{3, 2, 1});
    const auto t = truncate(svd(a), 2);
    const DenseMatrix best = reconstruct(t);
    CHECK(max_abs_diff(best, DenseMatrix::diagonal(DenseVector{3, 2, 0})) < 1e-12);
    const double err = frobenius_norm(sub(best, a));
    CHECK(err == doctest::Approx(1.0));
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
        const auto cand = matmul(gaussian_matrix(3, 2, rng), gaussian_matrix(2, 3, rng));
        CHECK(frobenius_norm(sub(cand, a)) >= err - 1e-12);
    }
}

TEST_CASE("truncate clamps and rejects k=0") {
    Rng rng(18);
    const auto r1 = outer(random_unit_vector(4, rng), random_unit_vector(3, rng));
    const auto f = svd(r1);
    CHECK(frobenius_norm(sub(reconstruct(truncate(f, 1)), r1)) < 1e-12);
    const auto a = gaussian_matrix(5, 4, rng);
    const auto g = svd(a);
    CHECK(truncate(g, 10).rank() == g.rank);
    CHECK(max_abs_diff(reconstruct(truncate(g, 10)), reconstruct(g.U, g.sigma, g.V)) == 0.0);
    CHECK_THROWS_KIND(truncate(g, 0), ErrorKind::Argument);
}

TEST_CASE("least squares") {
    CHECK(least_squares(DenseMatrix::identity(2), DenseVector{1, 0}) == DenseVector{1, 0});
    const auto l = least_squares(DenseMatrix{{1}, {1}}, DenseVector{1, 3});
    CHECK(l[0] == doctest::Approx(2.0));
    Rng rng(19);
    const auto q = random_orthonormal(6, 3, rng);
    const DenseVector coef{0.5, -2.0, 1.5};
    const DenseVector y = matvec(q, coef);
    const auto sol = least_squares(q, y);
    CHECK(l2_norm(sub(matvec(q, sol), y)) < 1e-12);
    CHECK_THROWS_KIND(least_squares(DenseMatrix{{1, 1}, {1, 1}, {2, 2}}, DenseVector{1, 2, 3}), ErrorKind::RankDeficient);
    CHECK_THROWS_KIND(least_squares(DenseMatrix(1, 2, 1.0), DenseVector{1}), ErrorKind::Argument);
}

TEST_CASE("orthonormal basis check") {
    const std::vector<DenseVector> e{{1, 0}, {0, 1}};
    const auto exact = check_orthonormal_basis(e, e);
    CHECK(exact.gram == DenseMatrix::identity(4));
    CHECK(exact.max_deviation == 0.0);

    Rng rng(20);
    const auto u = random_orthonormal(5, 3, rng), v = random_orthonormal(6, 4, rng);
    std::vector<DenseVector> us, vs;
    for (std::size_t i = 0; i < 3; ++i) us.push_back(u.column(i));
    for (std::size_t i = 0; i < 4; ++i) vs.push_back(v.column(i));
    const auto rep = check_orthonormal_basis(us, vs);
    CHECK(rep.gram.rows() == 12);
    CHECK(rep.max_deviation < 1e-10);

    const std::vector<DenseVector> dup{{1, 0}, {1, 0}};
    const auto bad = check_orthonormal_basis(dup, e);
    CHECK(bad.max_deviation == doctest::Approx(1.0));
    CHECK(bad.gram(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("thin qr") {
    Rng rng(21);
    const auto a = gaussian_matrix(7, 4, rng);
    const auto qr = thin_qr(a);
    CHECK(orthonormality_error(qr.Q) < 1e-12);
    CHECK(max_abs_diff(matmul(qr.Q, qr.R), a) < 1e-12);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < i; ++j) CHECK(qr.R(i, j) == 0.0);
}

TEST_CASE("svd of a product matches svd of the formed matrix") {
    Rng rng(22);
    const auto b = gaussian_matrix(9, 3, rng), a = gaussian_matrix(3, 7, rng);
    const auto f = svd_of_product(b, a);
    const auto g = svd(matmul(b, a));
    CHECK(f.rank == 3);
    CHECK(max_abs_diff(f.sigma, g.sigma) < 1e-10);
    CHECK(max_abs_diff(reconstruct(f.U, f.sigma, f.V), matmul(b, a)) < 1e-10);
}
