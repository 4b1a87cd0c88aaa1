#include "helpers.hpp"

#include "smile/linalg.hpp"

#include <cmath>

using namespace smile;

TEST_CASE("matmul small products") {
    const DenseMatrix a{{1, 2}, {3, 4}};
    CHECK(matmul(DenseMatrix::identity(2), a) == a);
    CHECK(matmul(DenseMatrix{{1, 0}, {0, 0}}, DenseMatrix{{0}, {5}}) == DenseMatrix{{0}, {0}});
    CHECK(matmul(a, DenseMatrix{{5}, {6}}) == DenseMatrix{{17}, {39}});
}

TEST_CASE("matmul shape error names both shapes") {
    try {
        (void)matmul(DenseMatrix(2, 3), DenseMatrix(2, 3));
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Shape);
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
    }
}

TEST_CASE("matmul is associative on random 4x4") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const auto a = gaussian_matrix(4, 4, rng), b = gaussian_matrix(4, 4, rng), c = gaussian_matrix(4, 4, rng);
        CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
    }
}

TEST_CASE("matmul_tn and matvec_t agree with explicit transpose") {
    Rng rng(2);
    const auto a = gaussian_matrix(5, 3, rng), b = gaussian_matrix(5, 4, rng);
    CHECK(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)) < 1e-12);
    const auto x = gaussian_vector(5, rng);
    CHECK(max_abs_diff(matvec_t(a, x), matvec(transpose(a), x)) < 1e-12);
}

TEST_CASE("frobenius inner product") {
    CHECK(frobenius_inner(DenseMatrix::identity(2), DenseMatrix::identity(2)) == 2.0);
    CHECK(frobenius_inner(DenseMatrix{{1, 2}, {3, 4}}, DenseMatrix{{1, 1}, {1, 1}}) == 10.0);
    const DenseVector u1{1, 0}, u2{0, 1}, v1{0.6, 0.8};
    CHECK(frobenius_inner(outer(u1, v1), outer(u2, v1)) == 0.0);
    CHECK_THROWS_KIND(frobenius_inner(DenseMatrix(2, 2), DenseMatrix(2, 3)), ErrorKind::Shape);
}

TEST_CASE("frobenius self inner product is the squared norm, zero iff zero") {
    const DenseMatrix a{{1, -2, 3}, {0, 4, -1}};
    CHECK(frobenius_inner(a, a) == 31.0);
    CHECK(frobenius_norm(a) * frobenius_norm(a) == doctest::Approx(31.0));
    CHECK(frobenius_inner(DenseMatrix(2, 3), DenseMatrix(2, 3)) == 0.0);
}

TEST_CASE("l2 norm") {
    CHECK(l2_norm(DenseVector{0, 0, 0}) == 0.0);
    CHECK(l2_norm(DenseVector{3, 4}) == 5.0);
    CHECK(l2_norm(DenseVector{0, 1, 0}) == 1.0);
}

TEST_CASE("outer product has rank one") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto f = svd(outer(random_unit_vector(5, rng), random_unit_vector(4, rng)), SvdMode::Full);
        CHECK(f.sigma[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.sigma[1] < 1e-10);
    }
}

TEST_CASE("plumbing ops") {
    const DenseMatrix a{{1, 2, 3}, {4, 5, 6}};
    CHECK(transpose(a) == DenseMatrix{{1, 4}, {2, 5}, {3, 6}});
    CHECK(add(a, a) == scale(a, 2.0));
    CHECK(sub(a, a) == DenseMatrix(2, 3));
    CHECK(column_slice(a, 1, 3) == DenseMatrix{{2, 3}, {5, 6}});
    CHECK(column_slice(a, 2, 2).cols() == 0);
    CHECK_THROWS_KIND(column_slice(a, 2, 4), ErrorKind::Shape);
    CHECK(a.column(1) == DenseVector{2, 5});
    CHECK(DenseMatrix::diagonal(DenseVector{3, 2}) == DenseMatrix{{3, 0}, {0, 2}});
    CHECK(dot(DenseVector{1, 2}, DenseVector{3, 4}) == 11.0);
    CHECK_THROWS_KIND(add(DenseVector{1}, DenseVector{1, 2}), ErrorKind::Shape);
    CHECK(all_finite(a.values()));
    CHECK_FALSE(all_finite(DenseVector{1.0, std::nan("")}.values()));
}
