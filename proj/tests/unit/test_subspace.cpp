#include "helpers.hpp"

#include "smile/subspace.hpp"

using namespace smile;

TEST_CASE("zone partition boundary rule") {
    CHECK(zone_partition(DenseVector{4, 3, 2, 1}, 4, 4, 4).r_half == 2);
    CHECK(zone_partition(DenseVector{1}, 1, 1, 1).r_half == 1);
    CHECK(zone_partition(DenseVector{5, 5}, 2, 2, 2).r_half == 1);
    CHECK_THROWS_KIND(zone_partition(DenseVector{0, 0}, 0, 2, 2), ErrorKind::Degenerate);
}

TEST_CASE("zone partition invariants on random spectra") {
    Rng rng(30);
    for (int t = 0; t < 20; ++t) {
        const auto f = svd(gaussian_matrix(9, 7, rng), SvdMode::Full);
        const auto z = zone_partition(f);
        CHECK(z.r == f.rank);
        REQUIRE(z.r_half >= 1);
        CHECK(z.r_half <= z.r);
        double total = 0, head = 0;
        for (std::size_t i = 0; i < z.r; ++i) total += f.sigma[i];
        for (std::size_t i = 0; i + 1 < z.r_half; ++i) head += f.sigma[i];
        CHECK(head < total / 2);
        CHECK(head + f.sigma[z.r_half - 1] >= total / 2);
    }
}

TEST_CASE("projection coefficients") {
    Rng rng(31);
    const auto w = gaussian_matrix(6, 5, rng);
    const auto f = svd(w, SvdMode::Full);
    const auto single = projection_coefficients(scale(outer(f.U.column(0), f.V.column(0)), 2.5), f);
    CHECK(single.delta(0, 0) == doctest::Approx(2.5));
    double off = 0;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            if (i || j) off = std::max(off, std::abs(single.delta(i, j)));
    CHECK(off < 1e-12);

    CHECK(frobenius_norm(projection_coefficients(DenseMatrix(6, 5), f).delta) == 0.0);

    const auto dw = gaussian_matrix(6, 5, rng);
    const auto c = projection_coefficients(dw, f);
    CHECK(frobenius_norm(c.delta) == doctest::Approx(frobenius_norm(dw)).epsilon(1e-9));
    CHECK(max_abs_diff(matmul(matmul(f.U, c.delta), transpose(f.V)), dw) < 1e-9);

    CHECK_THROWS_KIND(projection_coefficients(dw, svd(w)), ErrorKind::Argument);
    CHECK_THROWS_KIND(projection_coefficients(DenseMatrix(5, 5), f), ErrorKind::Shape);
}

TEST_CASE("project zone on constructed deltas") {
    Rng rng(32);
    const auto w = gaussian_matrix(6, 6, rng);
    const auto f = svd(w, SvdMode::Full);
    const auto dw = outer(f.U.column(0), f.V.column(0));
    CHECK(max_abs_diff(project_zone(w, dw, f, Zone::I).weight, add(w, dw)) < 1e-12);
    CHECK(max_abs_diff(project_zone(w, dw, f, Zone::IIAndIII).weight, w) < 1e-12);
    for (Zone z : {Zone::I, Zone::II, Zone::IIAndIII})
        CHECK(project_zone(w, DenseMatrix(6, 6), f, z).weight == w);
}

TEST_CASE("zones complement each other for block-diagonal deltas") {
    Rng rng(33);
    const auto w = gaussian_matrix(7, 5, rng);
    const auto f = svd(w, SvdMode::Full);
    const auto z = zone_partition(f);
    DenseMatrix coeff(7, 5);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            if ((i < z.r_half) == (j < z.r_half)) coeff(i, j) = rng.normal();
    const auto dw = matmul(matmul(f.U, coeff), transpose(f.V));
    const auto wi = project_zone(w, dw, f, Zone::I).weight;
    const auto w23 = project_zone(w, dw, f, Zone::IIAndIII).weight;
    CHECK(max_abs_diff(sub(add(wi, w23), w), add(w, dw)) < 1e-10);

    const auto e = zone_energies(projection_coefficients(dw, f), z);
    CHECK(e.total == doctest::Approx(e.zone_i + e.zone_ii_iii).epsilon(1e-9));
    CHECK(e.cross < 1e-18);
}

TEST_CASE("projection properties on random deltas") {
    Rng rng(34);
    const auto w = gaussian_matrix(8, 6, rng);
    const auto f = svd(w, SvdMode::Full);
    const auto dw = gaussian_matrix(8, 6, rng);
    for (Zone zone : {Zone::I, Zone::II, Zone::IIAndIII}) {
        const auto p = project_delta(dw, f, zone);
        CHECK(max_abs_diff(project_delta(p, f, zone), p) < 1e-10);
    }
    const auto pi = project_delta(dw, f, Zone::I);
    const auto p23 = project_delta(dw, f, Zone::IIAndIII);
    const double n2 = frobenius_inner(dw, dw);
    CHECK(std::abs(frobenius_inner(pi, p23)) < 1e-9 * n2);
    CHECK(n2 >= frobenius_inner(pi, pi) + frobenius_inner(p23, p23));
    const auto e = zone_energies(projection_coefficients(dw, f), zone_partition(f));
    CHECK(e.total == doctest::Approx(e.zone_i + e.zone_ii_iii + e.cross).epsilon(1e-9));
    CHECK(e.zone_ii <= e.zone_ii_iii + 1e-12);
}

TEST_CASE("empty zone II is flagged") {
    // one dominant singular value makes r_half = r
    const DenseMatrix w{{10, 0}, {0, 0}};
    const auto f = svd(w, SvdMode::Full);
    const auto z = zone_partition(f);
    REQUIRE(z.r_half == z.r);
    const auto p = project_zone(w, DenseMatrix{{1, 1}, {1, 1}}, f, Zone::II);
    CHECK(p.empty_zone);
    CHECK(p.weight == w);
    CHECK_FALSE(project_zone(w, DenseMatrix{{1, 1}, {1, 1}}, f, Zone::IIAndIII).empty_zone);
}
