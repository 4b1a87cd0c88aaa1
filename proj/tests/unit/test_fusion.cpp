#include "helpers.hpp"

#include "smile/fusion.hpp"
#include "smile/linalg.hpp"

using namespace smile;

namespace {

DeltaSet random_set(Rng& rng, std::size_t T, std::size_t m, std::size_t n, bool bias = true) {
    LinearParams base{gaussian_matrix(m, n, rng), std::nullopt};
    if (bias) base.b = gaussian_vector(m, rng);
    std::vector<TaskDelta> deltas;
    for (std::size_t l = 0; l < T; ++l) {
        TaskDelta d{gaussian_matrix(m, n, rng), std::nullopt};
        if (bias) d.db = gaussian_vector(m, rng);
        deltas.push_back(std::move(d));
    }
    return DeltaSet(base, deltas);
}

} // namespace

TEST_CASE("weight average") {
    Rng rng(40);
    const auto w = gaussian_matrix(3, 4, rng);
    const auto b = gaussian_vector(3, rng);
    const auto a = gaussian_matrix(3, 4, rng);
    const auto ab = gaussian_vector(3, rng);

    const LinearParams ft{add(w, a), add(b, ab)};
    const auto single = weight_average(DeltaSet::from_finetuned({w, b}, {ft}));
    CHECK(max_abs_diff(single.W, ft.W) < 1e-15);
    CHECK(max_abs_diff(*single.b, *ft.b) < 1e-15);

    const auto opposite = weight_average(DeltaSet({w, b}, {{a, ab}, {scale(a, -1), scale(ab, -1)}}));
    CHECK(max_abs_diff(opposite.W, w) < 1e-15);
    CHECK(max_abs_diff(*opposite.b, b) < 1e-15);

    const auto two = weight_average(DeltaSet({w, b}, {{a, ab}, {scale(a, 3), scale(ab, 3)}}));
    CHECK(max_abs_diff(two.W, add(w, scale(a, 2))) < 1e-12);
}

TEST_CASE("task arithmetic") {
    Rng rng(41);
    const auto ds = random_set(rng, 1, 3, 4);
    const auto zero = task_arithmetic(ds, 0.0);
    CHECK(zero.W == ds.base().W);
    CHECK(*zero.b == *ds.base().b);
    const auto one = task_arithmetic(ds, 1.0);
    CHECK(max_abs_diff(one.W, add(ds.base().W, ds.deltas()[0].dW)) < 1e-15);

    const auto a = gaussian_matrix(3, 4, rng);
    const DeltaSet eq({ds.base().W, std::nullopt}, {{a, std::nullopt}, {a, std::nullopt}});
    CHECK(max_abs_diff(task_arithmetic(eq, 0.5).W, add(ds.base().W, a)) < 1e-12);

    const auto many = random_set(rng, 4, 3, 4);
    const auto avg = weight_average(many), ta = task_arithmetic(many, 0.25);
    CHECK(max_abs_diff(avg.W, ta.W) < 1e-15);
    CHECK(max_abs_diff(*avg.b, *ta.b) < 1e-15);
}

TEST_CASE("delta set validation") {
    const LinearParams base{DenseMatrix(2, 2), DenseVector(2)};
    CHECK_THROWS_KIND(DeltaSet(base, {}), ErrorKind::Argument);
    CHECK_THROWS_KIND(DeltaSet(base, {{DenseMatrix(2, 3), std::nullopt}}), ErrorKind::Shape);
    const DeltaSet no_bias({DenseMatrix(2, 2), std::nullopt}, {{DenseMatrix(2, 2), std::nullopt}});
    CHECK(no_bias.bias_delta(0) == DenseVector(2));
}

TEST_CASE("optimal bias lambda") {
    const LinearParams base{DenseMatrix(2, 2), DenseVector(2)};
    const DeltaSet id(base, {{DenseMatrix(2, 2), DenseVector{1, 0}}, {DenseMatrix(2, 2), DenseVector{0, 1}}});
    const auto l = optimal_bias_lambda(id, 1);
    CHECK(l[0] == doctest::Approx(0.0));
    CHECK(l[1] == doctest::Approx(1.0));

    const DeltaSet three(base, {{DenseMatrix(2, 2), DenseVector{1, 0}},
                                {DenseMatrix(2, 2), DenseVector{0, 1}},
                                {DenseMatrix(2, 2), DenseVector{2, 3}}});
    // ΔB is 2x3 here, so it cannot have full column rank
    CHECK_THROWS_KIND(optimal_bias_lambda(three, 2), ErrorKind::Argument);

    const LinearParams base3{DenseMatrix(3, 2), DenseVector(3)};
    const DeltaSet span(base3, {{DenseMatrix(3, 2), DenseVector{1, 0, 0}},
                                {DenseMatrix(3, 2), DenseVector{0, 1, 0}},
                                {DenseMatrix(3, 2), DenseVector{2, 3, 0}}});
    CHECK_THROWS_KIND(optimal_bias_lambda(span, 2), ErrorKind::RankDeficient);

    const DeltaSet dup(base3, {{DenseMatrix(3, 2), DenseVector{1, 2, 3}}, {DenseMatrix(3, 2), DenseVector{1, 2, 3}}});
    CHECK_THROWS_KIND(optimal_bias_lambda(dup, 0), ErrorKind::RankDeficient);
}

TEST_CASE("optimal bias lambda solves the two-column hand example") {
    // target Δb = (2,3) expressed in the basis Δb1 = (1,0), Δb2 = (0,1)
    const LinearParams base{DenseMatrix(2, 2), DenseVector(2)};
    const DeltaSet ds(base, {{DenseMatrix(2, 2), DenseVector{1, 0}}, {DenseMatrix(2, 2), DenseVector{0, 1}}});
    const DenseMatrix dB = ds.bias_delta_matrix();
    const auto l = least_squares(dB, DenseVector{2, 3});
    CHECK(l[0] == doctest::Approx(2.0));
    CHECK(l[1] == doctest::Approx(3.0));
    CHECK(l2_norm(sub(matvec(dB, l), DenseVector{2, 3})) < 1e-12);
}

TEST_CASE("merging error") {
    Rng rng(42);
    const auto single = random_set(rng, 1, 4, 3);
    CHECK(merging_error(single, DenseVector{1.0}, 0, gaussian_vector(3, rng)) < 1e-24);

    const auto ds = random_set(rng, 3, 4, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        DenseVector onehot(3);
        onehot[i] = 1.0;
        CHECK(merging_error(ds, onehot, i, gaussian_vector(3, rng)) < 1e-24);
    }

    const auto w = gaussian_matrix(4, 3, rng);
    const DenseVector x{1, 0, 0}, v{0, 0, 1};
    const DeltaSet orth({w, DenseVector(4)}, {{DenseMatrix(4, 3), DenseVector(4)},
                                              {outer(gaussian_vector(4, rng), v), DenseVector(4)}});
    CHECK(merging_error(orth, DenseVector{1, 1}, 0, x) == 0.0);
}

TEST_CASE("merging error ignores inactive deltas orthogonal to the input") {
    Rng rng(43);
    const auto ds = random_set(rng, 3, 4, 3);
    const DenseVector x{1, 2, 0};
    const DenseVector lambda{0.4, 0.0, 0.6};
    const double before = merging_error(ds, lambda, 0, x);
    std::vector<TaskDelta> changed = ds.deltas();
    changed[1].dW = add(changed[1].dW, outer(gaussian_vector(4, rng), DenseVector{0, 0, 1}));
    const DeltaSet after(ds.base(), changed);
    CHECK(merging_error(after, lambda, 0, x) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("optimal bias lambda beats random lambdas at x = 0") {
    Rng rng(44);
    for (int t = 0; t < 10; ++t) {
        const auto ds = random_set(rng, 3, 16, 5);
        const auto best = optimal_bias_lambda(ds, 1);
        const double e = merging_error(ds, best, 1, DenseVector(5));
        for (int r = 0; r < 50; ++r) CHECK(e <= merging_error(ds, gaussian_vector(3, rng), 1, DenseVector(5)) + 1e-12);
    }
}

TEST_CASE("merging error terms") {
    Rng rng(45);
    const auto ds = random_set(rng, 3, 5, 4);
    const auto x = gaussian_vector(4, rng);
    const DenseVector lambda{0.2, 0.3, 0.5};
    const auto terms = merging_error_terms(ds, lambda, 0, x);
    CHECK(terms.weight_term >= 0.0);
    CHECK(terms.bias_term >= 0.0);
    CHECK(merging_error(ds, lambda, 0, x) <= 2.0 * terms.total() + 1e-12);
    const auto at_zero = merging_error_terms(ds, lambda, 0, DenseVector(4));
    CHECK(at_zero.weight_term == 0.0);
    CHECK(at_zero.bias_term == doctest::Approx(merging_error(ds, lambda, 0, DenseVector(4))));
}
