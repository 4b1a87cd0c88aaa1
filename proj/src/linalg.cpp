#include "smile/linalg.hpp"

#include "smile/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace smile {

namespace {

using Column = std::vector<double>;

constexpr double kEps = 0x1p-52;

double dot(const Column& a, const Column& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

std::vector<Column> to_columns(const DenseMatrix& a) {
    std::vector<Column> cols(a.cols(), Column(a.rows()));
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) cols[c][r] = a(r, c);
    return cols;
}

DenseMatrix from_columns(const std::vector<Column>& cols, std::size_t rows) {
    DenseMatrix m(rows, cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (std::size_t r = 0; r < rows; ++r) m(r, c) = cols[c][r];
    return m;
}

/// Extends an orthonormal set to `target` vectors of dimension `dim`. Each new
/// vector is the standard basis vector with the largest residual after two
/// rounds of projection against the current set.
void complete_orthonormal(std::vector<Column>& basis, std::size_t dim, std::size_t target) {
    while (basis.size() < target) {
        Column best;
        double best_norm = -1.0;
        for (std::size_t i = 0; i < dim; ++i) {
            Column w(dim, 0.0);
            w[i] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (const Column& q : basis) {
                    const double proj = dot(q, w);
                    for (std::size_t r = 0; r < dim; ++r) w[r] -= proj * q[r];
                }
            }
            const double norm = std::sqrt(dot(w, w));
            if (norm > best_norm + 1e-12) {
                best_norm = norm;
                best = std::move(w);
            }
        }
        for (double& x : best) x /= best_norm;
        basis.push_back(std::move(best));
    }
}

void normalize_sign(Column& u, Column* v) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (std::abs(u[i]) > best) {
            best = std::abs(u[i]);
            arg = i;
        }
    }
    if (!u.empty() && u[arg] < 0.0) {
        for (double& x : u) x = -x;
        if (v != nullptr)
            for (double& x : *v) x = -x;
    }
}

struct TallFactors {
    std::vector<Column> u;  // m-dim vectors
    std::vector<double> sigma;
    std::vector<Column> v;  // n-dim vectors
    std::size_t rank = 0;
};

/// Hestenes one-sided Jacobi on a matrix with rows ≥ cols.
TallFactors jacobi_tall(const DenseMatrix& a, SvdMode mode, const SvdOptions& options) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    std::vector<Column> g = to_columns(a);
    std::vector<Column> v(n, Column(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    const double norm_a = frobenius_norm(a);
    const double negligible = (kEps * norm_a) * (kEps * norm_a) * 1e-4;

    bool converged = false;
    double residual = 0.0;
    for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
        residual = 0.0;
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(g[p], g[p]);
                const double beta = dot(g[q], g[q]);
                if (alpha <= negligible || beta <= negligible) continue;
                const double gamma = dot(g[p], g[q]);
                const double off = std::abs(gamma) / std::sqrt(alpha * beta);
                residual = std::max(residual, off);
                if (off < options.tolerance) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < m; ++r) {
                    const double gp = g[p][r];
                    const double gq = g[q][r];
                    g[p][r] = c * gp - s * gq;
                    g[q][r] = s * gp + c * gq;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vp = v[p][r];
                    const double vq = v[q][r];
                    v[p][r] = c * vp - s * vq;
                    v[q][r] = s * vp + c * vq;
                }
                rotated = true;
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "svd: one-sided Jacobi did not converge in " << options.max_sweeps
            << " sweeps (off-diagonal residual " << residual << ")";
        throw Error(ErrorKind::Numeric, msg.str());
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(g[j], g[j]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });

    TallFactors out;
    const double sigma_max = n ? norms[order.front()] : 0.0;
    const double threshold = rank_threshold(m, n, sigma_max);
    for (std::size_t j : order) {
        if (norms[j] > threshold) ++out.rank;
    }

    const std::size_t keep = mode == SvdMode::Full ? n : out.rank;
    for (std::size_t idx = 0; idx < keep; ++idx) {
        const std::size_t j = order[idx];
        out.sigma.push_back(norms[j]);
        out.v.push_back(v[j]);
    }
    for (std::size_t idx = 0; idx < out.rank; ++idx) {
        const std::size_t j = order[idx];
        Column u = g[j];
        for (double& x : u) x /= norms[j];
        out.u.push_back(std::move(u));
    }
    if (mode == SvdMode::Full) complete_orthonormal(out.u, m, m);
    return out;
}

} // namespace

double rank_threshold(std::size_t m, std::size_t n, double sigma_max) {
    return static_cast<double>(std::max(m, n)) * sigma_max * kEps * 16.0;
}

SvdFactors svd(const DenseMatrix& a, SvdMode mode, SvdOptions options) {
    if (!all_finite(a.values())) throw Error(ErrorKind::Domain, "svd: input contains non-finite entries");
    const bool wide = a.rows() < a.cols();
    TallFactors t = jacobi_tall(wide ? transpose(a) : a, mode, options);

    // For a wide input the factorization was of Aᵀ, so the roles swap.
    std::vector<Column>& left = wide ? t.v : t.u;
    std::vector<Column>& right = wide ? t.u : t.v;
    const std::size_t paired = t.sigma.size();
    for (std::size_t j = 0; j < std::max(left.size(), right.size()); ++j) {
        if (j < paired && j < left.size() && j < right.size()) {
            normalize_sign(left[j], &right[j]);
        } else {
            if (j < left.size()) normalize_sign(left[j], nullptr);
            if (j < right.size()) normalize_sign(right[j], nullptr);
        }
    }

    SvdFactors f;
    f.mode = mode;
    f.rank = t.rank;
    f.sigma = DenseVector(t.sigma);
    f.U = from_columns(left, a.rows());
    f.V = from_columns(right, a.cols());
    return f;
}

LowRankFactors truncate(const SvdFactors& f, std::size_t k) {
    if (k == 0) throw Error(ErrorKind::Argument, "truncate: k must be at least 1");
    const std::size_t kk = std::min(k, f.rank);
    LowRankFactors out;
    out.U = column_slice(f.U, 0, kk);
    out.V = column_slice(f.V, 0, kk);
    std::vector<double> s(f.sigma.values().begin(), f.sigma.values().begin() + static_cast<std::ptrdiff_t>(kk));
    out.sigma = DenseVector(std::move(s));
    return out;
}

DenseMatrix reconstruct(const DenseMatrix& U, const DenseVector& sigma, const DenseMatrix& V) {
    const std::size_t k = sigma.dim();
    if (U.cols() < k || V.cols() < k) {
        throw Error(ErrorKind::Shape, "reconstruct: factor widths " + U.shape_string() + ", " +
                                          V.shape_string() + " smaller than " + std::to_string(k));
    }
    DenseMatrix out(U.rows(), V.rows());
    for (std::size_t i = 0; i < U.rows(); ++i) {
        auto row = out.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            const double w = U(i, j) * sigma[j];
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < V.rows(); ++c) row[c] += w * V(c, j);
        }
    }
    return out;
}

DenseMatrix reconstruct(const LowRankFactors& f) { return reconstruct(f.U, f.sigma, f.V); }

DenseVector least_squares(const DenseMatrix& a, const DenseVector& y) {
    if (a.rows() != y.dim()) {
        throw Error(ErrorKind::Shape, "least_squares: A is " + a.shape_string() + " but y has dim " +
                                          std::to_string(y.dim()));
    }
    if (a.rows() < a.cols()) {
        throw Error(ErrorKind::Argument, "least_squares: underdetermined system " + a.shape_string());
    }
    const DenseMatrix gram = matmul_tn(a, a);
    const DenseVector rhs = matvec_t(a, y);

    const SvdFactors gs = svd(gram, SvdMode::Full);
    const double smax = gs.sigma.dim() ? gs.sigma[0] : 0.0;
    const double smin = gs.sigma.dim() ? gs.sigma[gs.sigma.dim() - 1] : 0.0;
    if (smax == 0.0 || smin <= smax * 1e-12) {
        std::ostringstream msg;
        msg << "least_squares: AᵀA is numerically singular (condition estimate "
            << (smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity()) << " > 1e12)";
        throw Error(ErrorKind::RankDeficient, msg.str());
    }

    // Cholesky of the symmetric positive definite normal matrix.
    const std::size_t n = gram.rows();
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = gram(j, j);
        for (std::size_t p = 0; p < j; ++p) d -= l(j, p) * l(j, p);
        if (d <= 0.0) throw Error(ErrorKind::RankDeficient, "least_squares: Cholesky breakdown");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = gram(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
            l(i, j) = s / l(j, j);
        }
    }
    DenseVector z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i];
        for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * z[p];
        z[i] = s / l(i, i);
    }
    DenseVector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = z[ii];
        for (std::size_t p = ii + 1; p < n; ++p) s -= l(p, ii) * x[p];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

GramReport check_orthonormal_basis(const std::vector<DenseVector>& u, const std::vector<DenseVector>& v) {
    GramReport report;
    for (const auto* set : {&u, &v})
        for (const DenseVector& x : *set)
            if (std::abs(l2_norm(x) - 1.0) > 1e-8) report.inputs_unit = false;

    const std::size_t p = u.size();
    const std::size_t q = v.size();
    std::vector<DenseMatrix> basis;
    basis.reserve(p * q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < q; ++j) basis.push_back(outer(u[i], v[j]));

    report.gram = DenseMatrix(p * q, p * q);
    for (std::size_t a = 0; a < basis.size(); ++a) {
        for (std::size_t b = a; b < basis.size(); ++b) {
            const double g = frobenius_inner(basis[a], basis[b]);
            report.gram(a, b) = g;
            report.gram(b, a) = g;
        }
    }
    for (std::size_t a = 0; a < basis.size(); ++a)
        for (std::size_t b = 0; b < basis.size(); ++b)
            report.max_deviation =
                std::max(report.max_deviation, std::abs(report.gram(a, b) - (a == b ? 1.0 : 0.0)));
    return report;
}

ThinQr thin_qr(const DenseMatrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n) throw Error(ErrorKind::Shape, "thin_qr: expected rows >= cols, got " + a.shape_string());

    DenseMatrix r = a;
    std::vector<Column> reflectors;
    reflectors.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        Column h(m, 0.0);
        double norm = 0.0;
        for (std::size_t i = j; i < m; ++i) norm += r(i, j) * r(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            reflectors.push_back(std::move(h));
            continue;
        }
        const double alpha = r(j, j) >= 0.0 ? -norm : norm;
        for (std::size_t i = j; i < m; ++i) h[i] = r(i, j);
        h[j] -= alpha;
        const double hn = std::sqrt(dot(h, h));
        for (double& x : h) x /= hn;
        for (std::size_t c = j; c < n; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < m; ++i) s += h[i] * r(i, c);
            for (std::size_t i = j; i < m; ++i) r(i, c) -= 2.0 * h[i] * s;
        }
        reflectors.push_back(std::move(h));
    }

    DenseMatrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
    for (std::size_t jj = n; jj-- > 0;) {
        const Column& h = reflectors[jj];
        for (std::size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (std::size_t i = jj; i < m; ++i) s += h[i] * q(i, c);
            if (s == 0.0) continue;
            for (std::size_t i = jj; i < m; ++i) q(i, c) -= 2.0 * h[i] * s;
        }
    }

    ThinQr out;
    out.Q = std::move(q);
    out.R = DenseMatrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) out.R(i, j) = r(i, j);
    return out;
}

SvdFactors svd_of_product(const DenseMatrix& b, const DenseMatrix& a) {
    if (b.cols() != a.rows()) {
        throw Error(ErrorKind::Shape, "svd_of_product: inner dimensions differ, B is " + b.shape_string() +
                                          " and A is " + a.shape_string());
    }
    if (!all_finite(b.values()) || !all_finite(a.values()))
        throw Error(ErrorKind::Domain, "svd_of_product: non-finite factor entries");
    const ThinQr qb = thin_qr(b);
    const ThinQr qa = thin_qr(transpose(a));
    // B·A = Q_B (R_B R_Aᵀ) Q_Aᵀ
    const DenseMatrix core = matmul(qb.R, transpose(qa.R));
    const SvdFactors cf = svd(core, SvdMode::Full);

    const std::size_t m = b.rows();
    const std::size_t n = a.cols();
    const double sigma_max = cf.sigma.dim() ? cf.sigma[0] : 0.0;
    const double threshold = rank_threshold(m, n, sigma_max);
    std::size_t rank = 0;
    for (double s : cf.sigma.values())
        if (s > threshold) ++rank;

    DenseMatrix u = matmul(qb.Q, column_slice(cf.U, 0, rank));
    DenseMatrix v = matmul(qa.Q, column_slice(cf.V, 0, rank));
    for (std::size_t j = 0; j < rank; ++j) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < m; ++i)
            if (std::abs(u(i, j)) > std::abs(u(arg, j))) arg = i;
        if (u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < n; ++i) v(i, j) = -v(i, j);
        }
    }

    SvdFactors out;
    out.mode = SvdMode::Reduced;
    out.rank = rank;
    out.U = std::move(u);
    out.V = std::move(v);
    std::vector<double> s(cf.sigma.values().begin(), cf.sigma.values().begin() + static_cast<std::ptrdiff_t>(rank));
    out.sigma = DenseVector(std::move(s));
    return out;
}

} // namespace smile
