#pragma once

#include "smile/tensor.hpp"

#include <cstddef>
#include <vector>

namespace smile {

enum class SvdMode { Full, Reduced };

/// Singular value decomposition A = U diag(sigma) Vᵀ.
///
/// Full mode: U is m×m, V is n×n and sigma holds min(m, n) values; the
/// trailing columns of U and V span the cokernel and kernel of A.
/// Reduced mode: U is m×r, V is n×r and sigma holds the r values above the
/// numerical rank threshold.
struct SvdFactors {
    DenseMatrix U;
    DenseVector sigma;
    DenseMatrix V;
    std::size_t rank = 0;
    SvdMode mode = SvdMode::Reduced;
};

struct SvdOptions {
    int max_sweeps = 60;
    double tolerance = 1e-12;
};

/// One-sided Jacobi SVD. Deterministic: identical input gives bit-identical
/// factors. Columns are sign-normalized so the largest-magnitude entry of
/// every left singular vector is positive.
SvdFactors svd(const DenseMatrix& a, SvdMode mode = SvdMode::Reduced, SvdOptions options = {});

/// max(m, n) · sigma_max · 2⁻⁵² · 16
double rank_threshold(std::size_t m, std::size_t n, double sigma_max);

struct LowRankFactors {
    DenseMatrix U;     // m×k
    DenseVector sigma; // k
    DenseMatrix V;     // n×k

    std::size_t rank() const noexcept { return sigma.dim(); }
};

/// Best rank-k approximation. k larger than the numerical rank is clamped.
LowRankFactors truncate(const SvdFactors& f, std::size_t k);

/// U diag(sigma) Vᵀ
DenseMatrix reconstruct(const DenseMatrix& U, const DenseVector& sigma, const DenseMatrix& V);
DenseMatrix reconstruct(const LowRankFactors& f);

/// Minimizer of ‖Aλ − y‖₂ through the normal equations (AᵀA)λ = Aᵀy.
/// Throws RankDeficient when the condition estimate of AᵀA exceeds 1e12.
DenseVector least_squares(const DenseMatrix& a, const DenseVector& y);

struct GramReport {
    DenseMatrix gram;           // pq×pq, entry ((i,j),(k,l)) = ⟨u_i v_jᵀ, u_k v_lᵀ⟩_F
    double max_deviation = 0.0; // max |gram − I|
    bool inputs_unit = true;    // every input vector had unit norm within 1e-8
};

/// Gram matrix of the rank-one family {u_i v_jᵀ} under the Frobenius inner
/// product, indexed row-major by (i, j).
GramReport check_orthonormal_basis(const std::vector<DenseVector>& u, const std::vector<DenseVector>& v);

struct ThinQr {
    DenseMatrix Q; // m×r with orthonormal columns
    DenseMatrix R; // r×r upper triangular
};

/// Householder QR of a tall matrix (rows ≥ cols).
ThinQr thin_qr(const DenseMatrix& a);

/// Reduced SVD of the product B·A (B m×r, A r×n) without forming the m×n
/// matrix: QR of B and Aᵀ, then an r×r core SVD.
SvdFactors svd_of_product(const DenseMatrix& b, const DenseMatrix& a);

} // namespace smile
