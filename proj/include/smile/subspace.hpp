#pragma once

#include "smile/linalg.hpp"
#include "smile/tensor.hpp"

#include <cstddef>

namespace smile {

/// Split of the pre-trained spectrum: zone I holds the leading singular values
/// whose running sum first reaches half of the total, zone II the rest of the
/// numerical rank, zone III the null-space complement.
struct ZonePartition {
    std::size_t r_half = 0;
    std::size_t r = 0;
    std::size_t m = 0;
    std::size_t n = 0;
};

ZonePartition zone_partition(const DenseVector& sigma, std::size_t rank, std::size_t m, std::size_t n);
inline ZonePartition zone_partition(const SvdFactors& f) {
    return zone_partition(f.sigma, f.rank, f.U.rows(), f.V.rows());
}

/// delta(j, k) = ⟨ΔW, u_j v_kᵀ⟩ = (Uᵀ ΔW V)_jk, expects full-mode factors of W.
struct ProjectionCoefficients {
    DenseMatrix delta;
};

ProjectionCoefficients projection_coefficients(const DenseMatrix& dW, const SvdFactors& f);

enum class Zone { I, II, IIAndIII };

const char* to_string(Zone zone) noexcept;

struct ZoneProjection {
    DenseMatrix weight;      // W + P_U ΔW P_V
    bool empty_zone = false; // zone has no basis vectors; weight == W
};

/// Projects ΔW onto span{u_i v_jᵀ} for (i, j) in the zone's square block and
/// adds it to W. Zone I uses indices [0, r_half), zone II [r_half, r),
/// zone II+III rows [r_half, m) and columns [r_half, n).
ZoneProjection project_zone(const DenseMatrix& W, const DenseMatrix& dW, const SvdFactors& f, Zone zone);

/// P_U ΔW P_V alone for the given zone.
DenseMatrix project_delta(const DenseMatrix& dW, const SvdFactors& f, Zone zone);

struct ZoneEnergies {
    double total = 0.0;        // ‖ΔW‖_F²
    double zone_i = 0.0;       // ‖P_I ΔW‖_F²
    double zone_ii = 0.0;      // ‖P_II ΔW‖_F²
    double zone_ii_iii = 0.0;  // ‖P_{II+III} ΔW‖_F²
    double cross = 0.0;        // coefficients outside the zone I and II+III blocks
};

ZoneEnergies zone_energies(const ProjectionCoefficients& coeffs, const ZonePartition& zones);

} // namespace smile
