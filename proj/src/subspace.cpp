#include "smile/subspace.hpp"

#include "smile/error.hpp"

namespace smile {

namespace {

struct Block {
    std::size_t row_begin, row_end, col_begin, col_end;
    bool empty() const { return row_begin >= row_end || col_begin >= col_end; }
};

Block zone_block(const ZonePartition& z, Zone zone) {
    switch (zone) {
    case Zone::I: return {0, z.r_half, 0, z.r_half};
    case Zone::II: return {z.r_half, z.r, z.r_half, z.r};
    case Zone::IIAndIII: return {z.r_half, z.m, z.r_half, z.n};
    }
    return {0, 0, 0, 0};
}

void require_full(const DenseMatrix& dW, const SvdFactors& f, const char* op) {
    if (f.mode != SvdMode::Full || f.U.cols() != f.U.rows() || f.V.cols() != f.V.rows()) {
        throw Error(ErrorKind::Argument, std::string(op) + ": expects full-mode SVD factors");
    }
    if (dW.rows() != f.U.rows() || dW.cols() != f.V.rows()) {
        throw Error(ErrorKind::Shape, std::string(op) + ": delta " + dW.shape_string() +
                                          " does not match factors of a (" + std::to_string(f.U.rows()) +
                                          "x" + std::to_string(f.V.rows()) + ") matrix");
    }
}

} // namespace

const char* to_string(Zone zone) noexcept {
    switch (zone) {
    case Zone::I: return "I";
    case Zone::II: return "II";
    case Zone::IIAndIII: return "II+III";
    }
    return "?";
}

ZonePartition zone_partition(const DenseVector& sigma, std::size_t rank, std::size_t m, std::size_t n) {
    if (rank > sigma.dim()) {
        throw Error(ErrorKind::Argument, "zone_partition: rank " + std::to_string(rank) +
                                             " exceeds spectrum length " + std::to_string(sigma.dim()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < rank; ++i) total += sigma[i];
    if (rank == 0 || total <= 0.0) throw Error(ErrorKind::Degenerate, "zone_partition: all-zero spectrum");

    ZonePartition z;
    z.r = rank;
    z.m = m;
    z.n = n;
    double running = 0.0;
    for (std::size_t i = 0; i < rank; ++i) {
        running += sigma[i];
        if (running >= total / 2.0) {
            z.r_half = i + 1;
            break;
        }
    }
    return z;
}

ProjectionCoefficients projection_coefficients(const DenseMatrix& dW, const SvdFactors& f) {
    require_full(dW, f, "projection_coefficients");
    return {matmul(matmul_tn(f.U, dW), f.V)};
}

DenseMatrix project_delta(const DenseMatrix& dW, const SvdFactors& f, Zone zone) {
    require_full(dW, f, "project_delta");
    const ZonePartition z = zone_partition(f);
    const Block b = zone_block(z, zone);
    if (b.empty()) return DenseMatrix(dW.rows(), dW.cols());
    const DenseMatrix us = column_slice(f.U, b.row_begin, b.row_end);
    const DenseMatrix vs = column_slice(f.V, b.col_begin, b.col_end);
    const DenseMatrix coeffs = matmul(matmul_tn(us, dW), vs);
    return matmul(matmul(us, coeffs), transpose(vs));
}

ZoneProjection project_zone(const DenseMatrix& W, const DenseMatrix& dW, const SvdFactors& f, Zone zone) {
    if (W.rows() != dW.rows() || W.cols() != dW.cols()) {
        throw Error(ErrorKind::Shape, "project_zone: W " + W.shape_string() + " vs delta " + dW.shape_string());
    }
    const Block b = zone_block(zone_partition(f), zone);
    if (b.empty()) return {W, true};
    return {add(W, project_delta(dW, f, zone)), false};
}

ZoneEnergies zone_energies(const ProjectionCoefficients& coeffs, const ZonePartition& z) {
    ZoneEnergies e;
    const DenseMatrix& d = coeffs.delta;
    for (std::size_t j = 0; j < d.rows(); ++j) {
        for (std::size_t k = 0; k < d.cols(); ++k) {
            const double sq = d(j, k) * d(j, k);
            e.total += sq;
            const bool row_i = j < z.r_half;
            const bool col_i = k < z.r_half;
            if (row_i && col_i) {
                e.zone_i += sq;
            } else if (!row_i && !col_i) {
                e.zone_ii_iii += sq;
                if (j < z.r && k < z.r) e.zone_ii += sq;
            } else {
                e.cross += sq;
            }
        }
    }
    return e;
}

} // namespace smile
