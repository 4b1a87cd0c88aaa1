#pragma once

#include "smile/checkpoint_io.hpp"
#include "smile/fusion.hpp"
#include "smile/linalg.hpp"
#include "smile/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace smile {

struct SmileConfig {
    std::size_t k = 1;      // expert rank
    std::size_t k_gate = 1; // router rank
    std::size_t top_k = 1;  // experts activated per input
    std::size_t T = 1;      // number of experts

    /// Throws Config when 1 ≤ top_k ≤ T, k ≥ 1, k_gate ≥ 1 does not hold.
    void validate() const;
    /// Additional constraints for LoRA sources: k ≤ r_lora and k_gate < r_lora.
    void validate_for_lora(std::size_t r_lora) const;

    bool operator==(const SmileConfig&) const = default;
};

/// One task's truncated update plus its routing subspace. With A = Σ_k V_kᵀ
/// and B = U_k this is the LoRA-style pair ΔW x ≈ B A x.
struct LowRankExpert {
    DenseMatrix U;                  // m×k_eff
    DenseVector sigma;              // k_eff, descending
    DenseMatrix V;                  // n×k_eff
    std::optional<DenseVector> delta_b;
    DenseMatrix V_gate;             // n×g_eff, leading columns of the same V

    std::size_t k_eff() const noexcept { return sigma.dim(); }
    std::size_t g_eff() const noexcept { return V_gate.cols(); }
    std::size_t out_dim() const noexcept { return U.rows(); }
    std::size_t in_dim() const noexcept { return V.rows(); }

    /// U diag(σ) (Vᵀ x), never forming the m×n product.
    DenseVector apply(const DenseVector& x) const;
    /// ‖V_gateᵀ x‖₂
    double gate_logit(const DenseVector& x) const;
    /// σ is folded into A = Σ_k V_kᵀ, so it is not counted separately.
    std::uint64_t parameter_count() const noexcept;
};

/// Expert from the SVD factors of a weight delta. k and k_gate are clamped to
/// the numerical rank; a zero delta yields an expert that contributes nothing.
LowRankExpert build_expert(const SvdFactors& delta_factors, std::optional<DenseVector> delta_b,
                           const SmileConfig& cfg);
LowRankExpert build_expert(const DenseMatrix& delta, std::optional<DenseVector> delta_b, const SmileConfig& cfg);

/// Expert from LoRA factors ΔW = B·A (B m×r, A r×n) without forming ΔW.
LowRankExpert build_expert_from_lora(const DenseMatrix& b_lora, const DenseMatrix& a_lora,
                                     std::optional<DenseVector> delta_b, const SmileConfig& cfg);

struct RouterOutput {
    DenseVector logits;                // r_i = ‖V_gate_iᵀ x‖₂
    DenseVector probs;                 // softmax(logits)
    std::vector<std::size_t> selected; // top_k indices, descending probability, ties to lower index
    DenseVector weights;               // probs renormalized over `selected`, zero elsewhere
};

/// Shared pre-trained linear map, T low-rank experts and a top-K router.
class SmileLayer {
public:
    SmileLayer(LinearParams shared, std::vector<LowRankExpert> experts, SmileConfig config);

    const LinearParams& shared() const noexcept { return shared_; }
    const std::vector<LowRankExpert>& experts() const noexcept { return experts_; }
    const SmileConfig& config() const noexcept { return config_; }
    std::size_t in_dim() const noexcept { return shared_.W.cols(); }
    std::size_t out_dim() const noexcept { return shared_.W.rows(); }

    RouterOutput route(const DenseVector& x) const;
    DenseVector forward(const DenseVector& x) const;
    DenseVector forward(const DenseVector& x, const RouterOutput& routing) const;

    /// Parameters stored beyond the shared layer, using each expert's effective ranks.
    std::uint64_t added_parameters() const noexcept;

private:
    LinearParams shared_;
    std::vector<LowRankExpert> experts_;
    SmileConfig config_;
};

/// Builds a SMILE layer from a pre-trained layer and T fine-tuned versions of it.
SmileLayer upscale_layer(const LinearParams& base, const std::vector<LinearParams>& finetuned, SmileConfig cfg);

struct ParamCount {
    std::uint64_t total_added = 0;
    std::uint64_t activated_per_token = 0;
};

/// total_added = T(mk + nk + m·bias) + nT·k_gate
/// activated   = nT·k_gate + K(mk + nk + m·bias)
ParamCount param_count(std::uint64_t m, std::uint64_t n, const SmileConfig& cfg, bool has_bias);

/// Percentage of `part` relative to `whole`, truncated (not rounded) to one decimal.
double percent_truncated(std::uint64_t part, std::uint64_t whole);

/// "+565248 params (53.9%), 99328 activated (9.4%)", percentages relative to `original`.
std::string format_param_summary(const ParamCount& pc, std::uint64_t original);

} // namespace smile
