#pragma once

#include "smile/tensor.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace smile {

/// Weight and optional bias of one linear layer.
struct LinearParams {
    DenseMatrix W;
    std::optional<DenseVector> b;
};

struct TaskDelta {
    DenseMatrix dW;
    std::optional<DenseVector> db;
};

/// Pre-trained layer plus per-task fine-tuning deltas, all the same shape.
class DeltaSet {
public:
    DeltaSet(LinearParams base, std::vector<TaskDelta> deltas);

    /// Builds deltas as fine-tuned minus base.
    static DeltaSet from_finetuned(const LinearParams& base, const std::vector<LinearParams>& finetuned);

    const LinearParams& base() const noexcept { return base_; }
    const std::vector<TaskDelta>& deltas() const noexcept { return deltas_; }
    std::size_t tasks() const noexcept { return deltas_.size(); }
    bool has_bias() const noexcept { return base_.b.has_value(); }

    /// Δb of task l, or zeros when the layer has no bias.
    DenseVector bias_delta(std::size_t l) const;
    /// m×T matrix whose l-th column is Δb of task l.
    DenseMatrix bias_delta_matrix() const;

private:
    LinearParams base_;
    std::vector<TaskDelta> deltas_;
};

/// W + Σ λ_l ΔW_l and b + Σ λ_l Δb_l
LinearParams merge_with_weights(const DeltaSet& ds, const DenseVector& lambda);
/// λ_l = 1/T
LinearParams weight_average(const DeltaSet& ds);
/// Shared scaling coefficient on the summed task vectors.
LinearParams task_arithmetic(const DeltaSet& ds, double lambda);

/// λ minimizing ‖ΔB λ − Δb_target‖₂, i.e. (ΔBᵀΔB)⁻¹ ΔBᵀ Δb_target.
DenseVector optimal_bias_lambda(const DeltaSet& ds, std::size_t target_task);

/// ‖y_merged − y_target‖₂² for a single input, where y_merged shares the
/// pre-trained part and mixes the fine-tuned parts with λ.
double merging_error(const DeltaSet& ds, const DenseVector& lambda, std::size_t target_task, const DenseVector& x);

/// Weight and bias terms of the merging error, each squared separately.
/// Diagnostic only: ‖a + b‖² ≤ ‖a‖² + ‖b‖² does not hold in general, the
/// valid bound is 2·(weight_term + bias_term).
struct MergingErrorTerms {
    double weight_term = 0.0;
    double bias_term = 0.0;
    double total() const noexcept { return weight_term + bias_term; }
};

MergingErrorTerms merging_error_terms(const DeltaSet& ds, const DenseVector& lambda, std::size_t target_task,
                                      const DenseVector& x);

} // namespace smile
