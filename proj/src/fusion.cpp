#include "smile/fusion.hpp"

#include "smile/error.hpp"
#include "smile/linalg.hpp"

namespace smile {

DeltaSet::DeltaSet(LinearParams base, std::vector<TaskDelta> deltas)
    : base_(std::move(base)), deltas_(std::move(deltas)) {
    if (deltas_.empty()) throw Error(ErrorKind::Argument, "DeltaSet: at least one task is required");
    const std::size_t m = base_.W.rows();
    const std::size_t n = base_.W.cols();
    if (base_.b && base_.b->dim() != m) {
        throw Error(ErrorKind::Shape, "DeltaSet: bias dim " + std::to_string(base_.b->dim()) +
                                          " does not match " + base_.W.shape_string());
    }
    for (std::size_t l = 0; l < deltas_.size(); ++l) {
        const TaskDelta& d = deltas_[l];
        if (d.dW.rows() != m || d.dW.cols() != n) {
            throw Error(ErrorKind::Shape, "DeltaSet: task " + std::to_string(l) + " delta " + d.dW.shape_string() +
                                              " does not match " + base_.W.shape_string());
        }
        if (d.db && d.db->dim() != m) {
            throw Error(ErrorKind::Shape, "DeltaSet: task " + std::to_string(l) + " bias delta has dim " +
                                              std::to_string(d.db->dim()));
        }
    }
}

DeltaSet DeltaSet::from_finetuned(const LinearParams& base, const std::vector<LinearParams>& finetuned) {
    std::vector<TaskDelta> deltas;
    deltas.reserve(finetuned.size());
    for (const LinearParams& ft : finetuned) {
        TaskDelta d{sub(ft.W, base.W), std::nullopt};
        if (base.b && ft.b) d.db = sub(*ft.b, *base.b);
        deltas.push_back(std::move(d));
    }
    return DeltaSet(base, std::move(deltas));
}

DenseVector DeltaSet::bias_delta(std::size_t l) const {
    const TaskDelta& d = deltas_.at(l);
    return d.db ? *d.db : DenseVector(base_.W.rows());
}

DenseMatrix DeltaSet::bias_delta_matrix() const {
    DenseMatrix out(base_.W.rows(), deltas_.size());
    for (std::size_t l = 0; l < deltas_.size(); ++l) {
        const DenseVector db = bias_delta(l);
        for (std::size_t i = 0; i < db.dim(); ++i) out(i, l) = db[i];
    }
    return out;
}

LinearParams merge_with_weights(const DeltaSet& ds, const DenseVector& lambda) {
    if (lambda.dim() != ds.tasks()) {
        throw Error(ErrorKind::Shape, "merge_with_weights: " + std::to_string(lambda.dim()) +
                                          " coefficients for " + std::to_string(ds.tasks()) + " tasks");
    }
    LinearParams out = ds.base();
    for (std::size_t l = 0; l < ds.tasks(); ++l) {
        const TaskDelta& d = ds.deltas()[l];
        auto w = out.W.values();
        auto dw = d.dW.values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += lambda[l] * dw[i];
        if (out.b && d.db) {
            for (std::size_t i = 0; i < out.b->dim(); ++i) (*out.b)[i] += lambda[l] * (*d.db)[i];
        }
    }
    return out;
}

LinearParams weight_average(const DeltaSet& ds) {
    return merge_with_weights(ds, DenseVector(ds.tasks(), 1.0 / static_cast<double>(ds.tasks())));
}

LinearParams task_arithmetic(const DeltaSet& ds, double lambda) {
    return merge_with_weights(ds, DenseVector(ds.tasks(), lambda));
}

DenseVector optimal_bias_lambda(const DeltaSet& ds, std::size_t target_task) {
    if (target_task >= ds.tasks()) {
        throw Error(ErrorKind::Argument, "optimal_bias_lambda: task index " + std::to_string(target_task) +
                                             " out of range");
    }
    return least_squares(ds.bias_delta_matrix(), ds.bias_delta(target_task));
}

namespace {

struct ErrorParts {
    DenseVector weight; // Σ λ_l ΔW_l x − ΔW_i x
    DenseVector bias;   // Σ λ_l Δb_l − Δb_i
};

ErrorParts error_parts(const DeltaSet& ds, const DenseVector& lambda, std::size_t target, const DenseVector& x) {
    if (lambda.dim() != ds.tasks()) {
        throw Error(ErrorKind::Shape, "merging_error: " + std::to_string(lambda.dim()) + " coefficients for " +
                                          std::to_string(ds.tasks()) + " tasks");
    }
    if (target >= ds.tasks()) throw Error(ErrorKind::Argument, "merging_error: task index out of range");
    const std::size_t m = ds.base().W.rows();
    ErrorParts p{DenseVector(m), DenseVector(m)};
    for (std::size_t l = 0; l < ds.tasks(); ++l) {
        const double coeff = lambda[l] - (l == target ? 1.0 : 0.0);
        if (coeff == 0.0) continue;
        const DenseVector dy = matvec(ds.deltas()[l].dW, x);
        const DenseVector db = ds.bias_delta(l);
        for (std::size_t i = 0; i < m; ++i) {
            p.weight[i] += coeff * dy[i];
            p.bias[i] += coeff * db[i];
        }
    }
    return p;
}

} // namespace

double merging_error(const DeltaSet& ds, const DenseVector& lambda, std::size_t target_task, const DenseVector& x) {
    const ErrorParts p = error_parts(ds, lambda, target_task, x);
    const double n = l2_norm(add(p.weight, p.bias));
    return n * n;
}

MergingErrorTerms merging_error_terms(const DeltaSet& ds, const DenseVector& lambda, std::size_t target_task,
                                      const DenseVector& x) {
    const ErrorParts p = error_parts(ds, lambda, target_task, x);
    const double w = l2_norm(p.weight);
    const double b = l2_norm(p.bias);
    return {w * w, b * b};
}

} // namespace smile
