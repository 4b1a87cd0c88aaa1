#include "smile/smile.hpp"

#include "smile/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace smile {

void SmileConfig::validate() const {
    if (T == 0) throw Error(ErrorKind::Config, "SmileConfig: T must be at least 1");
    if (k == 0) throw Error(ErrorKind::Config, "SmileConfig: k must be at least 1");
    if (k_gate == 0) throw Error(ErrorKind::Config, "SmileConfig: k_gate must be at least 1");
    if (top_k == 0 || top_k > T) {
        throw Error(ErrorKind::Config, "SmileConfig: top_k must lie in [1, T=" + std::to_string(T) + "], got " +
                                           std::to_string(top_k));
    }
}

void SmileConfig::validate_for_lora(std::size_t r_lora) const {
    if (k == 0 || k > r_lora) {
        throw Error(ErrorKind::Config, "SmileConfig: LoRA sources need 1 <= k <= r_lora=" + std::to_string(r_lora) +
                                           ", got k=" + std::to_string(k));
    }
    if (k_gate == 0 || k_gate >= r_lora) {
        throw Error(ErrorKind::Config, "SmileConfig: LoRA sources need 1 <= k_gate < r_lora=" +
                                           std::to_string(r_lora) + ", got k_gate=" + std::to_string(k_gate));
    }
}

DenseVector LowRankExpert::apply(const DenseVector& x) const {
    DenseVector z = matvec_t(V, x);
    for (std::size_t j = 0; j < z.dim(); ++j) z[j] *= sigma[j];
    return matvec(U, z);
}

double LowRankExpert::gate_logit(const DenseVector& x) const {
    if (V_gate.cols() == 0) return 0.0;
    return l2_norm(matvec_t(V_gate, x));
}

std::uint64_t LowRankExpert::parameter_count() const noexcept {
    return U.size() + V.size() + (delta_b ? delta_b->dim() : 0) + V_gate.size();
}

LowRankExpert build_expert(const SvdFactors& f, std::optional<DenseVector> delta_b, const SmileConfig& cfg) {
    if (cfg.k == 0 || cfg.k_gate == 0) throw Error(ErrorKind::Config, "build_expert: k and k_gate must be >= 1");
    if (delta_b && delta_b->dim() != f.U.rows()) {
        throw Error(ErrorKind::Shape, "build_expert: bias delta dim " + std::to_string(delta_b->dim()) +
                                          " does not match output dim " + std::to_string(f.U.rows()));
    }
    const LowRankFactors t = truncate(f, cfg.k);
    LowRankExpert e;
    e.U = t.U;
    e.sigma = t.sigma;
    e.V = t.V;
    e.delta_b = std::move(delta_b);
    e.V_gate = column_slice(f.V, 0, std::min(cfg.k_gate, f.rank));
    return e;
}

LowRankExpert build_expert(const DenseMatrix& delta, std::optional<DenseVector> delta_b, const SmileConfig& cfg) {
    return build_expert(svd(delta, SvdMode::Reduced), std::move(delta_b), cfg);
}

LowRankExpert build_expert_from_lora(const DenseMatrix& b_lora, const DenseMatrix& a_lora,
                                     std::optional<DenseVector> delta_b, const SmileConfig& cfg) {
    if (b_lora.cols() != a_lora.rows()) {
        throw Error(ErrorKind::Shape, "build_expert_from_lora: B is " + b_lora.shape_string() + " but A is " +
                                          a_lora.shape_string());
    }
    cfg.validate_for_lora(b_lora.cols());
    return build_expert(svd_of_product(b_lora, a_lora), std::move(delta_b), cfg);
}

SmileLayer::SmileLayer(LinearParams shared, std::vector<LowRankExpert> experts, SmileConfig config)
    : shared_(std::move(shared)), experts_(std::move(experts)), config_(config) {
    config_.validate();
    if (experts_.size() != config_.T) {
        throw Error(ErrorKind::Config, "SmileLayer: config says T=" + std::to_string(config_.T) + " but " +
                                           std::to_string(experts_.size()) + " experts were given");
    }
    const std::size_t m = shared_.W.rows();
    const std::size_t n = shared_.W.cols();
    if (shared_.b && shared_.b->dim() != m) throw Error(ErrorKind::Shape, "SmileLayer: shared bias dim mismatch");
    for (std::size_t i = 0; i < experts_.size(); ++i) {
        const LowRankExpert& e = experts_[i];
        const bool ok = e.U.rows() == m && e.V.rows() == n && e.V_gate.rows() == n && e.U.cols() == e.sigma.dim() &&
                        e.V.cols() == e.sigma.dim() && (!e.delta_b || e.delta_b->dim() == m);
        if (!ok) {
            throw Error(ErrorKind::Shape, "SmileLayer: expert " + std::to_string(i) + " factors U" +
                                              e.U.shape_string() + " V" + e.V.shape_string() +
                                              " do not match shared weight " + shared_.W.shape_string());
        }
    }
}

RouterOutput SmileLayer::route(const DenseVector& x) const {
    if (x.dim() != in_dim()) {
        throw Error(ErrorKind::Shape, "route: input dim " + std::to_string(x.dim()) + " != " + std::to_string(in_dim()));
    }
    const std::size_t t = experts_.size();
    RouterOutput out;
    out.logits = DenseVector(t);
    for (std::size_t i = 0; i < t; ++i) out.logits[i] = experts_[i].gate_logit(x);

    const double max_logit = *std::max_element(out.logits.values().begin(), out.logits.values().end());
    out.probs = DenseVector(t);
    double z = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        out.probs[i] = std::exp(out.logits[i] - max_logit);
        z += out.probs[i];
    }
    for (std::size_t i = 0; i < t; ++i) out.probs[i] /= z;

    std::vector<std::size_t> order(t);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.probs[a] > out.probs[b]; });
    out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config_.top_k));

    out.weights = DenseVector(t);
    double mass = 0.0;
    for (std::size_t i : out.selected) mass += out.probs[i];
    for (std::size_t i : out.selected) out.weights[i] = out.probs[i] / mass;
    return out;
}

DenseVector SmileLayer::forward(const DenseVector& x) const { return forward(x, route(x)); }

DenseVector SmileLayer::forward(const DenseVector& x, const RouterOutput& routing) const {
    DenseVector y = matvec(shared_.W, x);
    if (shared_.b) y = add(y, *shared_.b);
    for (std::size_t i : routing.selected) {
        const double w = routing.weights[i];
        const LowRankExpert& e = experts_[i];
        if (e.k_eff() > 0) {
            const DenseVector dy = e.apply(x);
            for (std::size_t r = 0; r < y.dim(); ++r) y[r] += w * dy[r];
        }
        if (e.delta_b) {
            for (std::size_t r = 0; r < y.dim(); ++r) y[r] += w * (*e.delta_b)[r];
        }
    }
    return y;
}

std::uint64_t SmileLayer::added_parameters() const noexcept {
    std::uint64_t n = 0;
    for (const LowRankExpert& e : experts_) n += e.parameter_count();
    return n;
}

SmileLayer upscale_layer(const LinearParams& base, const std::vector<LinearParams>& finetuned, SmileConfig cfg) {
    cfg.T = finetuned.size();
    cfg.validate();
    const DeltaSet ds = DeltaSet::from_finetuned(base, finetuned);
    std::vector<LowRankExpert> experts;
    experts.reserve(ds.tasks());
    for (const TaskDelta& d : ds.deltas()) experts.push_back(build_expert(d.dW, d.db, cfg));
    return SmileLayer(base, std::move(experts), cfg);
}

ParamCount param_count(std::uint64_t m, std::uint64_t n, const SmileConfig& cfg, bool has_bias) {
    const std::uint64_t per_expert = m * cfg.k + n * cfg.k + (has_bias ? m : 0);
    const std::uint64_t gates = n * cfg.T * cfg.k_gate;
    return {cfg.T * per_expert + gates, gates + cfg.top_k * per_expert};
}

double percent_truncated(std::uint64_t part, std::uint64_t whole) {
    if (whole == 0) return 0.0;
    // integer arithmetic: floor(1000 · part / whole) / 10
    return static_cast<double>((part * 1000) / whole) / 10.0;
}

std::string format_param_summary(const ParamCount& pc, std::uint64_t original) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "+%llu params (%.1f%%), %llu activated (%.1f%%)",
                  static_cast<unsigned long long>(pc.total_added), percent_truncated(pc.total_added, original),
                  static_cast<unsigned long long>(pc.activated_per_token),
                  percent_truncated(pc.activated_per_token, original));
    return buf;
}

} // namespace smile
