#include "smile/bundle.hpp"

#include "smile/error.hpp"
#include "smile/parallel.hpp"

#include "json.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <sstream>

namespace smile {

using nlohmann::json;

namespace {

constexpr const char* kWeightSuffix = ".weight";

std::string shape_text(const std::vector<std::uint64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

std::string expert_name(const std::string& layer, std::size_t i, const char* part) {
    return layer + ".expert." + std::to_string(i) + "." + part;
}

std::string gate_name(const std::string& layer, std::size_t i) {
    return layer + ".gate." + std::to_string(i) + ".v";
}

bool is_zero(const std::optional<DenseVector>& v) {
    return !v || std::all_of(v->values().begin(), v->values().end(), [](double x) { return x == 0.0; });
}

} // namespace

bool LayerSelector::matches(const std::string& layer) const {
    if (patterns.empty()) return true;
    return std::any_of(patterns.begin(), patterns.end(),
                       [&](const std::string& p) { return fnmatch(p.c_str(), layer.c_str(), 0) == 0; });
}

std::string BundleMetadata::to_json() const {
    json j{{"k", config.k}, {"k_gate", config.k_gate}, {"top_k", config.top_k}, {"T", config.T}, {"layers", layers}};
    return j.dump(2) + "\n";
}

BundleMetadata BundleMetadata::from_json(const std::string& text) {
    BundleMetadata meta;
    try {
        const json j = json::parse(text);
        meta.config.k = j.at("k").get<std::size_t>();
        meta.config.k_gate = j.at("k_gate").get<std::size_t>();
        meta.config.top_k = j.at("top_k").get<std::size_t>();
        meta.config.T = j.at("T").get<std::size_t>();
        meta.layers = j.at("layers").get<std::vector<std::string>>();
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::MalformedHeader, std::string("bundle metadata: ") + ex.what());
    }
    meta.config.validate();
    return meta;
}

std::vector<std::string> linear_layers(const TensorStore& store) {
    std::vector<std::string> out;
    const std::string suffix = kWeightSuffix;
    for (const auto& [name, e] : store.entries()) {
        if (e.shape.size() == 2 && name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            out.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    return out;
}

UpscaleResult upscale_model(const TensorStore& base, const std::vector<TensorStore>& experts,
                            const LayerSelector& selector, SmileConfig cfg, const UpscaleOptions& options) {
    if (experts.empty()) throw Error(ErrorKind::Argument, "upscale_model: at least one expert model is required");
    cfg.T = experts.size();
    cfg.validate();

    std::vector<std::string> selected;
    for (const std::string& layer : linear_layers(base))
        if (selector.matches(layer)) selected.push_back(layer);
    if (selected.empty()) throw Error(ErrorKind::Argument, "upscale_model: no linear layer matches the selector");

    std::vector<std::string> problems;
    for (const std::string& layer : selected) {
        for (const std::string& name : {weight_name(layer), bias_name(layer)}) {
            const bool in_base = base.contains(name);
            for (std::size_t j = 0; j < experts.size(); ++j) {
                const bool in_expert = experts[j].contains(name);
                if (in_base && !in_expert) {
                    problems.push_back("expert " + std::to_string(j) + ": missing '" + name + "'");
                } else if (!in_base && in_expert) {
                    problems.push_back("expert " + std::to_string(j) + ": unexpected '" + name + "' absent from base");
                } else if (in_base && base.at(name).shape != experts[j].at(name).shape) {
                    problems.push_back("expert " + std::to_string(j) + ": '" + name + "' has shape " +
                                       shape_text(experts[j].at(name).shape) + ", base has " +
                                       shape_text(base.at(name).shape));
                }
            }
        }
    }
    if (!problems.empty()) {
        std::ostringstream msg;
        msg << "upscale_model: " << problems.size() << " mismatch(es):";
        for (const std::string& p : problems) msg << "\n  - " << p;
        throw Error(ErrorKind::Mismatch, msg.str());
    }

    std::vector<std::optional<SmileLayer>> layers(selected.size());
    parallel_for(selected.size(), options.jobs, [&](std::size_t i) {
        const LinearParams shared = load_linear(base, selected[i]);
        std::vector<LinearParams> finetuned;
        finetuned.reserve(experts.size());
        for (const TensorStore& e : experts) finetuned.push_back(load_linear(e, selected[i]));
        layers[i] = upscale_layer(shared, finetuned, cfg);
    });

    UpscaleResult result;
    result.bundle.meta.config = cfg;
    result.bundle.meta.layers = selected;
    result.base_parameters = base.parameter_count();
    TensorStore& out = result.bundle.store;
    for (const auto& [name, e] : base.entries()) {
        const bool replaced = std::any_of(selected.begin(), selected.end(), [&](const std::string& layer) {
            return name == weight_name(layer) || name == bias_name(layer);
        });
        if (!replaced) out.put(name, e);
    }
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const std::string& layer = selected[i];
        const SmileLayer& sl = *layers[i];
        out.put_matrix(layer + ".shared.weight", sl.shared().W, options.dtype);
        if (sl.shared().b) out.put_vector(layer + ".shared.bias", *sl.shared().b, options.dtype);
        bool all_zero = true;
        for (std::size_t j = 0; j < sl.experts().size(); ++j) {
            const LowRankExpert& e = sl.experts()[j];
            out.put_matrix(expert_name(layer, j, "u"), e.U, options.dtype);
            out.put_vector(expert_name(layer, j, "s"), e.sigma, options.dtype);
            out.put_matrix(expert_name(layer, j, "v"), e.V, options.dtype);
            if (e.delta_b) out.put_vector(expert_name(layer, j, "delta_b"), *e.delta_b, options.dtype);
            out.put_matrix(gate_name(layer, j), e.V_gate, options.dtype);
            if (e.k_eff() > 0 || !is_zero(e.delta_b)) all_zero = false;
        }

        LayerUpscaleSummary s;
        s.layer = layer;
        s.m = sl.out_dim();
        s.n = sl.in_dim();
        s.has_bias = sl.shared().b.has_value();
        s.nominal = param_count(s.m, s.n, cfg, s.has_bias);
        s.stored_added = sl.added_parameters();
        s.all_deltas_zero = all_zero;
        if (all_zero) result.warnings.push_back("layer '" + layer + "': all deltas zero, experts are null");
        result.layers.push_back(std::move(s));
    }
    return result;
}

std::filesystem::path sidecar_path(const std::filesystem::path& bundle_path) {
    std::filesystem::path p = bundle_path;
    p.replace_extension(".smile.json");
    return p;
}

void write_bundle(const SmileBundle& bundle, const std::filesystem::path& path) {
    write_store(bundle.store, path);
    write_text_file(sidecar_path(path), bundle.meta.to_json());
}

SmileBundle read_bundle(const std::filesystem::path& path) {
    SmileBundle b;
    b.store = read_store(path);
    b.meta = BundleMetadata::from_json(read_text_file(sidecar_path(path)));
    return b;
}

SmileLayer load_smile_layer(const TensorStore& store, const std::string& layer, const SmileConfig& cfg) {
    LinearParams shared{store.matrix(layer + ".shared.weight"), std::nullopt};
    if (store.contains(layer + ".shared.bias")) shared.b = store.vector(layer + ".shared.bias");
    std::vector<LowRankExpert> experts;
    experts.reserve(cfg.T);
    for (std::size_t j = 0; j < cfg.T; ++j) {
        LowRankExpert e;
        e.U = store.matrix(expert_name(layer, j, "u"));
        e.sigma = store.vector(expert_name(layer, j, "s"));
        e.V = store.matrix(expert_name(layer, j, "v"));
        if (store.contains(expert_name(layer, j, "delta_b"))) e.delta_b = store.vector(expert_name(layer, j, "delta_b"));
        e.V_gate = store.matrix(gate_name(layer, j));
        experts.push_back(std::move(e));
    }
    return SmileLayer(std::move(shared), std::move(experts), cfg);
}

SmileModel::SmileModel(ModelSpec spec, const SmileBundle& bundle) : spec_(std::move(spec)) {
    spec_.validate();
    const auto& smile_layers = bundle.meta.layers;
    for (const LayerSpec& l : spec_.layers) {
        if (!l.is_affine()) continue;
        const bool upscaled = std::find(smile_layers.begin(), smile_layers.end(), l.name) != smile_layers.end();
        if (upscaled) {
            SmileLayer sl = load_smile_layer(bundle.store, l.name, bundle.meta.config);
            if (sl.out_dim() != l.out_dim || sl.in_dim() != l.in_dim)
                throw Error(ErrorKind::Mismatch, "SmileModel: layer '" + l.name + "' shape disagrees with spec");
            base_parameters_ += sl.shared().W.size() + (sl.shared().b ? sl.shared().b->dim() : 0);
            affine_.emplace_back(std::move(sl));
        } else {
            LinearParams p = load_linear(bundle.store, l.name);
            if (p.W.rows() != l.out_dim || p.W.cols() != l.in_dim)
                throw Error(ErrorKind::Mismatch, "SmileModel: layer '" + l.name + "' shape disagrees with spec");
            base_parameters_ += p.W.size() + (p.b ? p.b->dim() : 0);
            affine_.emplace_back(std::move(p));
        }
    }
}

DenseVector SmileModel::forward(const DenseVector& x) const {
    std::vector<RouterOutput> routes;
    return forward_traced(x, routes);
}

DenseVector SmileModel::forward_traced(const DenseVector& x, std::vector<RouterOutput>& routes) const {
    routes.clear();
    DenseVector h = x;
    std::size_t a = 0;
    for (const LayerSpec& l : spec_.layers) {
        if (!l.is_affine()) {
            h = relu(std::move(h));
            continue;
        }
        const Affine& layer = affine_[a++];
        if (const auto* sl = std::get_if<SmileLayer>(&layer)) {
            RouterOutput r = sl->route(h);
            h = sl->forward(h, r);
            routes.push_back(std::move(r));
        } else {
            const LinearParams& p = std::get<LinearParams>(layer);
            DenseVector y = matvec(p.W, h);
            if (p.b) y = add(y, *p.b);
            h = std::move(y);
        }
    }
    return h;
}

ForwardFn SmileModel::as_function() const {
    return [this](const DenseVector& x) { return forward(x); };
}

std::vector<std::string> SmileModel::smile_layer_names() const {
    std::vector<std::string> names;
    std::size_t a = 0;
    for (const LayerSpec& l : spec_.layers) {
        if (!l.is_affine()) continue;
        if (std::holds_alternative<SmileLayer>(affine_[a++])) names.push_back(l.name);
    }
    return names;
}

std::uint64_t SmileModel::added_parameters() const noexcept {
    std::uint64_t n = 0;
    for (const Affine& a : affine_)
        if (const auto* sl = std::get_if<SmileLayer>(&a)) n += sl->added_parameters();
    return n;
}

double SmileModel::normalized_parameter_count() const {
    return static_cast<double>(base_parameters_ + added_parameters()) / static_cast<double>(base_parameters_);
}

} // namespace smile
