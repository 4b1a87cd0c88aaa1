#include "smile/model.hpp"

#include "smile/error.hpp"

namespace smile {

LinearParams load_linear(const TensorStore& store, const std::string& layer) {
    LinearParams p{store.matrix(weight_name(layer)), std::nullopt};
    if (store.contains(bias_name(layer))) p.b = store.vector(bias_name(layer));
    return p;
}

void store_linear(TensorStore& store, const std::string& layer, const LinearParams& p, Dtype dtype) {
    store.put_matrix(weight_name(layer), p.W, dtype);
    if (p.b) store.put_vector(bias_name(layer), *p.b, dtype);
}

DenseVector relu(DenseVector x) {
    for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
    return x;
}

DenseModel::DenseModel(ModelSpec spec, const TensorStore& store) : spec_(std::move(spec)) {
    spec_.validate();
    for (const LayerSpec& l : spec_.layers) {
        if (!l.is_affine()) continue;
        LinearParams p = load_linear(store, l.name);
        if (p.W.rows() != l.out_dim || p.W.cols() != l.in_dim) {
            throw Error(ErrorKind::Mismatch, "DenseModel: '" + weight_name(l.name) + "' is " + p.W.shape_string() +
                                                 ", spec expects (" + std::to_string(l.out_dim) + "x" +
                                                 std::to_string(l.in_dim) + ")");
        }
        if (l.has_bias && !p.b) throw Error(ErrorKind::Mismatch, "DenseModel: missing '" + bias_name(l.name) + "'");
        if (!l.has_bias) p.b.reset();
        affine_.push_back(std::move(p));
    }
}

DenseModel::DenseModel(ModelSpec spec, std::vector<LinearParams> affine_layers)
    : spec_(std::move(spec)), affine_(std::move(affine_layers)) {
    spec_.validate();
    std::size_t count = 0;
    for (const LayerSpec& l : spec_.layers) count += l.is_affine() ? 1 : 0;
    if (count != affine_.size()) throw Error(ErrorKind::Mismatch, "DenseModel: affine layer count mismatch");
}

DenseVector DenseModel::forward(const DenseVector& x) const {
    DenseVector h = x;
    std::size_t a = 0;
    for (const LayerSpec& l : spec_.layers) {
        if (!l.is_affine()) {
            h = relu(std::move(h));
            continue;
        }
        const LinearParams& p = affine_[a++];
        DenseVector y = matvec(p.W, h);
        if (p.b) y = add(y, *p.b);
        h = std::move(y);
    }
    return h;
}

ForwardFn DenseModel::as_function() const {
    return [this](const DenseVector& x) { return forward(x); };
}

TensorStore DenseModel::to_store(Dtype dtype) const {
    TensorStore store;
    std::size_t a = 0;
    for (const LayerSpec& l : spec_.layers)
        if (l.is_affine()) store_linear(store, l.name, affine_[a++], dtype);
    return store;
}

} // namespace smile
