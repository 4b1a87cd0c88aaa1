#pragma once

#include "smile/checkpoint_io.hpp"
#include "smile/fusion.hpp"
#include "smile/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace smile {

using ForwardFn = std::function<DenseVector(const DenseVector&)>;

/// Plain feed-forward model: affine layers loaded from a store, relu between.
class DenseModel {
public:
    DenseModel(ModelSpec spec, const TensorStore& store);
    DenseModel(ModelSpec spec, std::vector<LinearParams> affine_layers);

    const ModelSpec& spec() const noexcept { return spec_; }
    /// Parameters of each affine layer, in spec order (relu layers skipped).
    const std::vector<LinearParams>& affine() const noexcept { return affine_; }

    DenseVector forward(const DenseVector& x) const;
    ForwardFn as_function() const;

    TensorStore to_store(Dtype dtype = Dtype::F64) const;

private:
    ModelSpec spec_;
    std::vector<LinearParams> affine_;
};

/// Reads "<layer>.weight" and, if present, "<layer>.bias".
LinearParams load_linear(const TensorStore& store, const std::string& layer);
void store_linear(TensorStore& store, const std::string& layer, const LinearParams& p, Dtype dtype = Dtype::F64);

DenseVector relu(DenseVector x);

} // namespace smile
