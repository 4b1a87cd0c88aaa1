#pragma once

#include "smile/checkpoint_io.hpp"
#include "smile/model.hpp"
#include "smile/smile.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace smile {

/// Glob patterns (fnmatch syntax) over layer names; no patterns selects all.
struct LayerSelector {
    std::vector<std::string> patterns;
    bool matches(const std::string& layer) const;
};

/// Sidecar describing a fused bundle.
struct BundleMetadata {
    SmileConfig config;
    std::vector<std::string> layers; // upscaled layers, in name order

    std::string to_json() const;
    static BundleMetadata from_json(const std::string& text);
    bool operator==(const BundleMetadata&) const = default;
};

struct SmileBundle {
    TensorStore store;
    BundleMetadata meta;
};

struct LayerUpscaleSummary {
    std::string layer;
    std::size_t m = 0;
    std::size_t n = 0;
    bool has_bias = false;
    ParamCount nominal;          // param_count(m, n, cfg, has_bias)
    std::uint64_t stored_added = 0; // with ranks clamped to each delta
    bool all_deltas_zero = false;
};

struct UpscaleResult {
    SmileBundle bundle;
    std::vector<LayerUpscaleSummary> layers;
    std::vector<std::string> warnings;
    std::uint64_t base_parameters = 0;
};

struct UpscaleOptions {
    std::size_t jobs = 1;
    Dtype dtype = Dtype::F64;
};

/// Linear layers in a store: names of rank-2 "<layer>.weight" tensors.
std::vector<std::string> linear_layers(const TensorStore& store);

/// Replaces every selected linear layer of `base` by a SMILE layer built from
/// the matching layers of `experts`; every other tensor is copied verbatim.
/// Throws Mismatch with an itemized report when names or shapes disagree.
UpscaleResult upscale_model(const TensorStore& base, const std::vector<TensorStore>& experts,
                            const LayerSelector& selector, SmileConfig cfg, const UpscaleOptions& options = {});

std::filesystem::path sidecar_path(const std::filesystem::path& bundle_path);
void write_bundle(const SmileBundle& bundle, const std::filesystem::path& path);
SmileBundle read_bundle(const std::filesystem::path& path);

/// Reconstructs one SMILE layer from bundle tensors.
SmileLayer load_smile_layer(const TensorStore& store, const std::string& layer, const SmileConfig& cfg);

/// Feed-forward model whose affine layers are either plain or SMILE layers.
class SmileModel {
public:
    SmileModel(ModelSpec spec, const SmileBundle& bundle);

    const ModelSpec& spec() const noexcept { return spec_; }

    DenseVector forward(const DenseVector& x) const;
    /// Also records the router output of every SMILE layer, in layer order.
    DenseVector forward_traced(const DenseVector& x, std::vector<RouterOutput>& routes) const;
    ForwardFn as_function() const;

    std::vector<std::string> smile_layer_names() const;
    std::uint64_t base_parameters() const noexcept { return base_parameters_; }
    std::uint64_t added_parameters() const noexcept;
    /// (base + added) / base
    double normalized_parameter_count() const;

private:
    using Affine = std::variant<LinearParams, SmileLayer>;
    ModelSpec spec_;
    std::vector<Affine> affine_;
    std::uint64_t base_parameters_ = 0;
};

} // namespace smile
