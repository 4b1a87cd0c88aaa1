#pragma once

#include "smile/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace smile {

enum class Dtype { F32, F64 };

const char* to_string(Dtype dtype) noexcept;
std::size_t dtype_size(Dtype dtype) noexcept;

/// One named tensor: dtype, shape and little-endian payload.
struct TensorEntry {
    Dtype dtype = Dtype::F64;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> data;

    std::uint64_t element_count() const noexcept;
    bool operator==(const TensorEntry&) const = default;
};

/// Named-tensor container. On disk: u64 little-endian header length N, N bytes
/// of JSON header, then the raw data region. Compatible with the common
/// single-file safetensors layout for F32/F64 tensors.
class TensorStore {
public:
    void put(const std::string& name, TensorEntry entry);
    void put_matrix(const std::string& name, const DenseMatrix& m, Dtype dtype = Dtype::F64);
    void put_vector(const std::string& name, const DenseVector& v, Dtype dtype = Dtype::F64);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const TensorEntry& at(const std::string& name) const;
    /// Loads a rank-2 tensor (rank-1 is read as a single row) into 64-bit storage.
    DenseMatrix matrix(const std::string& name) const;
    /// Loads a rank-1 tensor into 64-bit storage.
    DenseVector vector(const std::string& name) const;

    const std::map<std::string, TensorEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    /// Total element count over all tensors.
    std::uint64_t parameter_count() const noexcept;

    /// Free-form string metadata, stored under the "__metadata__" header key.
    std::map<std::string, std::string>& metadata() noexcept { return metadata_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

    bool operator==(const TensorStore&) const = default;

private:
    std::map<std::string, TensorEntry> entries_;
    std::map<std::string, std::string> metadata_;
};

std::vector<std::uint8_t> serialize_store(const TensorStore& store);
TensorStore deserialize_store(const std::vector<std::uint8_t>& bytes);

/// Writes atomically (temp file + rename). Returns the number of bytes written.
std::uint64_t write_store(const TensorStore& store, const std::filesystem::path& path);
TensorStore read_store(const std::filesystem::path& path);

// Model architecture descriptor.

enum class LayerKind { Linear, Relu, Readout };

const char* to_string(LayerKind kind) noexcept;

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Linear;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    bool has_bias = true;

    bool is_affine() const noexcept { return kind != LayerKind::Relu; }
    bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
    std::vector<LayerSpec> layers;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    /// Throws Shape when adjacent dimensions do not chain.
    void validate() const;

    /// linear(in→hidden) · relu · readout(hidden→out)
    static ModelSpec mlp(std::size_t in, std::size_t hidden, std::size_t out, bool bias = true);
    /// single readout(in→out)
    static ModelSpec linear(std::size_t in, std::size_t out, bool bias = true);

    bool operator==(const ModelSpec&) const = default;
};

std::string weight_name(const std::string& layer);
std::string bias_name(const std::string& layer);

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);
void write_model_spec(const ModelSpec& spec, const std::filesystem::path& path);
ModelSpec read_model_spec(const std::filesystem::path& path);

/// Writes text atomically (temp file + rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

} // namespace smile
