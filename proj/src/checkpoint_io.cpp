#include "smile/checkpoint_io.hpp"

#include "smile/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace smile {

using nlohmann::json;

namespace {

template <typename T>
void store_le(T value, std::uint8_t* out) {
    std::memcpy(out, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(out, out + sizeof(T));
}

template <typename T>
T load_le(const std::uint8_t* in) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, in, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

std::vector<std::uint8_t> encode(std::span<const double> values, Dtype dtype) {
    std::vector<std::uint8_t> out(values.size() * dtype_size(dtype));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (dtype == Dtype::F32)
            store_le(static_cast<float>(values[i]), out.data() + 4 * i);
        else
            store_le(values[i], out.data() + 8 * i);
    }
    return out;
}

std::vector<double> decode(const TensorEntry& e) {
    const std::size_t count = static_cast<std::size_t>(e.element_count());
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = e.dtype == Dtype::F32 ? static_cast<double>(load_le<float>(e.data.data() + 4 * i))
                                       : load_le<double>(e.data.data() + 8 * i);
    }
    return out;
}

bool entry_finite(const TensorEntry& e) {
    const std::vector<double> values = decode(e);
    return all_finite(values);
}

[[noreturn]] void malformed(const std::string& what) {
    throw Error(ErrorKind::MalformedHeader, "read_store: " + what);
}

Dtype parse_dtype(const std::string& s) {
    if (s == "F32") return Dtype::F32;
    if (s == "F64") return Dtype::F64;
    throw Error(ErrorKind::UnknownDtype, "read_store: unsupported dtype '" + s + "'");
}

void atomic_write(const std::filesystem::path& path, const char* data, std::size_t size) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
        out.write(data, static_cast<std::streamsize>(size));
        if (!out) throw Error(ErrorKind::Io, "write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorKind::Io, "cannot move '" + tmp.string() + "' to '" + path.string() + "'");
    }
}

} // namespace

const char* to_string(Dtype dtype) noexcept { return dtype == Dtype::F32 ? "F32" : "F64"; }

std::size_t dtype_size(Dtype dtype) noexcept { return dtype == Dtype::F32 ? 4 : 8; }

std::uint64_t TensorEntry::element_count() const noexcept {
    std::uint64_t n = 1;
    for (std::uint64_t d : shape) n *= d;
    return n;
}

void TensorStore::put(const std::string& name, TensorEntry entry) {
    if (name.empty()) throw Error(ErrorKind::Argument, "TensorStore: tensor names must be nonempty");
    if (name == "__metadata__") throw Error(ErrorKind::Argument, "TensorStore: '__metadata__' is reserved");
    if (entry.data.size() != entry.element_count() * dtype_size(entry.dtype)) {
        throw Error(ErrorKind::Shape, "TensorStore: '" + name + "' has " + std::to_string(entry.data.size()) +
                                          " bytes, shape implies " +
                                          std::to_string(entry.element_count() * dtype_size(entry.dtype)));
    }
    entries_[name] = std::move(entry);
}

void TensorStore::put_matrix(const std::string& name, const DenseMatrix& m, Dtype dtype) {
    put(name, TensorEntry{dtype, {m.rows(), m.cols()}, encode(m.values(), dtype)});
}

void TensorStore::put_vector(const std::string& name, const DenseVector& v, Dtype dtype) {
    put(name, TensorEntry{dtype, {v.dim()}, encode(v.values(), dtype)});
}

const TensorEntry& TensorStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(ErrorKind::Mismatch, "TensorStore: no tensor named '" + name + "'");
    return it->second;
}

DenseMatrix TensorStore::matrix(const std::string& name) const {
    const TensorEntry& e = at(name);
    if (e.shape.size() == 2) return DenseMatrix(e.shape[0], e.shape[1], decode(e));
    if (e.shape.size() == 1) return DenseMatrix(1, e.shape[0], decode(e));
    throw Error(ErrorKind::Shape, "TensorStore: '" + name + "' has rank " + std::to_string(e.shape.size()) +
                                      ", expected a matrix");
}

DenseVector TensorStore::vector(const std::string& name) const {
    const TensorEntry& e = at(name);
    if (e.shape.size() != 1) {
        throw Error(ErrorKind::Shape, "TensorStore: '" + name + "' has rank " + std::to_string(e.shape.size()) +
                                          ", expected a vector");
    }
    return DenseVector(decode(e));
}

std::uint64_t TensorStore::parameter_count() const noexcept {
    std::uint64_t n = 0;
    for (const auto& [name, e] : entries_) n += e.element_count();
    return n;
}

std::vector<std::uint8_t> serialize_store(const TensorStore& store) {
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : store.entries()) {
        if (!entry_finite(e)) throw Error(ErrorKind::Domain, "write_store: tensor '" + name + "' has non-finite entries");
        const std::uint64_t end = offset + e.data.size();
        header[name] = {{"dtype", to_string(e.dtype)}, {"shape", e.shape}, {"data_offsets", {offset, end}}};
        offset = end;
    }
    if (!store.metadata().empty()) header["__metadata__"] = store.metadata();

    std::string text;
    try {
        text = header.dump();
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::Argument, std::string("write_store: tensor names must be valid UTF-8 (") + ex.what() + ")");
    }
    std::vector<std::uint8_t> out(8 + text.size() + offset);
    store_le<std::uint64_t>(text.size(), out.data());
    std::memcpy(out.data() + 8, text.data(), text.size());
    std::size_t pos = 8 + text.size();
    for (const auto& [name, e] : store.entries()) {
        std::memcpy(out.data() + pos, e.data.data(), e.data.size());
        pos += e.data.size();
    }
    return out;
}

TensorStore deserialize_store(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) throw Error(ErrorKind::Truncated, "read_store: file shorter than the 8-byte header length");
    const std::uint64_t header_len = load_le<std::uint64_t>(bytes.data());
    if (header_len > bytes.size() - 8) {
        throw Error(ErrorKind::Truncated, "read_store: header length " + std::to_string(header_len) +
                                              " exceeds file size " + std::to_string(bytes.size()));
    }
    const std::uint64_t data_len = bytes.size() - 8 - header_len;
    const std::uint8_t* data = bytes.data() + 8 + header_len;

    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::parse_error& ex) {
        malformed(std::string("invalid JSON header: ") + ex.what());
    }
    if (!header.is_object()) malformed("header is not a JSON object");

    struct Span {
        std::uint64_t begin, end;
        std::string name;
    };
    std::vector<Span> spans;
    TensorStore store;
    for (auto it = header.begin(); it != header.end(); ++it) {
        const std::string& name = it.key();
        const json& v = it.value();
        if (name == "__metadata__") {
            if (!v.is_object()) malformed("__metadata__ must be an object");
            for (auto m = v.begin(); m != v.end(); ++m) {
                if (!m.value().is_string()) malformed("__metadata__ values must be strings");
                store.metadata()[m.key()] = m.value().get<std::string>();
            }
            continue;
        }
        if (!v.is_object() || !v.contains("dtype") || !v.contains("shape") || !v.contains("data_offsets"))
            malformed("entry '" + name + "' lacks dtype/shape/data_offsets");
        if (!v["dtype"].is_string()) malformed("entry '" + name + "' dtype is not a string");
        TensorEntry e;
        e.dtype = parse_dtype(v["dtype"].get<std::string>());
        if (!v["shape"].is_array()) malformed("entry '" + name + "' shape is not an array");
        for (const json& d : v["shape"]) {
            if (!d.is_number_unsigned()) malformed("entry '" + name + "' shape has a non-integer dimension");
            e.shape.push_back(d.get<std::uint64_t>());
        }
        const json& off = v["data_offsets"];
        if (!off.is_array() || off.size() != 2 || !off[0].is_number_unsigned() || !off[1].is_number_unsigned())
            malformed("entry '" + name + "' data_offsets must be two unsigned integers");
        const std::uint64_t begin = off[0].get<std::uint64_t>();
        const std::uint64_t end = off[1].get<std::uint64_t>();
        if (begin > end) malformed("entry '" + name + "' has begin > end");
        if (end > data_len) {
            throw Error(ErrorKind::Truncated, "read_store: entry '" + name + "' ends at " + std::to_string(end) +
                                                  " beyond data region of " + std::to_string(data_len) + " bytes");
        }
        if (end - begin != e.element_count() * dtype_size(e.dtype))
            malformed("entry '" + name + "' byte length does not match its shape");
        e.data.assign(data + begin, data + end);
        spans.push_back({begin, end, name});
        store.put(name, std::move(e));
    }

    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
        return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
    });
    std::uint64_t cursor = 0;
    for (const Span& s : spans) {
        if (s.begin < cursor) throw Error(ErrorKind::Overlap, "read_store: entry '" + s.name + "' overlaps its predecessor");
        if (s.begin > cursor) throw Error(ErrorKind::Overlap, "read_store: gap before entry '" + s.name + "'");
        cursor = s.end;
    }
    if (cursor != data_len) {
        throw Error(ErrorKind::Overlap, "read_store: " + std::to_string(data_len - cursor) +
                                            " trailing bytes not covered by any tensor");
    }
    return store;
}

std::uint64_t write_store(const TensorStore& store, const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = serialize_store(store);
    atomic_write(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
    return bytes.size();
}

TensorStore read_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_store(bytes);
}

// ---------------------------------------------------------------------------

const char* to_string(LayerKind kind) noexcept {
    switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Relu: return "relu";
    case LayerKind::Readout: return "readout";
    }
    return "?";
}

std::size_t ModelSpec::input_dim() const {
    if (layers.empty()) throw Error(ErrorKind::Argument, "ModelSpec: no layers");
    return layers.front().in_dim;
}

std::size_t ModelSpec::output_dim() const {
    if (layers.empty()) throw Error(ErrorKind::Argument, "ModelSpec: no layers");
    return layers.back().out_dim;
}

void ModelSpec::validate() const {
    if (layers.empty()) throw Error(ErrorKind::Argument, "ModelSpec: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.name.empty()) throw Error(ErrorKind::Argument, "ModelSpec: layer " + std::to_string(i) + " has no name");
        if (l.in_dim == 0 || l.out_dim == 0)
            throw Error(ErrorKind::Shape, "ModelSpec: layer '" + l.name + "' has a zero dimension");
        if (l.kind == LayerKind::Relu && l.in_dim != l.out_dim)
            throw Error(ErrorKind::Shape, "ModelSpec: relu layer '" + l.name + "' must preserve its dimension");
        if (i > 0 && layers[i - 1].out_dim != l.in_dim) {
            throw Error(ErrorKind::Shape, "ModelSpec: layer '" + layers[i - 1].name + "' outputs " +
                                              std::to_string(layers[i - 1].out_dim) + " but '" + l.name +
                                              "' expects " + std::to_string(l.in_dim));
        }
    }
}

ModelSpec ModelSpec::mlp(std::size_t in, std::size_t hidden, std::size_t out, bool bias) {
    return ModelSpec{{{"fc1", LayerKind::Linear, in, hidden, bias},
                      {"act1", LayerKind::Relu, hidden, hidden, false},
                      {"head", LayerKind::Readout, hidden, out, bias}}};
}

ModelSpec ModelSpec::linear(std::size_t in, std::size_t out, bool bias) {
    return ModelSpec{{{"head", LayerKind::Readout, in, out, bias}}};
}

std::string weight_name(const std::string& layer) { return layer + ".weight"; }
std::string bias_name(const std::string& layer) { return layer + ".bias"; }

std::string model_spec_to_json(const ModelSpec& spec) {
    json layers = json::array();
    for (const LayerSpec& l : spec.layers) {
        layers.push_back({{"name", l.name},
                          {"kind", to_string(l.kind)},
                          {"in_dim", l.in_dim},
                          {"out_dim", l.out_dim},
                          {"has_bias", l.has_bias}});
    }
    return json{{"layers", layers}}.dump(2) + "\n";
}

ModelSpec model_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw Error(ErrorKind::MalformedHeader, std::string("model spec: invalid JSON: ") + ex.what());
    }
    ModelSpec spec;
    try {
        for (const json& l : j.at("layers")) {
            LayerSpec layer;
            layer.name = l.at("name").get<std::string>();
            const std::string kind = l.at("kind").get<std::string>();
            if (kind == "linear")
                layer.kind = LayerKind::Linear;
            else if (kind == "relu")
                layer.kind = LayerKind::Relu;
            else if (kind == "readout")
                layer.kind = LayerKind::Readout;
            else
                throw Error(ErrorKind::MalformedHeader, "model spec: unknown layer kind '" + kind + "'");
            layer.in_dim = l.at("in_dim").get<std::size_t>();
            layer.out_dim = l.at("out_dim").get<std::size_t>();
            layer.has_bias = l.value("has_bias", layer.kind != LayerKind::Relu);
            spec.layers.push_back(std::move(layer));
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::MalformedHeader, std::string("model spec: ") + ex.what());
    }
    spec.validate();
    return spec;
}

void write_model_spec(const ModelSpec& spec, const std::filesystem::path& path) {
    write_text_file(path, model_spec_to_json(spec));
}

ModelSpec read_model_spec(const std::filesystem::path& path) { return model_spec_from_json(read_text_file(path)); }

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    atomic_write(path, text.data(), text.size());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace smile
