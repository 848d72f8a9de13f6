#include "gmeasure/io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gmeasure/hash.hpp"

namespace gmeasure {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'M', 'B', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void append_floats(std::vector<unsigned char>& payload, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    std::size_t at = payload.size();
    payload.resize(at + v.size() * 4);
    // native is little-endian on every supported target; pin it anyway
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &v[i], 4);
        for (int b = 0; b < 4; ++b)
            payload[at + i * 4 + static_cast<std::size_t>(b)] =
                static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
}

std::vector<float> read_floats(const std::vector<unsigned char>& payload, std::size_t offset,
                               std::size_t count) {
    std::vector<float> v(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = read_u32(payload.data() + offset + i * 4);
        std::memcpy(&v[i], &bits, 4);
    }
    return v;
}

struct TensorRef {
    std::size_t offset;
    std::size_t byte_size;
};

void check_offsets(std::vector<TensorRef> refs, std::size_t payload_size) {
    std::sort(refs.begin(), refs.end(),
              [](const TensorRef& a, const TensorRef& b) { return a.offset < b.offset; });
    std::size_t cursor = 0;
    for (const auto& r : refs) {
        if (r.offset < cursor)
            throw IoError("overlapping tensor offsets in header");
        if (r.offset + r.byte_size > payload_size)
            throw IoError("tensor offset out of payload bounds");
        cursor = r.offset + r.byte_size;
    }
}

void write_container(const std::string& path, const json& header,
                     const std::vector<unsigned char>& payload) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    std::string header_text = header.dump();
    os.write(kMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(header_text.size()));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
    write_u64(os, fnv1a64(payload.data(), payload.size()));
    if (!os) throw IoError("write failed for '" + path + "'");
}

std::pair<json, std::vector<unsigned char>> read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IoError("'" + path + "' is not a GMB1 container");
    std::uint32_t header_len = read_u32(bytes.data() + 4);
    std::size_t payload_start = 8 + header_len;
    if (bytes.size() < payload_start + 8) throw IoError("'" + path + "' is truncated");
    std::size_t payload_size = bytes.size() - payload_start - 8;
    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    } catch (const json::exception& e) {
        throw IoError("bad header in '" + path + "': " + e.what());
    }
    std::vector<unsigned char> payload(bytes.begin() + static_cast<std::ptrdiff_t>(payload_start),
                                       bytes.end() - 8);
    std::uint64_t declared = read_u64(bytes.data() + bytes.size() - 8);
    std::uint64_t actual = fnv1a64(payload.data(), payload_size);
    if (declared != actual)
        throw ChecksumMismatch("checksum mismatch in '" + path + "'");
    return {std::move(header), std::move(payload)};
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) {
    return fnv1a64_bytes(data, size);
}

void save_model(const Network& net, const std::string& path) {
    json header;
    header["kind"] = "model";
    header["version"] = kModelFormatVersion;
    header["input_shape"] = net.input_shape();
    header["num_classes"] = net.num_classes();
    std::vector<unsigned char> payload;
    json layers = json::array();
    for (const Layer& l : net.layers()) {
        json jl;
        jl["type"] = layer_type_name(l);
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            jl["out_dim"] = d->out_dim;
            jl["in_dim"] = d->in_dim;
            jl["weight_offset"] = payload.size();
            append_floats(payload, d->weight);
            jl["bias_offset"] = payload.size();
            append_floats(payload, d->bias);
        } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
            jl["out_channels"] = c->out_channels;
            jl["in_channels"] = c->in_channels;
            jl["kernel_h"] = c->kernel_h;
            jl["kernel_w"] = c->kernel_w;
            jl["stride"] = c->stride;
            jl["padding"] = c->padding;
            jl["kernel_offset"] = payload.size();
            append_floats(payload, c->kernel);
            jl["bias_offset"] = payload.size();
            append_floats(payload, c->bias);
        } else if (const auto* p = std::get_if<AvgPoolLayer>(&l)) {
            jl["window"] = p->window;
            jl["stride"] = p->stride;
        }
        layers.push_back(std::move(jl));
    }
    header["layers"] = std::move(layers);
    write_container(path, header, payload);
}

Network load_model(const std::string& path) {
    auto [header, payload] = read_container(path);
    if (header.value("kind", "") != "model")
        throw IoError("'" + path + "' is not a model file");
    int version = header.value("version", -1);
    if (version != kModelFormatVersion)
        throw VersionMismatch("model format version " + std::to_string(version) + ", expected " +
                              std::to_string(kModelFormatVersion));
    Shape input_shape = header.at("input_shape").get<Shape>();
    int num_classes = header.at("num_classes").get<int>();
    std::vector<TensorRef> refs;
    std::vector<Layer> layers;
    for (const json& jl : header.at("layers")) {
        std::string type = jl.at("type").get<std::string>();
        if (type == "dense") {
            DenseLayer d;
            d.out_dim = jl.at("out_dim").get<int>();
            d.in_dim = jl.at("in_dim").get<int>();
            if (d.out_dim <= 0 || d.in_dim <= 0) throw IoError("bad dense dims");
            std::size_t w_off = jl.at("weight_offset").get<std::size_t>();
            std::size_t b_off = jl.at("bias_offset").get<std::size_t>();
            std::size_t w_count = static_cast<std::size_t>(d.out_dim) * static_cast<std::size_t>(d.in_dim);
            refs.push_back({w_off, w_count * 4});
            refs.push_back({b_off, static_cast<std::size_t>(d.out_dim) * 4});
            check_offsets(refs, payload.size());
            d.weight = read_floats(payload, w_off, w_count);
            d.bias = read_floats(payload, b_off, static_cast<std::size_t>(d.out_dim));
            layers.emplace_back(std::move(d));
        } else if (type == "conv2d") {
            Conv2dLayer c;
            c.out_channels = jl.at("out_channels").get<int>();
            c.in_channels = jl.at("in_channels").get<int>();
            c.kernel_h = jl.at("kernel_h").get<int>();
            c.kernel_w = jl.at("kernel_w").get<int>();
            c.stride = jl.at("stride").get<int>();
            c.padding = jl.at("padding").get<int>();
            if (c.out_channels <= 0 || c.in_channels <= 0 || c.kernel_h <= 0 || c.kernel_w <= 0 ||
                c.stride <= 0 || c.padding < 0)
                throw IoError("bad conv2d attributes");
            std::size_t k_off = jl.at("kernel_offset").get<std::size_t>();
            std::size_t b_off = jl.at("bias_offset").get<std::size_t>();
            std::size_t k_count = static_cast<std::size_t>(c.out_channels) * c.in_channels *
                                  c.kernel_h * c.kernel_w;
            refs.push_back({k_off, k_count * 4});
            refs.push_back({b_off, static_cast<std::size_t>(c.out_channels) * 4});
            check_offsets(refs, payload.size());
            c.kernel = read_floats(payload, k_off, k_count);
            c.bias = read_floats(payload, b_off, static_cast<std::size_t>(c.out_channels));
            layers.emplace_back(std::move(c));
        } else if (type == "relu") {
            layers.emplace_back(ReluLayer{});
        } else if (type == "flatten") {
            layers.emplace_back(FlattenLayer{});
        } else if (type == "avgpool") {
            AvgPoolLayer p;
            p.window = jl.at("window").get<int>();
            p.stride = jl.at("stride").get<int>();
            if (p.window <= 0 || p.stride <= 0) throw IoError("bad avgpool attributes");
            layers.emplace_back(p);
        } else {
            throw UnknownLayerType("unknown layer type '" + type + "' in '" + path + "'");
        }
    }
    return Network(std::move(input_shape), std::move(layers), num_classes);
}

void save_dataset(const LabeledDataset& data, const std::string& path) {
    data.validate();
    json header;
    header["kind"] = "dataset";
    header["version"] = kDatasetFormatVersion;
    header["input_shape"] = data.input_shape;
    header["num_classes"] = data.num_classes;
    header["count"] = data.size();
    std::vector<unsigned char> payload;
    header["inputs_offset"] = payload.size();
    for (const auto& x : data.inputs) append_floats(payload, x);
    header["labels_offset"] = payload.size();
    for (int label : data.labels) {
        for (int b = 0; b < 4; ++b)
            payload.push_back(static_cast<unsigned char>(
                (static_cast<std::uint32_t>(label) >> (8 * b)) & 0xff));
    }
    write_container(path, header, payload);
}

LabeledDataset load_dataset(const std::string& path) {
    auto [header, payload] = read_container(path);
    if (header.value("kind", "") != "dataset")
        throw IoError("'" + path + "' is not a dataset file");
    int version = header.value("version", -1);
    if (version != kDatasetFormatVersion)
        throw VersionMismatch("dataset format version " + std::to_string(version) +
                              ", expected " + std::to_string(kDatasetFormatVersion));
    LabeledDataset data;
    data.input_shape = header.at("input_shape").get<Shape>();
    data.num_classes = header.at("num_classes").get<int>();
    std::size_t count = header.at("count").get<std::size_t>();
    std::size_t per_input = shape_size(data.input_shape);
    std::size_t in_off = header.at("inputs_offset").get<std::size_t>();
    std::size_t lab_off = header.at("labels_offset").get<std::size_t>();
    check_offsets({{in_off, count * per_input * 4}, {lab_off, count * 4}}, payload.size());
    for (std::size_t i = 0; i < count; ++i)
        data.inputs.push_back(read_floats(payload, in_off + i * per_input * 4, per_input));
    for (std::size_t i = 0; i < count; ++i)
        data.labels.push_back(static_cast<int>(read_u32(payload.data() + lab_off + i * 4)));
    data.validate();
    return data;
}

void save_manifest(const ZooManifest& manifest, const std::string& path) {
    json doc;
    doc["kind"] = "zoo-manifest";
    doc["version"] = 1;
    doc["task"] = manifest.task_description;
    json models = json::array();
    for (const ZooEntry& e : manifest.entries) {
        json jm;
        jm["model_id"] = e.model_id;
        jm["path"] = e.model_path;
        jm["hyperparams"] = e.hyperparams;
        jm["train_error"] = e.train_error;
        jm["test_error"] = e.test_error;
        jm["measure_values"] = e.measure_values;
        jm["did_fit"] = e.did_fit;
        models.push_back(std::move(jm));
    }
    doc["models"] = std::move(models);
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << doc.dump(2) << "\n";
}

ZooManifest load_manifest(const std::string& path, bool verify_models) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        throw IoError("bad manifest '" + path + "': " + e.what());
    }
    if (doc.value("kind", "") != "zoo-manifest")
        throw IoError("'" + path + "' is not a zoo manifest");
    ZooManifest manifest;
    manifest.task_description = doc.value("task", "");
    for (const json& jm : doc.at("models")) {
        ZooEntry e;
        e.model_id = jm.at("model_id").get<std::string>();
        e.model_path = jm.value("path", "");
        e.hyperparams = jm.at("hyperparams").get<std::map<std::string, std::string>>();
        e.train_error = jm.at("train_error").get<double>();
        e.test_error = jm.at("test_error").get<double>();
        if (jm.contains("measure_values"))
            e.measure_values = jm.at("measure_values").get<std::map<std::string, double>>();
        e.did_fit = jm.value("did_fit", true);
        manifest.entries.push_back(std::move(e));
    }
    if (!manifest.entries.empty()) {
        const auto& keys = manifest.entries.front().hyperparams;
        for (const auto& e : manifest.entries)
            if (e.hyperparams.size() != keys.size())
                throw ValidationError("hyperparameter key sets differ across manifest entries");
    }
    if (verify_models) {
        std::filesystem::path base = std::filesystem::path(path).parent_path();
        for (const auto& e : manifest.entries) {
            if (e.model_path.empty())
                throw ValidationError("model " + e.model_id + " has no file path");
            load_model((base / e.model_path).string());
        }
    }
    return manifest;
}

}  // namespace gmeasure
