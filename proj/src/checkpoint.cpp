#include "sabr/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

#include "sabr/error.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint blob assumes a little-endian host");

namespace sabr {

using nlohmann::json;

std::string checkpoint_base(const std::string& path) {
    const std::string bin = ".bin", man = ".manifest.json";
    if (path.size() > bin.size() && path.compare(path.size() - bin.size(), bin.size(), bin) == 0)
        return path.substr(0, path.size() - bin.size());
    if (path.size() > man.size() && path.compare(path.size() - man.size(), man.size(), man) == 0)
        return path.substr(0, path.size() - man.size());
    return path;
}

namespace {

template <typename T>
size_t blob_scalars(const Layer<T>& l) {
    return l.weight.size() + l.bias.size() + l.run_mean.size() + l.run_var.size();
}

template <typename T>
json layer_manifest(const Layer<T>& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Linear:
            j["in"] = l.weight.dim(0);
            j["out"] = l.weight.dim(1);
            j["params"] = blob_scalars(l);
            break;
        case LayerKind::Conv2d:
            j["out_channels"] = l.weight.dim(0);
            j["in_channels"] = l.weight.dim(1);
            j["kh"] = l.weight.dim(2);
            j["kw"] = l.weight.dim(3);
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["params"] = blob_scalars(l);
            break;
        case LayerKind::BatchNormAffine:
            j["channels"] = l.weight.dim(0);
            j["params"] = blob_scalars(l);
            break;
        case LayerKind::ReLU:
            if (l.cs_override) j["cs_override"] = *l.cs_override;
            break;
        case LayerKind::Flatten:
            break;
    }
    return j;
}

template <typename T>
json manifest_of(const Network<T>& net) {
    json j;
    j["format_version"] = kCheckpointFormatVersion;
    j["input_shape"] = net.input_shape;
    j["num_classes"] = net.num_classes;
    json layers = json::array();
    size_t total = 0;
    for (const auto& l : net.layers) {
        layers.push_back(layer_manifest(l));
        total += blob_scalars(l);
    }
    j["layers"] = layers;
    j["total_params"] = total;
    return j;
}

template <typename T>
void append_tensor_f32(std::vector<float>& blob, const Tensor<T>& t) {
    for (size_t i = 0; i < t.size(); ++i) blob.push_back(static_cast<float>(t[i]));
}

}  // namespace

std::string manifest_json(const Network<float>& net) { return manifest_of(net).dump(2); }

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path) {
    const std::string base = checkpoint_base(path);
    {
        std::ofstream mf(base + ".manifest.json", std::ios::trunc);
        if (!mf) throw Error("cannot write " + base + ".manifest.json");
        mf << manifest_of(net).dump(2) << "\n";
    }
    std::vector<float> blob;
    for (const auto& l : net.layers) {
        append_tensor_f32(blob, l.weight);
        append_tensor_f32(blob, l.bias);
        append_tensor_f32(blob, l.run_mean);
        append_tensor_f32(blob, l.run_var);
    }
    std::ofstream bf(base + ".bin", std::ios::binary | std::ios::trunc);
    if (!bf) throw Error("cannot write " + base + ".bin");
    bf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

template <typename T>
Network<T> load_checkpoint(const std::string& path) {
    const std::string base = checkpoint_base(path);

    json j;
    {
        std::ifstream mf(base + ".manifest.json");
        if (!mf) throw Error("cannot open " + base + ".manifest.json");
        try {
            mf >> j;
        } catch (const json::exception& e) {
            throw CheckpointError(CheckpointError::Kind::BadManifest,
                                  "malformed manifest " + base + ".manifest.json: " + e.what());
        }
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointFormatVersion)
        throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                              "checkpoint format version " +
                                  (j.contains("format_version") ? j["format_version"].dump() : std::string("?")) +
                                  ", expected " + std::to_string(kCheckpointFormatVersion));

    Network<T> net;
    net.input_shape = j.at("input_shape").get<Shape>();
    net.num_classes = j.at("num_classes").get<int>();

    size_t declared_total = 0;
    for (const auto& lj : j.at("layers")) {
        const std::string kind = lj.at("kind").get<std::string>();
        Layer<T> l;
        if (kind == "Linear") {
            l.kind = LayerKind::Linear;
            const int in = lj.at("in").get<int>(), out = lj.at("out").get<int>();
            l.weight = Tensor<T>({in, out});
            l.bias = Tensor<T>({out});
        } else if (kind == "Conv2d") {
            l.kind = LayerKind::Conv2d;
            l.weight = Tensor<T>({lj.at("out_channels").get<int>(), lj.at("in_channels").get<int>(),
                                  lj.at("kh").get<int>(), lj.at("kw").get<int>()});
            l.bias = Tensor<T>({lj.at("out_channels").get<int>()});
            l.stride = lj.at("stride").get<int>();
            l.padding = lj.at("padding").get<int>();
        } else if (kind == "ReLU") {
            l.kind = LayerKind::ReLU;
            if (lj.contains("cs_override")) l.cs_override = lj["cs_override"].get<double>();
        } else if (kind == "Flatten") {
            l.kind = LayerKind::Flatten;
        } else if (kind == "BatchNormAffine") {
            l.kind = LayerKind::BatchNormAffine;
            const int c = lj.at("channels").get<int>();
            l.weight = Tensor<T>({c});
            l.bias = Tensor<T>({c});
            l.run_mean = Tensor<T>({c});
            l.run_var = Tensor<T>({c});
        } else {
            throw CheckpointError(CheckpointError::Kind::UnknownLayer, "unsupported layer kind '" + kind + "'");
        }
        if (lj.contains("params") && lj["params"].get<size_t>() != blob_scalars(l))
            throw CheckpointError(CheckpointError::Kind::CountMismatch,
                                  "layer '" + kind + "' declares " + lj["params"].dump() + " params, shape implies " +
                                      std::to_string(blob_scalars(l)));
        declared_total += blob_scalars(l);
        net.layers.push_back(std::move(l));
    }
    if (j.contains("total_params") && j["total_params"].get<size_t>() != declared_total)
        throw CheckpointError(CheckpointError::Kind::CountMismatch,
                              "manifest total_params " + j["total_params"].dump() + " vs layer sum " +
                                  std::to_string(declared_total));

    std::ifstream bf(base + ".bin", std::ios::binary | std::ios::ate);
    if (!bf) throw Error("cannot open " + base + ".bin");
    const size_t bytes = static_cast<size_t>(bf.tellg());
    if (bytes % sizeof(float) != 0)
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "blob size " + std::to_string(bytes) + " is not a multiple of 4");
    const size_t scalars = bytes / sizeof(float);
    if (scalars != declared_total)
        throw CheckpointError(CheckpointError::Kind::CountMismatch,
                              "blob holds " + std::to_string(scalars) + " scalars, manifest declares " +
                                  std::to_string(declared_total));
    std::vector<float> blob(scalars);
    bf.seekg(0);
    bf.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));
    if (!bf) throw CheckpointError(CheckpointError::Kind::Truncated, "short read on " + base + ".bin");

    size_t off = 0;
    auto take = [&](Tensor<T>& t) {
        for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(blob[off + i]);
        off += t.size();
    };
    for (auto& l : net.layers) {
        take(l.weight);
        take(l.bias);
        take(l.run_mean);
        take(l.run_var);
    }
    net.refresh_cache();
    net.validate();
    return net;
}

template void save_checkpoint<float>(const Network<float>&, const std::string&);
template void save_checkpoint<double>(const Network<double>&, const std::string&);
template Network<float> load_checkpoint<float>(const std::string&);
template Network<double> load_checkpoint<double>(const std::string&);

}  // namespace sabr
