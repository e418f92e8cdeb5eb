#include "sabr/data.hpp"

#include <cstring>
#include <fstream>

#include "sabr/error.hpp"

namespace sabr {

Dataset Dataset::subset(int count, int offset) const {
    if (offset < 0 || count < 0 || offset + count > n) throw Error("Dataset::subset out of range");
    Dataset d;
    d.n = count;
    d.channels = channels;
    d.height = height;
    d.width = width;
    d.split = split;
    d.pixels.assign(pixels.begin() + static_cast<long>(offset) * static_cast<long>(item_size()),
                    pixels.begin() + static_cast<long>(offset + count) * static_cast<long>(item_size()));
    d.labels.assign(labels.begin() + offset, labels.begin() + offset + count);
    return d;
}

template <typename T>
Tensor<T> Dataset::batch(int count, int offset) const {
    if (offset < 0 || count <= 0 || offset + count > n) throw Error("Dataset::batch out of range");
    Tensor<T> t({count, channels, height, width});
    const size_t isz = item_size();
    for (int i = 0; i < count; ++i) {
        const float* src = pixels.data() + static_cast<size_t>(offset + i) * isz;
        T* dst = t.data() + static_cast<size_t>(i) * isz;
        for (size_t k = 0; k < isz; ++k) dst[k] = static_cast<T>(src[k]);
    }
    return t;
}

template Tensor<float> Dataset::batch<float>(int, int) const;
template Tensor<double> Dataset::batch<double>(int, int) const;

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IdxError(IdxError::Kind::Truncated, path + ": truncated header");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::vector<uint8_t> read_idx_images(const std::string& path, int& n, int& rows, int& cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    const uint32_t magic = read_be32(in, path);
    if (magic != kIdxImagesMagic)
        throw IdxError(IdxError::Kind::BadMagic, path + ": bad image magic " + std::to_string(magic));
    n = static_cast<int>(read_be32(in, path));
    rows = static_cast<int>(read_be32(in, path));
    cols = static_cast<int>(read_be32(in, path));
    std::vector<uint8_t> data(static_cast<size_t>(n) * rows * cols);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<size_t>(in.gcount()) != data.size())
        throw IdxError(IdxError::Kind::Truncated, path + ": expected " + std::to_string(data.size()) +
                                                      " pixel bytes, got " + std::to_string(in.gcount()));
    return data;
}

std::vector<uint8_t> read_idx_labels(const std::string& path, int& n) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    const uint32_t magic = read_be32(in, path);
    if (magic != kIdxLabelsMagic)
        throw IdxError(IdxError::Kind::BadMagic, path + ": bad label magic " + std::to_string(magic));
    n = static_cast<int>(read_be32(in, path));
    std::vector<uint8_t> data(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (static_cast<size_t>(in.gcount()) != data.size())
        throw IdxError(IdxError::Kind::Truncated, path + ": expected " + std::to_string(data.size()) +
                                                      " label bytes, got " + std::to_string(in.gcount()));
    return data;
}

void write_idx_images(const std::string& path, const std::vector<uint8_t>& data, int n, int rows, int cols) {
    if (data.size() != static_cast<size_t>(n) * rows * cols) throw Error("write_idx_images: size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    write_be32(out, kIdxImagesMagic);
    write_be32(out, static_cast<uint32_t>(n));
    write_be32(out, static_cast<uint32_t>(rows));
    write_be32(out, static_cast<uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    write_be32(out, kIdxLabelsMagic);
    write_be32(out, static_cast<uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset load_mnist(const std::string& dir, const std::string& split) {
    std::string img_file, lbl_file;
    if (split == "train") {
        img_file = dir + "/train-images-idx3-ubyte";
        lbl_file = dir + "/train-labels-idx1-ubyte";
    } else if (split == "test") {
        img_file = dir + "/t10k-images-idx3-ubyte";
        lbl_file = dir + "/t10k-labels-idx1-ubyte";
    } else {
        throw Error("load_mnist: split must be 'train' or 'test', got '" + split + "'");
    }

    int ni = 0, rows = 0, cols = 0, nl = 0;
    const std::vector<uint8_t> img = read_idx_images(img_file, ni, rows, cols);
    const std::vector<uint8_t> lbl = read_idx_labels(lbl_file, nl);
    if (ni != nl)
        throw IdxError(IdxError::Kind::CountMismatch,
                       dir + ": " + std::to_string(ni) + " images vs " + std::to_string(nl) + " labels");

    Dataset d;
    d.n = ni;
    d.channels = 1;
    d.height = rows;
    d.width = cols;
    d.split = split;
    d.pixels.resize(img.size());
    for (size_t i = 0; i < img.size(); ++i) d.pixels[i] = static_cast<float>(img[i]) * (1.0f / 255.0f);
    d.labels.resize(static_cast<size_t>(nl));
    for (int i = 0; i < nl; ++i) {
        if (lbl[static_cast<size_t>(i)] > 9)
            throw Error(lbl_file + ": label " + std::to_string(lbl[static_cast<size_t>(i)]) + " out of range [0,10)");
        d.labels[static_cast<size_t>(i)] = lbl[static_cast<size_t>(i)];
    }
    return d;
}

}  // namespace sabr
