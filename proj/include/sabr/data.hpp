#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sabr/tensor.hpp"

namespace sabr {

// Image classification dataset; pixels scaled to [0,1].
struct Dataset {
    int n = 0, channels = 0, height = 0, width = 0;
    std::vector<float> pixels;  // n * channels * height * width
    std::vector<int> labels;
    std::string split;

    Shape item_shape() const { return {channels, height, width}; }
    size_t item_size() const { return static_cast<size_t>(channels) * height * width; }

    template <typename T>
    Tensor<T> image(int i) const {
        Tensor<T> t(item_shape());
        const float* src = pixels.data() + static_cast<size_t>(i) * item_size();
        for (size_t k = 0; k < item_size(); ++k) t[k] = static_cast<T>(src[k]);
        return t;
    }

    int label(int i) const { return labels[static_cast<size_t>(i)]; }

    Dataset subset(int count, int offset = 0) const;
    // Stacked [N,C,H,W] tensor of items [offset, offset+count).
    template <typename T>
    Tensor<T> batch(int count, int offset = 0) const;
};

// IDX primitives (big-endian headers; magic 0x00000803 for images,
// 0x00000801 for labels).
inline constexpr uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<uint8_t> read_idx_images(const std::string& path, int& n, int& rows, int& cols);
std::vector<uint8_t> read_idx_labels(const std::string& path, int& n);
void write_idx_images(const std::string& path, const std::vector<uint8_t>& data, int n, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// Loads <dir>/{train,t10k}-{images-idx3,labels-idx1}-ubyte, scales bytes
// by 1/255 and cross-checks image/label counts. split: "train" | "test".
Dataset load_mnist(const std::string& dir, const std::string& split);

}  // namespace sabr
