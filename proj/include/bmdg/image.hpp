#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace bmdg {

enum class Modality { visible, infrared };

inline char modality_code(Modality m) { return m == Modality::visible ? 'V' : 'I'; }

// 8-bit interleaved image, row-major HxWxC.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c), pixels(std::size_t(h) * w * c, 0) {}

    std::uint8_t& at(int y, int x, int c) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(std::size_t(y) * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

// [3,H,W] float tensor in [0,1].
torch::Tensor image_to_tensor(const Image& image);
// Inverse of image_to_tensor for a [C,H,W] tensor; values are clamped to [0,1].
Image tensor_to_image(const torch::Tensor& chw);

}  // namespace bmdg
