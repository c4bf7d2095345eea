#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vip/tensor.hpp"

namespace vip {

// 8-bit RGB image, row-major, as produced by the rasterizer or read from a
// binary PPM (P6) file.
struct RawSnapshot {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // width*height*3 bytes, RGB

    std::uint8_t* px(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
    const std::uint8_t* px(std::size_t x, std::size_t y) const {
        return &pixels[(y * width + x) * 3];
    }
    bool operator==(const RawSnapshot&) const = default;
};

// Real-valued 3xHxW tensor with every value in [-1, 1].
struct NormalizedSnapshot {
    Tensor values;  // shape {3, height, width}
    std::size_t height() const { return values.dim(1); }
    std::size_t width() const { return values.dim(2); }
};

// Axis-aligned highlight rectangle, inclusive corners, relative to the
// snapshot's top-left.
struct HighlightRect {
    std::uint32_t px = 0, py = 0;  // top-left
    std::uint32_t qx = 0, qy = 0;  // bottom-right
    bool operator==(const HighlightRect&) const = default;
    auto operator<=>(const HighlightRect&) const = default;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

inline constexpr Rgb kHighlightColor{255, 255, 0};
inline constexpr double kInkLuminanceThreshold = 128.0;

inline double luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

// Ordered top-to-bottom horizontal strips of a normalized snapshot.
struct RegionProposalSet {
    std::size_t proposal_height = 0;
    std::vector<Tensor> proposals;  // each {3, h, width}
};

RawSnapshot load_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> save_ppm(const RawSnapshot& snap);
RawSnapshot load_ppm_file(const std::string& path);
void save_ppm_file(const RawSnapshot& snap, const std::string& path);

// Box-filter down-sampling to target_w x target_h (no upsampling), each
// channel rounded half-up.
RawSnapshot downsample(const RawSnapshot& raw, std::size_t target_w, std::size_t target_h);

// Subtract the per-snapshot mean, then rescale linearly so min -> -1 and
// max -> +1. A constant image maps to all zeros.
NormalizedSnapshot normalize(const RawSnapshot& raw);

// Within each rectangle, every pixel brighter than the ink threshold is set
// to `color`; ink pixels are preserved. Idempotent.
RawSnapshot overlay_highlights(const RawSnapshot& raw, const std::vector<HighlightRect>& rects,
                               Rgb color = kHighlightColor);

// Split into height/h equal strips, top to bottom.
RegionProposalSet segment(const NormalizedSnapshot& img, std::size_t proposal_height);

// Per-pixel, per-channel arithmetic mean, rounded half-up.
RawSnapshot average_snapshot(const std::vector<RawSnapshot>& snapshots);

}  // namespace vip
