#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowtag {

// H x W raster of intensities in [0,1], row-major, interleaved channels (1 or 3).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c = 1)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, 0.0f) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    float& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool same_size(const Image& o) const { return width == o.width && height == o.height; }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("Image: nonpositive dimensions");
        if (channels != 1 && channels != 3)
            throw std::invalid_argument("Image: channels must be 1 or 3");
        if (data.size() != pixel_count() * channels)
            throw std::invalid_argument("Image: data length mismatch");
        for (float v : data)
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                throw std::invalid_argument("Image: values must be finite and in [0,1]");
    }
};

// H x W boolean raster; stored as 0/1 bytes.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h),
          data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    bool at(int x, int y) const {
        return data[static_cast<std::size_t>(y) * width + x] != 0;
    }
    void set(int x, int y, bool v) {
        data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (std::uint8_t v : data) n += (v != 0);
        return n;
    }
    bool empty_mask() const { return count() == 0; }

    bool same_size(const BinaryMask& o) const { return width == o.width && height == o.height; }

    bool operator==(const BinaryMask& o) const {
        return width == o.width && height == o.height && data == o.data;
    }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("BinaryMask: nonpositive dimensions");
        if (data.size() != pixel_count())
            throw std::invalid_argument("BinaryMask: data length mismatch");
    }
};

// H x W field of (u,v) displacements in pixels/frame, row-major interleaved.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w), height(h),
          data(static_cast<std::size_t>(w) * h * 2, 0.0f) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    float& u(int x, int y) { return data[(static_cast<std::size_t>(y) * width + x) * 2]; }
    float& v(int x, int y) { return data[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
    float u(int x, int y) const { return data[(static_cast<std::size_t>(y) * width + x) * 2]; }
    float v(int x, int y) const { return data[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("FlowField: nonpositive dimensions");
        if (data.size() != pixel_count() * 2)
            throw std::invalid_argument("FlowField: data length mismatch");
        for (float v : data)
            if (!std::isfinite(v))
                throw std::invalid_argument("FlowField: non-finite component");
    }
};

// H x W map of finite scalars (magnitudes, confidences, distances).
struct ScalarMap {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    ScalarMap() = default;
    ScalarMap(int w, int h, float fill = 0.0f)
        : width(w), height(h),
          data(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    void validate() const {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("ScalarMap: nonpositive dimensions");
        if (data.size() != pixel_count())
            throw std::invalid_argument("ScalarMap: data length mismatch");
    }
};

// Rec.601 luma; 1-channel images pass through.
inline Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const float* p = &img.data[i * 3];
        out.data[i] = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
    }
    return out;
}

} // namespace flowtag
