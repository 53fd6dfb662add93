#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flowtag/raster.hpp"

namespace flowtag {

namespace detail {

// Bilinear sample with coordinates clamped to the raster (border replication).
inline float sample_bilinear(const Image& img, double x, double y, int c) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double fx = x - x0, fy = y - y0;
    double v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
    double v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
    double top = v00 + fx * (v10 - v00);
    double bot = v01 + fx * (v11 - v01);
    return static_cast<float>(top + fy * (bot - top));
}

} // namespace detail

// out(x) samples image at x + w(x); out-of-bounds samples clamp to the border.
inline Image bilinear_warp(const Image& image, const FlowField& flow) {
    if (image.width != flow.width || image.height != flow.height)
        throw std::invalid_argument("bilinear_warp: image/flow dimension mismatch");
    Image out(image.width, image.height, image.channels);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            double sx = x + static_cast<double>(flow.u(x, y));
            double sy = y + static_cast<double>(flow.v(x, y));
            for (int c = 0; c < image.channels; ++c)
                out.at(x, y, c) = detail::sample_bilinear(image, sx, sy, c);
        }
    return out;
}

} // namespace flowtag
