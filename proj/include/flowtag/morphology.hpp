#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flowtag/raster.hpp"

namespace flowtag {

namespace detail {

inline constexpr std::int64_t kNoSeed = std::numeric_limits<std::int64_t>::max() / 4;

// 1D lower-envelope pass of the exact squared Euclidean distance transform
// (Felzenszwalb & Huttenlocher). f holds squared offsets, result is exact.
inline void edt_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& d, int n,
                   std::vector<int>& v, std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            int p = v[k];
            s = (static_cast<double>(f[q] + static_cast<std::int64_t>(q) * q) -
                 static_cast<double>(f[p] + static_cast<std::int64_t>(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        std::int64_t dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

// Exact squared Euclidean distance to the nearest true pixel. Pixels with no
// seed anywhere get kNoSeed (propagated sentinel, still far above any real
// squared distance for raster-sized inputs).
inline std::vector<std::int64_t> squared_edt(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    std::vector<std::int64_t> dist(static_cast<std::size_t>(w) * h, kNoSeed);

    // columns: squared vertical distance to nearest seed in the same column
    for (int x = 0; x < w; ++x) {
        std::int64_t run = kNoSeed;
        for (int y = 0; y < h; ++y) {
            if (mask.at(x, y)) run = 0; else if (run < kNoSeed) ++run;
            dist[static_cast<std::size_t>(y) * w + x] = run >= kNoSeed ? kNoSeed : run * run;
        }
        run = kNoSeed;
        for (int y = h - 1; y >= 0; --y) {
            if (mask.at(x, y)) run = 0; else if (run < kNoSeed) ++run;
            if (run < kNoSeed) {
                std::int64_t& d = dist[static_cast<std::size_t>(y) * w + x];
                d = std::min(d, run * run);
            }
        }
    }

    // rows: combine with horizontal offsets via the envelope pass
    std::vector<std::int64_t> f(w), d(w);
    std::vector<int> v(w);
    std::vector<double> z(w + 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = dist[static_cast<std::size_t>(y) * w + x];
        edt_1d(f, d, w, v, z);
        for (int x = 0; x < w; ++x)
            dist[static_cast<std::size_t>(y) * w + x] = std::min(d[x], kNoSeed);
    }
    return dist;
}

// Squared distance from (x,y) to the nearest point outside the raster.
inline std::int64_t squared_border_distance(int x, int y, int w, int h) {
    std::int64_t side = std::min(std::min(x + 1, w - x), std::min(y + 1, h - y));
    return side * side;
}

} // namespace detail

// Erosion by the discrete Euclidean disk {(dx,dy): dx^2+dy^2 <= r^2}.
// Pixels outside the raster count as background, so shapes shrink at borders.
inline BinaryMask erode(const BinaryMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("erode: negative radius");
    if (radius == 0) return mask;
    const int w = mask.width, h = mask.height;
    BinaryMask out(w, h);
    BinaryMask background(w, h);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        background.data[i] = mask.data[i] ? 0 : 1;
    const std::vector<std::int64_t> bg_dist = detail::squared_edt(background);
    const std::int64_t r2 = static_cast<std::int64_t>(radius) * radius;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            std::int64_t d2 = std::min(bg_dist[static_cast<std::size_t>(y) * w + x],
                                       detail::squared_border_distance(x, y, w, h));
            if (d2 > r2) out.set(x, y, true);
        }
    return out;
}

// Dilation by the same disk; contributions never come from outside the raster.
inline BinaryMask dilate(const BinaryMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("dilate: negative radius");
    if (radius == 0) return mask;
    const int w = mask.width, h = mask.height;
    BinaryMask out(w, h);
    if (mask.empty_mask()) return out;
    const std::vector<std::int64_t> fg_dist = detail::squared_edt(mask);
    const std::int64_t r2 = static_cast<std::int64_t>(radius) * radius;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = fg_dist[i] <= r2 ? 1 : 0;
    return out;
}

// Exact Euclidean distance to the nearest true pixel; true pixels map to 0.
// An all-false mask maps every pixel to the largest finite float.
inline ScalarMap distance_transform(const BinaryMask& mask) {
    ScalarMap out(mask.width, mask.height);
    if (mask.empty_mask()) {
        std::fill(out.data.begin(), out.data.end(), std::numeric_limits<float>::max());
        return out;
    }
    const std::vector<std::int64_t> d2 = detail::squared_edt(mask);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(std::sqrt(static_cast<double>(d2[i])));
    return out;
}

struct Component {
    int label = 0;
    std::size_t pixel_count = 0;
    BinaryMask mask;
};

// 8-connected components, sorted by descending pixel count (label breaks ties).
// Labels follow row-major discovery order, starting at 1.
inline std::vector<Component> connected_components(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    std::vector<Component> components;
    std::vector<std::int32_t> labels(static_cast<std::size_t>(w) * h, 0);
    std::vector<std::pair<int, int>> stack;
    int next_label = 1;

    for (int y0 = 0; y0 < h; ++y0)
        for (int x0 = 0; x0 < w; ++x0) {
            if (!mask.at(x0, y0) || labels[static_cast<std::size_t>(y0) * w + x0] != 0)
                continue;
            Component comp;
            comp.label = next_label++;
            comp.mask = BinaryMask(w, h);
            stack.clear();
            stack.emplace_back(x0, y0);
            labels[static_cast<std::size_t>(y0) * w + x0] = comp.label;
            while (!stack.empty()) {
                auto [x, y] = stack.back();
                stack.pop_back();
                comp.mask.set(x, y, true);
                ++comp.pixel_count;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                        if (mask.at(nx, ny) && labels[ni] == 0) {
                            labels[ni] = comp.label;
                            stack.emplace_back(nx, ny);
                        }
                    }
            }
            components.push_back(std::move(comp));
        }

    std::sort(components.begin(), components.end(), [](const Component& a, const Component& b) {
        if (a.pixel_count != b.pixel_count) return a.pixel_count > b.pixel_count;
        return a.label < b.label;
    });
    return components;
}

} // namespace flowtag
