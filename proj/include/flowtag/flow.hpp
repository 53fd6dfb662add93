#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "flowtag/raster.hpp"
#include "flowtag/warp.hpp"

namespace flowtag {

// Coarse-to-fine robust variational flow. Defaults follow the public
// reference implementation of the coarse-to-fine method; all fields are
// surfaced as CLI flags.
struct FlowParams {
    double alpha = 0.012;        // smoothness weight
    double pyramid_ratio = 0.75; // per-level downscale factor in (0,1)
    int min_width = 20;          // coarsest admissible level width
    int outer_iterations = 7;    // relinearizations per level
    int inner_iterations = 1;    // robust-weight refreshes per relinearization
    int sor_iterations = 30;     // SOR sweeps per linear system
    double sor_omega = 1.8;      // relaxation factor in (0,2)
    double epsilon = 1e-3;       // robust penalty constant

    void validate() const {
        if (!(alpha > 0)) throw std::invalid_argument("FlowParams: alpha must be > 0");
        if (!(pyramid_ratio > 0 && pyramid_ratio < 1))
            throw std::invalid_argument("FlowParams: pyramid_ratio must be in (0,1)");
        if (min_width < 4) throw std::invalid_argument("FlowParams: min_width must be >= 4");
        if (outer_iterations < 1 || inner_iterations < 1 || sor_iterations < 1)
            throw std::invalid_argument("FlowParams: iteration counts must be >= 1");
        if (!(sor_omega > 0 && sor_omega < 2))
            throw std::invalid_argument("FlowParams: sor_omega must be in (0,2)");
        if (!(epsilon > 0)) throw std::invalid_argument("FlowParams: epsilon must be > 0");
    }
};

// Image pyramid, coarsest level first; the finest level is the input image.
struct Pyramid {
    std::vector<Image> levels;
};

// Snapshots of the total flow (base + accumulated increment) taken after the
// warp and after each outer relinearization, in solver precision. Used by the
// energy-monotonicity checks.
struct SolveTrace {
    std::vector<std::vector<double>> u_states;
    std::vector<std::vector<double>> v_states;
};

namespace detail {

inline Image gaussian_smooth(const Image& img, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    const int w = img.width, h = img.height, ch = img.channels;
    Image tmp(w, h, ch), out(w, h, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y, c);
                tmp.at(x, y, c) = static_cast<float>(acc);
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1), c);
                out.at(x, y, c) = static_cast<float>(acc);
            }
    return out;
}

inline Image resample_bilinear(const Image& img, int new_w, int new_h) {
    Image out(new_w, new_h, img.channels);
    const double sx = static_cast<double>(img.width) / new_w;
    const double sy = static_cast<double>(img.height) / new_h;
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x) {
            double px = (x + 0.5) * sx - 0.5;
            double py = (y + 0.5) * sy - 0.5;
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = sample_bilinear(img, px, py, c);
        }
    return out;
}

// 4th-order central stencil [1,-8,0,8,-1]/12 with clamped indices.
inline void spatial_derivatives(const std::vector<double>& img, int w, int h,
                                std::vector<double>& dx, std::vector<double>& dy) {
    auto at = [&](int x, int y) {
        return img[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * w + x;
            dx[i] = (at(x - 2, y) - 8.0 * at(x - 1, y) + 8.0 * at(x + 1, y) - at(x + 2, y)) / 12.0;
            dy[i] = (at(x, y - 2) - 8.0 * at(x, y - 1) + 8.0 * at(x, y + 1) - at(x, y + 2)) / 12.0;
        }
}

} // namespace detail

// Gaussian-smooth-then-resample at pyramid_ratio until the next level width
// would drop below min_width. Coarsest first; finest level is the input.
inline Pyramid build_pyramid(const Image& image, const FlowParams& params) {
    params.validate();
    const double r = params.pyramid_ratio;
    const double sigma = 0.6 * std::sqrt(1.0 / (r * r) - 1.0);

    std::vector<Image> fine_to_coarse;
    fine_to_coarse.push_back(image);
    while (true) {
        const Image& cur = fine_to_coarse.back();
        int next_w = static_cast<int>(std::lround(cur.width * r));
        int next_h = static_cast<int>(std::lround(cur.height * r));
        if (next_w < params.min_width || next_h < 4) break;
        if (next_w >= cur.width || next_h >= cur.height) break;
        fine_to_coarse.push_back(
            detail::resample_bilinear(detail::gaussian_smooth(cur, sigma), next_w, next_h));
    }

    Pyramid pyr;
    pyr.levels.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
    return pyr;
}

// One level of the robust solver. Minimizes the linearized energy
//   sum psi((It + Ix*du + Iy*dv)^2) + alpha * sum psi(|grad(u+du)|^2 + |grad(v+dv)|^2),
// psi(s^2) = sqrt(s^2 + eps^2), by iteratively reweighted least squares with
// SOR sweeps. Spatial derivatives come from the mean of fixed and warped;
// the temporal derivative is warped - fixed. Flow gradients are forward
// differences. The increment carries across reweightings and seeds each SOR
// solve, which keeps the energy non-increasing across outer iterations.
inline FlowField solve_level(const Image& fixed, const Image& warped, const FlowField& flow,
                             const FlowParams& params, SolveTrace* trace = nullptr) {
    params.validate();
    if (!fixed.same_size(warped) || fixed.width != flow.width || fixed.height != flow.height)
        throw std::invalid_argument("solve_level: dimension mismatch");
    const Image f = to_grayscale(fixed);
    const Image g = to_grayscale(warped);

    const int w = f.width, h = f.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const double alpha = params.alpha;
    const double eps2 = params.epsilon * params.epsilon;
    const double omega = params.sor_omega;

    std::vector<double> ix(n), iy(n), it(n), avg(n);
    for (std::size_t i = 0; i < n; ++i) {
        avg[i] = 0.5 * (static_cast<double>(f.data[i]) + g.data[i]);
        it[i] = static_cast<double>(g.data[i]) - f.data[i];
    }
    detail::spatial_derivatives(avg, w, h, ix, iy);

    std::vector<double> base_u(n), base_v(n);
    for (std::size_t i = 0; i < n; ++i) {
        base_u[i] = flow.data[2 * i];
        base_v[i] = flow.data[2 * i + 1];
    }

    std::vector<double> du(n, 0.0), dv(n, 0.0);
    std::vector<double> sw(n), aw(n), lap_u(n), lap_v(n);
    std::vector<double> tu(n), tv(n);

    auto record_state = [&]() {
        if (!trace) return;
        std::vector<double>& us = trace->u_states.emplace_back(n);
        std::vector<double>& vs = trace->v_states.emplace_back(n);
        for (std::size_t i = 0; i < n; ++i) {
            us[i] = base_u[i] + du[i];
            vs[i] = base_v[i] + dv[i];
        }
    };
    record_state();

    for (int outer = 0; outer < params.outer_iterations; ++outer) {
        for (int inner = 0; inner < params.inner_iterations; ++inner) {
            // robust weights psi'(s^2) = 1 / (2 sqrt(s^2 + eps^2))
            for (std::size_t i = 0; i < n; ++i) {
                tu[i] = base_u[i] + du[i];
                tv[i] = base_v[i] + dv[i];
            }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    std::size_t i = static_cast<std::size_t>(y) * w + x;
                    double gxu = x < w - 1 ? tu[i + 1] - tu[i] : 0.0;
                    double gyu = y < h - 1 ? tu[i + w] - tu[i] : 0.0;
                    double gxv = x < w - 1 ? tv[i + 1] - tv[i] : 0.0;
                    double gyv = y < h - 1 ? tv[i + w] - tv[i] : 0.0;
                    double s2 = gxu * gxu + gyu * gyu + gxv * gxv + gyv * gyv;
                    sw[i] = 0.5 / std::sqrt(s2 + eps2);
                }
            for (std::size_t i = 0; i < n; ++i) {
                double r = it[i] + ix[i] * du[i] + iy[i] * dv[i];
                aw[i] = 0.5 / std::sqrt(r * r + eps2);
            }
            // weighted Laplacian of the base flow (constant within the solve)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    std::size_t i = static_cast<std::size_t>(y) * w + x;
                    double lu = 0.0, lv = 0.0;
                    if (x > 0)     { lu += sw[i - 1] * (base_u[i] - base_u[i - 1]); lv += sw[i - 1] * (base_v[i] - base_v[i - 1]); }
                    if (x < w - 1) { lu += sw[i] * (base_u[i] - base_u[i + 1]);     lv += sw[i] * (base_v[i] - base_v[i + 1]); }
                    if (y > 0)     { lu += sw[i - w] * (base_u[i] - base_u[i - w]); lv += sw[i - w] * (base_v[i] - base_v[i - w]); }
                    if (y < h - 1) { lu += sw[i] * (base_u[i] - base_u[i + w]);     lv += sw[i] * (base_v[i] - base_v[i + w]); }
                    lap_u[i] = lu;
                    lap_v[i] = lv;
                }

            for (int sweep = 0; sweep < params.sor_iterations; ++sweep) {
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        std::size_t i = static_cast<std::size_t>(y) * w + x;
                        double wl = x > 0 ? sw[i - 1] : 0.0;
                        double wr = x < w - 1 ? sw[i] : 0.0;
                        double wu = y > 0 ? sw[i - w] : 0.0;
                        double wd = y < h - 1 ? sw[i] : 0.0;
                        double s = wl + wr + wu + wd;
                        double nbr_u = 0.0, nbr_v = 0.0;
                        if (x > 0)     { nbr_u += wl * du[i - 1]; nbr_v += wl * dv[i - 1]; }
                        if (x < w - 1) { nbr_u += wr * du[i + 1]; nbr_v += wr * dv[i + 1]; }
                        if (y > 0)     { nbr_u += wu * du[i - w]; nbr_v += wu * dv[i - w]; }
                        if (y < h - 1) { nbr_u += wd * du[i + w]; nbr_v += wd * dv[i + w]; }

                        double denom_u = aw[i] * ix[i] * ix[i] + alpha * s;
                        if (denom_u > 0.0) {
                            double rhs = -aw[i] * ix[i] * (it[i] + iy[i] * dv[i]) -
                                         alpha * lap_u[i] + alpha * nbr_u;
                            du[i] = (1.0 - omega) * du[i] + omega * rhs / denom_u;
                        }
                        double denom_v = aw[i] * iy[i] * iy[i] + alpha * s;
                        if (denom_v > 0.0) {
                            double rhs = -aw[i] * iy[i] * (it[i] + ix[i] * du[i]) -
                                         alpha * lap_v[i] + alpha * nbr_v;
                            dv[i] = (1.0 - omega) * dv[i] + omega * rhs / denom_v;
                        }
                    }
            }
        }
        record_state();
    }

    FlowField increment(w, h);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(du[i]) || !std::isfinite(dv[i]))
            throw std::runtime_error("solve_level: non-finite increment");
        increment.data[2 * i] = static_cast<float>(du[i]);
        increment.data[2 * i + 1] = static_cast<float>(dv[i]);
    }
    return increment;
}

namespace detail {

inline FlowField upsample_flow(const FlowField& flow, int new_w, int new_h) {
    FlowField out(new_w, new_h);
    const double sx = static_cast<double>(flow.width) / new_w;
    const double sy = static_cast<double>(flow.height) / new_h;
    const double scale_u = static_cast<double>(new_w) / flow.width;
    const double scale_v = static_cast<double>(new_h) / flow.height;
    auto sample = [&](int x0, int y0, int comp) {
        return static_cast<double>(
            flow.data[(static_cast<std::size_t>(y0) * flow.width + x0) * 2 + comp]);
    };
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x) {
            double px = std::clamp((x + 0.5) * sx - 0.5, 0.0, flow.width - 1.0);
            double py = std::clamp((y + 0.5) * sy - 0.5, 0.0, flow.height - 1.0);
            int x0 = static_cast<int>(std::floor(px));
            int y0 = static_cast<int>(std::floor(py));
            int x1 = std::min(x0 + 1, flow.width - 1);
            int y1 = std::min(y0 + 1, flow.height - 1);
            double fx = px - x0, fy = py - y0;
            for (int comp = 0; comp < 2; ++comp) {
                double top = sample(x0, y0, comp) + fx * (sample(x1, y0, comp) - sample(x0, y0, comp));
                double bot = sample(x0, y1, comp) + fx * (sample(x1, y1, comp) - sample(x0, y1, comp));
                double val = top + fy * (bot - top);
                val *= comp == 0 ? scale_u : scale_v;
                out.data[(static_cast<std::size_t>(y) * new_w + x) * 2 + comp] = static_cast<float>(val);
            }
        }
    return out;
}

} // namespace detail

// Coarse-to-fine estimation: zero flow at the coarsest level, then per level
// upsample+rescale, warp the second frame by the current flow, solve, and
// accumulate the increment. Deterministic for fixed inputs and params.
inline FlowField compute_flow(const Image& first, const Image& second, const FlowParams& params) {
    params.validate();
    if (!first.same_size(second) || first.channels != second.channels)
        throw std::invalid_argument("compute_flow: frame dimension mismatch");
    if (first.width < 4 || first.height < 4)
        throw std::invalid_argument("compute_flow: frames must be at least 4x4");

    const Image gray1 = to_grayscale(first);
    const Image gray2 = to_grayscale(second);
    const Pyramid pyr1 = build_pyramid(gray1, params);
    const Pyramid pyr2 = build_pyramid(gray2, params);

    FlowField flow(pyr1.levels.front().width, pyr1.levels.front().height);
    for (std::size_t level = 0; level < pyr1.levels.size(); ++level) {
        const Image& fixed = pyr1.levels[level];
        const Image& moving = pyr2.levels[level];
        if (level > 0) flow = detail::upsample_flow(flow, fixed.width, fixed.height);
        const Image warped = bilinear_warp(moving, flow);
        const FlowField increment = solve_level(fixed, warped, flow, params);
        for (std::size_t i = 0; i < flow.data.size(); ++i) flow.data[i] += increment.data[i];
    }
    return flow;
}

// Per-pixel Euclidean norm of the flow.
inline ScalarMap flow_magnitude(const FlowField& flow) {
    ScalarMap out(flow.width, flow.height);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double u = flow.data[2 * i], v = flow.data[2 * i + 1];
        out.data[i] = static_cast<float>(std::sqrt(u * u + v * v));
    }
    return out;
}

} // namespace flowtag
