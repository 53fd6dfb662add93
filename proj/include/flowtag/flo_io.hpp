#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "flowtag/raster.hpp"

namespace flowtag {

// Middlebury .flo: LE float32 magic 202021.25, int32 width, int32 height,
// then row-major interleaved float32 (u,v). A single-channel variant with the
// same header but one float per pixel carries scalar maps (confidence rasters).
inline constexpr float kFloMagic = 202021.25f;

namespace detail {

inline void put_u32le(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline bool get_u32le(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

inline void put_f32le(std::ostream& os, float f) { put_u32le(os, std::bit_cast<std::uint32_t>(f)); }

inline bool get_f32le(std::istream& is, float& f) {
    std::uint32_t v;
    if (!get_u32le(is, v)) return false;
    f = std::bit_cast<float>(v);
    return true;
}

// Shared header/payload plumbing for the 2-channel and 1-channel layouts.
inline void read_flo_header(std::ifstream& in, const std::string& path, int& w, int& h) {
    float magic;
    if (!get_f32le(in, magic))
        throw std::runtime_error("read_flo: truncated header: " + path);
    if (magic != kFloMagic)
        throw std::runtime_error("read_flo: bad magic in " + path);
    std::uint32_t wu, hu;
    if (!get_u32le(in, wu) || !get_u32le(in, hu))
        throw std::runtime_error("read_flo: truncated header: " + path);
    w = static_cast<std::int32_t>(wu);
    h = static_cast<std::int32_t>(hu);
    if (w <= 0 || h <= 0)
        throw std::runtime_error("read_flo: nonpositive dimensions in " + path);
}

} // namespace detail

inline FlowField read_flo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_flo: cannot open " + path);
    int w, h;
    detail::read_flo_header(in, path, w, h);
    FlowField flow(w, h);
    for (float& v : flow.data)
        if (!detail::get_f32le(in, v))
            throw std::runtime_error("read_flo: truncated payload in " + path);
    return flow;
}

inline void write_flo(const FlowField& flow, const std::string& path) {
    flow.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_flo: cannot open " + path);
    detail::put_f32le(out, kFloMagic);
    detail::put_u32le(out, static_cast<std::uint32_t>(flow.width));
    detail::put_u32le(out, static_cast<std::uint32_t>(flow.height));
    for (float v : flow.data) detail::put_f32le(out, v);
    if (!out) throw std::runtime_error("write_flo: write failed: " + path);
}

inline ScalarMap read_scalar_flo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_scalar_flo: cannot open " + path);
    int w, h;
    detail::read_flo_header(in, path, w, h);
    ScalarMap map(w, h);
    for (float& v : map.data)
        if (!detail::get_f32le(in, v))
            throw std::runtime_error("read_scalar_flo: truncated payload in " + path);
    return map;
}

inline void write_scalar_flo(const ScalarMap& map, const std::string& path) {
    map.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_scalar_flo: cannot open " + path);
    detail::put_f32le(out, kFloMagic);
    detail::put_u32le(out, static_cast<std::uint32_t>(map.width));
    detail::put_u32le(out, static_cast<std::uint32_t>(map.height));
    for (float v : map.data) detail::put_f32le(out, v);
    if (!out) throw std::runtime_error("write_scalar_flo: write failed: " + path);
}

} // namespace flowtag
