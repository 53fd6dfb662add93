#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowtag/raster.hpp"

namespace flowtag {

namespace detail {

// Decoded raster before any interpretation: integer samples, 1 or 3 channels.
struct RawRaster {
    int width = 0;
    int height = 0;
    int channels = 1;
    int maxval = 255;
    std::vector<std::uint16_t> samples; // interleaved, row-major
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

struct PngMemoryReader {
    const unsigned char* data;
    std::size_t size;
    std::size_t offset;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<PngMemoryReader*>(png_get_io_ptr(png));
    if (r->offset + n > r->size) png_error(png, "truncated PNG stream");
    std::memcpy(out, r->data + r->offset, n);
    r->offset += n;
}

inline void png_silent_error(png_structp png, png_const_charp) {
    longjmp(png_jmpbuf(png), 1);
}
inline void png_silent_warning(png_structp, png_const_charp) {}

inline RawRaster load_png(const std::string& path, const std::vector<unsigned char>& file) {
    RawRaster out;
    std::vector<unsigned char> buffer;
    std::vector<png_bytep> rows;
    PngMemoryReader reader{file.data(), file.size(), 0};

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_silent_error, png_silent_warning);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }

    bool ok = false;
    int bit_depth = 8, channels = 1;
    if (!setjmp(png_jmpbuf(png))) {
        png_set_read_fn(png, &reader, png_mem_read);
        png_read_info(png, info);
        png_uint_32 w = png_get_image_width(png, info);
        png_uint_32 h = png_get_image_height(png, info);
        bit_depth = png_get_bit_depth(png, info);
        int color_type = png_get_color_type(png, info);

        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
            png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        png_set_interlace_handling(png);
        png_read_update_info(png, info);

        bit_depth = png_get_bit_depth(png, info);
        channels = png_get_channels(png, info);
        std::size_t rowbytes = png_get_rowbytes(png, info);
        buffer.resize(rowbytes * h);
        rows.resize(h);
        for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        out.width = static_cast<int>(w);
        out.height = static_cast<int>(h);
        ok = true;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw std::runtime_error("failed to decode PNG: " + path);
    if (channels != 1 && channels != 3)
        throw std::runtime_error("unsupported PNG channel layout in " + path);

    out.channels = channels;
    out.maxval = bit_depth == 16 ? 65535 : 255;
    std::size_t n = static_cast<std::size_t>(out.width) * out.height * channels;
    out.samples.resize(n);
    if (bit_depth == 16) {
        // PNG 16-bit samples are big-endian
        for (std::size_t i = 0; i < n; ++i)
            out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    } else {
        for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
    }
    return out;
}

inline void save_png(const std::string& path, int width, int height, int channels,
                     const std::vector<std::uint8_t>& bytes) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_silent_error, png_silent_warning);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("libpng init failed");
    }
    std::vector<png_bytep> rows(height);
    bool ok = false;
    if (!setjmp(png_jmpbuf(png))) {
        png_init_io(png, fp);
        png_set_IHDR(png, info, width, height, 8,
                     channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        for (int y = 0; y < height; ++y)
            rows[y] = const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * width * channels);
        png_set_rows(png, info, rows.data());
        png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
        ok = true;
    }
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    if (!ok) throw std::runtime_error("failed to encode PNG: " + path);
}

// Netpbm P2/P3/P5/P6, maxval up to 65535 (binary 16-bit samples are big-endian).
inline RawRaster load_pnm(const std::string& path, const std::vector<unsigned char>& file) {
    if (file.size() < 2 || file[0] != 'P')
        throw std::runtime_error("not a PNM file: " + path);
    const char kind = static_cast<char>(file[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6')
        throw std::runtime_error("unsupported PNM variant in " + path);
    const bool binary = kind == '5' || kind == '6';
    const int channels = (kind == '3' || kind == '6') ? 3 : 1;

    std::size_t pos = 2;
    auto next_token = [&]() -> long {
        while (pos < file.size()) {
            if (std::isspace(file[pos])) { ++pos; continue; }
            if (file[pos] == '#') {
                while (pos < file.size() && file[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= file.size()) throw std::runtime_error("truncated PNM header: " + path);
        long value = 0;
        bool any = false;
        while (pos < file.size() && std::isdigit(file[pos])) {
            value = value * 10 + (file[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw std::runtime_error("malformed PNM header: " + path);
        return value;
    };

    RawRaster out;
    out.width = static_cast<int>(next_token());
    out.height = static_cast<int>(next_token());
    out.maxval = static_cast<int>(next_token());
    out.channels = channels;
    if (out.width <= 0 || out.height <= 0 || out.maxval <= 0 || out.maxval > 65535)
        throw std::runtime_error("bad PNM dimensions in " + path);

    std::size_t n = static_cast<std::size_t>(out.width) * out.height * channels;
    out.samples.resize(n);
    if (binary) {
        ++pos; // single whitespace after maxval
        const int bytes_per = out.maxval > 255 ? 2 : 1;
        if (file.size() - pos < n * bytes_per)
            throw std::runtime_error("truncated PNM payload in " + path);
        for (std::size_t i = 0; i < n; ++i) {
            if (bytes_per == 2)
                out.samples[i] = static_cast<std::uint16_t>((file[pos + 2 * i] << 8) | file[pos + 2 * i + 1]);
            else
                out.samples[i] = file[pos + i];
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out.samples[i] = static_cast<std::uint16_t>(next_token());
    }
    return out;
}

inline bool has_png_signature(const std::vector<unsigned char>& file) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return file.size() >= 8 && std::memcmp(file.data(), sig, 8) == 0;
}

inline RawRaster load_raster(const std::string& path) {
    std::vector<unsigned char> file = read_file_bytes(path);
    if (has_png_signature(file)) return load_png(path, file);
    if (file.size() >= 2 && file[0] == 'P') return load_pnm(path, file);
    throw std::runtime_error("unrecognized raster format: " + path);
}

inline std::string lower_extension(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

inline void save_pnm(const std::string& path, int width, int height, int channels,
                     const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void save_raster8(const std::string& path, int width, int height, int channels,
                         const std::vector<std::uint8_t>& bytes) {
    const std::string ext = lower_extension(path);
    if (ext == "pgm") {
        if (channels != 1) throw std::runtime_error("PGM requires a single channel: " + path);
        save_pnm(path, width, height, channels, bytes);
    } else if (ext == "ppm") {
        if (channels != 3) throw std::runtime_error("PPM requires three channels: " + path);
        save_pnm(path, width, height, channels, bytes);
    } else {
        save_png(path, width, height, channels, bytes);
    }
}

} // namespace detail

// Loads a PNG or PNM raster into unit-interval intensities.
inline Image load_image(const std::string& path) {
    detail::RawRaster raw = detail::load_raster(path);
    Image img(raw.width, raw.height, raw.channels);
    const double maxval = raw.maxval;
    for (std::size_t i = 0; i < raw.samples.size(); ++i)
        img.data[i] = static_cast<float>(std::min(1.0, raw.samples[i] / maxval));
    return img;
}

// Writes 8-bit PNG (default), PGM, or PPM depending on the file extension.
inline void save_image(const Image& image, const std::string& path) {
    image.validate();
    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::lround(image.data[i] * 255.0f));
    detail::save_raster8(path, image.width, image.height, image.channels, bytes);
}

// Masks load from single-channel (or channel-equal) rasters; sample > 127 is
// foreground. Values are brought to the 8-bit range first when needed.
inline BinaryMask load_mask(const std::string& path) {
    detail::RawRaster raw = detail::load_raster(path);
    BinaryMask mask(raw.width, raw.height);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        std::uint16_t s = raw.samples[i * raw.channels];
        if (raw.channels == 3) {
            if (raw.samples[i * 3 + 1] != s || raw.samples[i * 3 + 2] != s)
                throw std::runtime_error("load_mask: unequal channels in " + path);
        }
        long v8 = raw.maxval == 255 ? s : std::lround(s * 255.0 / raw.maxval);
        mask.data[i] = v8 > 127 ? 1 : 0;
    }
    return mask;
}

// Writes the mask as an 8-bit raster, 0 background / 255 foreground.
inline void save_mask(const BinaryMask& mask, const std::string& path) {
    mask.validate();
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        bytes[i] = mask.data[i] ? 255 : 0;
    detail::save_raster8(path, mask.width, mask.height, 1, bytes);
}

} // namespace flowtag
