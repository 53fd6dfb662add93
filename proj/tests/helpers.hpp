#pragma once

// Shared fixtures for the test suites: seeded synthetic textures, the
// moving-square scene, temp directories, and CLI invocation.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "flowtag/raster.hpp"

namespace testutil {

inline std::mt19937 rng(unsigned seed) { return std::mt19937(seed); }

inline flowtag::BinaryMask random_mask(std::mt19937& g, int w, int h, double density = 0.5) {
    std::bernoulli_distribution bit(density);
    flowtag::BinaryMask m(w, h);
    for (auto& v : m.data) v = bit(g) ? 1 : 0;
    return m;
}

inline flowtag::Image random_image(std::mt19937& g, int w, int h, int channels = 1) {
    std::uniform_real_distribution<float> val(0.0f, 1.0f);
    flowtag::Image img(w, h, channels);
    for (auto& v : img.data) v = val(g);
    return img;
}

// Band-limited texture: a weighted sum of bilinearly upsampled noise grids.
// Each octave is (cells x cells) control points stretched over the full
// raster, so the coarsest octave survives heavy pyramid downsampling.
inline flowtag::Image noise_texture(std::mt19937& g, int w, int h,
                                    const std::vector<std::pair<int, double>>& octaves =
                                        {{4, 0.28}, {9, 0.22}, {18, 0.12}}) {
    flowtag::Image img(w, h, 1);
    for (auto& v : img.data) v = 0.5f;
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    for (const auto& [cells, weight] : octaves) {
        std::vector<double> grid(static_cast<std::size_t>(cells + 1) * (cells + 1));
        for (double& v : grid) v = amp(g);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double gx = w > 1 ? static_cast<double>(x) / (w - 1) * cells : 0.0;
                double gy = h > 1 ? static_cast<double>(y) / (h - 1) * cells : 0.0;
                int x0 = std::min(static_cast<int>(gx), cells - 1);
                int y0 = std::min(static_cast<int>(gy), cells - 1);
                double fx = gx - x0, fy = gy - y0;
                auto at = [&](int xx, int yy) {
                    return grid[static_cast<std::size_t>(yy) * (cells + 1) + xx];
                };
                double top = at(x0, y0) + fx * (at(x0 + 1, y0) - at(x0, y0));
                double bot = at(x0, y0 + 1) + fx * (at(x0 + 1, y0 + 1) - at(x0, y0 + 1));
                img.at(x, y) += static_cast<float>(weight * (top + fy * (bot - top)));
            }
    }
    for (auto& v : img.data) v = std::min(0.98f, std::max(0.02f, v));
    return img;
}

// Frame pair where the whole scene translates by an integer (dx,dy): both
// frames crop the same larger texture at shifted origins, so the true flow
// is exactly (dx,dy) with no occlusions.
struct TranslationPair {
    flowtag::Image first;
    flowtag::Image second;
    int dx = 0;
    int dy = 0;
};

inline TranslationPair make_translation_pair(unsigned seed, int w, int h, int dx, int dy,
                                             int margin = 16) {
    std::mt19937 g = rng(seed);
    flowtag::Image big = noise_texture(g, w + 2 * margin, h + 2 * margin);
    auto crop = [&](int ox, int oy) {
        flowtag::Image out(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(x, y) = big.at(x + ox, y + oy);
        return out;
    };
    TranslationPair pair;
    pair.first = crop(margin, margin);
    pair.second = crop(margin - dx, margin - dy);
    pair.dx = dx;
    pair.dy = dy;
    return pair;
}

// Static textured background with a contrasting textured square that moves
// by (dx,dy) between the frames. `square` marks the first-frame position.
struct MovingSquare {
    flowtag::Image first;
    flowtag::Image second;
    flowtag::BinaryMask square;
};

inline MovingSquare make_moving_square(unsigned seed, int w, int h, int sq_x, int sq_y,
                                       int sq_size, int dx, int dy) {
    std::mt19937 g = rng(seed);
    flowtag::Image background = noise_texture(g, w, h, {{6, 0.3}, {14, 0.25}, {28, 0.1}});
    for (auto& v : background.data) v = 0.05f + 0.5f * v; // dark half of the range
    flowtag::Image patch = noise_texture(g, sq_size, sq_size, {{3, 0.3}, {7, 0.25}});
    for (auto& v : patch.data) v = 0.55f + 0.43f * v; // bright half

    MovingSquare scene;
    scene.first = background;
    scene.second = background;
    scene.square = flowtag::BinaryMask(w, h);
    for (int y = 0; y < sq_size; ++y)
        for (int x = 0; x < sq_size; ++x) {
            scene.first.at(sq_x + x, sq_y + y) = patch.at(x, y);
            scene.second.at(sq_x + dx + x, sq_y + dy + y) = patch.at(x, y);
            scene.square.set(sq_x + x, sq_y + y, true);
        }
    return scene;
}

inline flowtag::BinaryMask rect_mask(int w, int h, int x0, int y0, int rw, int rh) {
    flowtag::BinaryMask m(w, h);
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) m.set(x, y, true);
    return m;
}

// Scratch directory removed on destruction.
class TempDir {
  public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        std::random_device rd;
        std::ostringstream name;
        name << "flowtag-test-" << ::getpid() << "-" << counter.fetch_add(1) << "-" << rd();
        path_ = std::filesystem::temp_directory_path() / name.str();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel) const { return (path_ / rel).string(); }

  private:
    std::filesystem::path path_;
};

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

// Run the CLI binary with the given arguments, capturing combined output.
// `env` is prepended verbatim, e.g. "FLOWTAG_WORKERS=2".
inline CliResult run_cli(const std::string& args, const TempDir& dir,
                         const std::string& env = "") {
    static std::atomic<unsigned> counter{0};
    std::string capture = dir.str("cli-output-" + std::to_string(counter.fetch_add(1)) + ".txt");
    std::string cmd = (env.empty() ? "" : env + " ") + std::string(FLOWTAG_CLI_PATH) + " " + args +
                      " > '" + capture + "' 2>&1";
    int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(capture, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    result.output = buf.str();
    return result;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("test helper: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

} // namespace testutil
