#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "flowtag/flo_io.hpp"
#include "flowtag/morphology.hpp"
#include "flowtag/raster.hpp"
#include "flowtag/raster_io.hpp"

namespace flowtag {

// Online-adaptation example harvesting: high-confidence pixels become fresh
// positives, pixels far from the last predicted mask become negatives, the
// rest is excluded from the update.
struct AdaptConfig {
    double positive_threshold = 0.97; // confidence >= this -> positive
    double negative_distance = 200.0; // distance (px) strictly beyond -> negative

    void validate() const {
        if (!(positive_threshold > 0 && positive_threshold < 1))
            throw std::invalid_argument("AdaptConfig: positive_threshold must be in (0,1)");
        if (!(negative_distance >= 0))
            throw std::invalid_argument("AdaptConfig: negative_distance must be >= 0");
    }
};

struct AdaptationExamples {
    BinaryMask positives;
    BinaryMask negatives;
    BinaryMask dontcare;
};

// Positives: confidence >= positive_threshold. Negatives: Euclidean distance
// to the last mask strictly greater than negative_distance, minus positives
// (the fresher confidence signal wins conflicts). Everything else is
// dontcare; the three masks partition the frame. The distance comparison
// runs on exact integer squared distances, so d > r is decided as d^2 > r^2
// with no rounding; an empty last mask puts every pixel beyond any radius.
inline AdaptationExamples select_adaptation_examples(const ScalarMap& confidence,
                                                     const BinaryMask& last_mask,
                                                     const AdaptConfig& config) {
    config.validate();
    if (confidence.width != last_mask.width || confidence.height != last_mask.height)
        throw std::invalid_argument("select_adaptation_examples: dimension mismatch");

    const std::vector<std::int64_t> d2 = detail::squared_edt(last_mask);
    const double r2 = config.negative_distance * config.negative_distance;

    AdaptationExamples out{BinaryMask(confidence.width, confidence.height),
                           BinaryMask(confidence.width, confidence.height),
                           BinaryMask(confidence.width, confidence.height)};
    for (std::size_t i = 0; i < confidence.data.size(); ++i) {
        if (confidence.data[i] >= config.positive_threshold)
            out.positives.data[i] = 1;
        else if (static_cast<double>(d2[i]) > r2)
            out.negatives.data[i] = 1;
        else
            out.dontcare.data[i] = 1;
    }
    return out;
}

// Confidence maps arrive either as single-channel 8/16-bit rasters (scaled by
// maxval) or as the single-channel float layout (sniffed by magic number).
inline ScalarMap load_confidence(const std::string& path) {
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("load_confidence: cannot open " + path);
        float magic = 0.0f;
        if (detail::get_f32le(in, magic) && magic == kFloMagic) {
            in.close();
            ScalarMap map = read_scalar_flo(path);
            for (float v : map.data)
                if (!(v >= 0.0f && v <= 1.0f))
                    throw std::runtime_error("load_confidence: value outside [0,1] in " + path);
            return map;
        }
    }
    detail::RawRaster raw = detail::load_raster(path);
    if (raw.channels != 1)
        throw std::runtime_error("load_confidence: expected single-channel raster: " + path);
    ScalarMap map(raw.width, raw.height);
    const double maxval = raw.maxval;
    for (std::size_t i = 0; i < map.data.size(); ++i)
        map.data[i] = static_cast<float>(raw.samples[i] / maxval);
    return map;
}

} // namespace flowtag
