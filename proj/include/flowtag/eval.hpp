#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "flowtag/morphology.hpp"
#include "flowtag/raster.hpp"
#include "flowtag/raster_io.hpp"

#include "json.hpp"

namespace flowtag {

// Region similarity. Two empty masks agree perfectly: sequences may contain
// frames where the object is absent.
inline double iou(const BinaryMask& prediction, const BinaryMask& ground_truth) {
    if (prediction.width != ground_truth.width || prediction.height != ground_truth.height)
        throw std::invalid_argument("iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < prediction.data.size(); ++i) {
        bool p = prediction.data[i] != 0, g = ground_truth.data[i] != 0;
        inter += p && g;
        uni += p || g;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct RegionScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

// Pixelwise precision/recall/F. Empty denominators score 0, except the
// agreement case of two empty masks which scores (1,1,1).
inline RegionScore region_fscore(const BinaryMask& prediction, const BinaryMask& ground_truth) {
    if (prediction.width != ground_truth.width || prediction.height != ground_truth.height)
        throw std::invalid_argument("region_fscore: dimension mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < prediction.data.size(); ++i) {
        bool p = prediction.data[i] != 0, g = ground_truth.data[i] != 0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    if (tp + fp + fn == 0) return {1.0, 1.0, 1.0};
    RegionScore s;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.f = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

// Benchmark convention: tolerance grows with the image diagonal.
inline int default_boundary_tolerance(int width, int height) {
    double diag = std::sqrt(static_cast<double>(width) * width +
                            static_cast<double>(height) * height);
    return static_cast<int>(std::ceil(0.008 * diag));
}

namespace detail {

// One-pixel contour: the mask minus its unit erosion.
inline BinaryMask boundary_map(const BinaryMask& mask) {
    BinaryMask eroded = erode(mask, 1);
    BinaryMask out(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        out.data[i] = mask.data[i] != eroded.data[i] ? 1 : 0;
    return out;
}

inline std::size_t count_inside(const BinaryMask& pixels, const BinaryMask& region) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pixels.data.size(); ++i)
        n += pixels.data[i] && region.data[i];
    return n;
}

} // namespace detail

// Contour F-measure: boundary pixels match when they fall within `tolerance`
// pixels of the other mask's boundary (computed by dilating the boundaries).
inline double boundary_fscore(const BinaryMask& prediction, const BinaryMask& ground_truth,
                              int tolerance) {
    if (prediction.width != ground_truth.width || prediction.height != ground_truth.height)
        throw std::invalid_argument("boundary_fscore: dimension mismatch");
    if (tolerance < 0) throw std::invalid_argument("boundary_fscore: negative tolerance");
    const BinaryMask pb = detail::boundary_map(prediction);
    const BinaryMask gb = detail::boundary_map(ground_truth);
    const std::size_t np = pb.count(), ng = gb.count();
    if (np == 0 && ng == 0) return 1.0;
    if (np == 0 || ng == 0) return 0.0;
    const double precision =
        static_cast<double>(detail::count_inside(pb, dilate(gb, tolerance))) / np;
    const double recall =
        static_cast<double>(detail::count_inside(gb, dilate(pb, tolerance))) / ng;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

struct FramePair {
    BinaryMask prediction;
    BinaryMask ground_truth;
    int frame_index = 0;
};

struct EvalPolicy {
    bool include_frame0 = false;            // frame 0 seeds the method, skip by default
    std::optional<int> boundary_tolerance;  // unset = diagonal-based default per frame

    void validate() const {
        if (boundary_tolerance && *boundary_tolerance < 0)
            throw std::invalid_argument("EvalPolicy: boundary_tolerance must be >= 0");
    }
    bool admits(int frame_index) const { return include_frame0 || frame_index != 0; }
};

// Mean per-frame IoU over the frames the policy admits.
inline double sequence_miou(const std::vector<FramePair>& frames, const EvalPolicy& policy) {
    policy.validate();
    double sum = 0.0;
    std::size_t n = 0;
    for (const FramePair& fp : frames) {
        if (!policy.admits(fp.frame_index)) continue;
        sum += iou(fp.prediction, fp.ground_truth);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("sequence_miou: no admissible frames");
    return sum / static_cast<double>(n);
}

struct SequenceManifest {
    std::string name;
    std::vector<std::string> images;       // optional source frames
    std::vector<std::string> ground_truth; // aligned with predictions
    std::vector<std::string> predictions;
    std::string proposals_dir;             // optional
};

struct DatasetManifest {
    std::vector<SequenceManifest> sequences;
};

// Manifest document: {"sequences": [{name, ground_truth: [...], predictions:
// [...], images?: [...], proposals_dir?: ...}]}. Paths resolve relative to
// the manifest file.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid JSON in " + path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("sequences") || !doc["sequences"].is_array())
        throw std::runtime_error("manifest needs a 'sequences' array: " + path.string());

    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](const nlohmann::json& arr, std::vector<std::string>& out) {
        for (const nlohmann::json& p : arr)
            out.push_back((base / p.get<std::string>()).string());
    };

    DatasetManifest manifest;
    for (const nlohmann::json& rec : doc["sequences"]) {
        if (!rec.is_object() || !rec.contains("name"))
            throw std::runtime_error("sequence record without 'name' in " + path.string());
        SequenceManifest seq;
        seq.name = rec.at("name").get<std::string>();
        if (!rec.contains("ground_truth") || !rec.contains("predictions"))
            throw std::runtime_error("sequence '" + seq.name + "' in " + path.string() +
                                     " needs 'ground_truth' and 'predictions' arrays");
        resolve(rec.at("ground_truth"), seq.ground_truth);
        resolve(rec.at("predictions"), seq.predictions);
        if (rec.contains("images")) resolve(rec.at("images"), seq.images);
        if (rec.contains("proposals_dir"))
            seq.proposals_dir = (base / rec.at("proposals_dir").get<std::string>()).string();
        manifest.sequences.push_back(std::move(seq));
    }
    return manifest;
}

struct FrameScore {
    std::string sequence;
    int frame_index = 0;
    double iou = 0.0;
};

struct SequenceScore {
    std::string sequence;
    double mean_iou = 0.0;
    double region_f = 0.0;
    double boundary_f = 0.0;
};

struct EvalReport {
    std::vector<FrameScore> per_frame;
    std::vector<SequenceScore> per_sequence;
    double dataset_mean_iou = 0.0;
    double dataset_region_f = 0.0;
    double dataset_boundary_f = 0.0;
    EvalPolicy policy;
};

namespace detail {

struct SequenceResult {
    SequenceScore score;
    std::vector<FrameScore> frames;
};

inline SequenceResult evaluate_sequence(const SequenceManifest& seq, const EvalPolicy& policy) {
    if (seq.predictions.empty())
        throw std::runtime_error("sequence '" + seq.name + "': no prediction frames");
    if (seq.predictions.size() != seq.ground_truth.size())
        throw std::runtime_error("sequence '" + seq.name + "': " +
                                 std::to_string(seq.predictions.size()) + " predictions vs " +
                                 std::to_string(seq.ground_truth.size()) + " ground-truth frames");

    SequenceResult result;
    result.score.sequence = seq.name;
    double sum_iou = 0.0, sum_rf = 0.0, sum_bf = 0.0;
    std::size_t admitted = 0;
    for (std::size_t k = 0; k < seq.predictions.size(); ++k) {
        BinaryMask pred, gt;
        try {
            pred = load_mask(seq.predictions[k]);
            gt = load_mask(seq.ground_truth[k]);
        } catch (const std::exception& e) {
            throw std::runtime_error("sequence '" + seq.name + "' frame " + std::to_string(k) +
                                     ": " + e.what());
        }
        if (pred.width != gt.width || pred.height != gt.height)
            throw std::runtime_error("sequence '" + seq.name + "' frame " + std::to_string(k) +
                                     ": prediction/ground-truth size mismatch");
        const double frame_iou = iou(pred, gt);
        result.frames.push_back({seq.name, static_cast<int>(k), frame_iou});
        if (!policy.admits(static_cast<int>(k))) continue;
        const int tol = policy.boundary_tolerance
                            ? *policy.boundary_tolerance
                            : default_boundary_tolerance(pred.width, pred.height);
        sum_iou += frame_iou;
        sum_rf += region_fscore(pred, gt).f;
        sum_bf += boundary_fscore(pred, gt, tol);
        ++admitted;
    }
    if (admitted == 0)
        throw std::runtime_error("sequence '" + seq.name + "': no admissible frames under policy");
    result.score.mean_iou = sum_iou / static_cast<double>(admitted);
    result.score.region_f = sum_rf / static_cast<double>(admitted);
    result.score.boundary_f = sum_bf / static_cast<double>(admitted);
    return result;
}

} // namespace detail

// Evaluate every sequence (concurrently up to `workers`; 0 = hardware
// default) and aggregate as the mean of per-sequence means. Results are
// assembled in manifest order, so output is independent of scheduling.
inline EvalReport evaluate_dataset(const DatasetManifest& manifest, const EvalPolicy& policy = {},
                                   int workers = 0) {
    policy.validate();
    if (manifest.sequences.empty()) throw std::runtime_error("no sequences in manifest");

    const std::size_t n = manifest.sequences.size();
    std::vector<detail::SequenceResult> results(n);
    std::vector<std::exception_ptr> errors(n);

    int pool = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
    pool = std::max(1, std::min<int>(pool, static_cast<int>(n)));

    std::atomic<std::size_t> next{0};
    auto run = [&]() {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                results[i] = detail::evaluate_sequence(manifest.sequences[i], policy);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (pool == 1) {
        run();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < pool; ++t) threads.emplace_back(run);
        for (std::thread& t : threads) t.join();
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);

    EvalReport report;
    report.policy = policy;
    double sum_iou = 0.0, sum_rf = 0.0, sum_bf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        report.per_sequence.push_back(results[i].score);
        report.per_frame.insert(report.per_frame.end(), results[i].frames.begin(),
                                results[i].frames.end());
        sum_iou += results[i].score.mean_iou;
        sum_rf += results[i].score.region_f;
        sum_bf += results[i].score.boundary_f;
    }
    report.dataset_mean_iou = sum_iou / static_cast<double>(n);
    report.dataset_region_f = sum_rf / static_cast<double>(n);
    report.dataset_boundary_f = sum_bf / static_cast<double>(n);
    return report;
}

struct AnalysisRow {
    int radius = 0;
    std::string variant; // "baseline" | "erode" | "dilate"
    double iou = 0.0;
};

// Sensitivity of accuracy to tagging precision: score the mask as-is, then
// eroded and dilated at each radius.
inline std::vector<AnalysisRow> erosion_dilation_analysis(const BinaryMask& pseudo_gt,
                                                          const BinaryMask& ground_truth,
                                                          const std::vector<int>& radii) {
    if (pseudo_gt.width != ground_truth.width || pseudo_gt.height != ground_truth.height)
        throw std::invalid_argument("erosion_dilation_analysis: dimension mismatch");
    for (int r : radii)
        if (r < 1) throw std::invalid_argument("erosion_dilation_analysis: radii must be >= 1");

    std::vector<AnalysisRow> rows;
    rows.push_back({0, "baseline", iou(pseudo_gt, ground_truth)});
    for (int r : radii) {
        rows.push_back({r, "erode", iou(erode(pseudo_gt, r), ground_truth)});
        rows.push_back({r, "dilate", iou(dilate(pseudo_gt, r), ground_truth)});
    }
    return rows;
}

namespace detail {

inline std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
    return buf;
}

} // namespace detail

inline nlohmann::ordered_json policy_to_json(const EvalPolicy& policy) {
    nlohmann::ordered_json j;
    j["include_frame0"] = policy.include_frame0;
    if (policy.boundary_tolerance)
        j["boundary_tolerance"] = *policy.boundary_tolerance;
    else
        j["boundary_tolerance"] = nullptr; // per-frame diagonal default
    j["iou_both_empty"] = 1.0;
    j["aggregation"] = "mean_of_sequence_means";
    return j;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["config"] = policy_to_json(report.policy);
    j["dataset"] = {{"mean_iou", report.dataset_mean_iou},
                    {"region_f", report.dataset_region_f},
                    {"boundary_f", report.dataset_boundary_f}};
    j["per_sequence"] = nlohmann::ordered_json::array();
    for (const SequenceScore& s : report.per_sequence)
        j["per_sequence"].push_back({{"sequence", s.sequence},
                                     {"mean_iou", s.mean_iou},
                                     {"region_f", s.region_f},
                                     {"boundary_f", s.boundary_f}});
    j["per_frame"] = nlohmann::ordered_json::array();
    for (const FrameScore& f : report.per_frame)
        j["per_frame"].push_back(
            {{"sequence", f.sequence}, {"frame", f.frame_index}, {"iou", f.iou}});
    return j;
}

// Plain-text table, scores x100 with one decimal.
inline std::string render_report_table(const EvalReport& report) {
    std::size_t name_w = std::string("dataset mean").size();
    for (const SequenceScore& s : report.per_sequence) name_w = std::max(name_w, s.sequence.size());

    std::string out;
    auto row = [&](const std::string& name, double a, double b, double c) {
        out += name;
        out.append(name_w - name.size() + 2, ' ');
        for (double v : {a, b, c}) {
            std::string cell = detail::percent(v);
            out.append(cell.size() < 7 ? 7 - cell.size() : 1, ' ');
            out += cell;
        }
        out += '\n';
    };
    out += "sequence";
    out.append(name_w - 8 + 2, ' ');
    out += "   mIoU  F-reg  F-bnd\n";
    for (const SequenceScore& s : report.per_sequence)
        row(s.sequence, s.mean_iou, s.region_f, s.boundary_f);
    row("dataset mean", report.dataset_mean_iou, report.dataset_region_f,
        report.dataset_boundary_f);
    return out;
}

inline nlohmann::ordered_json analysis_to_json(const std::vector<AnalysisRow>& rows) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const AnalysisRow& r : rows)
        arr.push_back({{"radius", r.radius}, {"variant", r.variant}, {"iou", r.iou}});
    return arr;
}

inline std::string render_analysis_table(const std::vector<AnalysisRow>& rows) {
    std::string out = "variant   radius   IoU\n";
    for (const AnalysisRow& r : rows) {
        std::string line = r.variant;
        line.append(line.size() < 10 ? 10 - line.size() : 1, ' ');
        std::string rad = std::to_string(r.radius);
        line.append(rad.size() < 6 ? 6 - rad.size() : 1, ' ');
        line += rad;
        std::string cell = detail::percent(r.iou);
        line.append(cell.size() < 8 ? 8 - cell.size() : 1, ' ');
        line += cell;
        out += line + '\n';
    }
    return out;
}

} // namespace flowtag
