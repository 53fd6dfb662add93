#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowtag/flow.hpp"
#include "flowtag/morphology.hpp"
#include "flowtag/raster.hpp"
#include "flowtag/raster_io.hpp"

#include "json.hpp"

namespace flowtag {

struct InstanceProposal {
    std::string id;
    std::string category;
    double score = 0.0;
    BinaryMask mask;

    void validate() const {
        if (mask.count() == 0)
            throw std::invalid_argument("InstanceProposal '" + id + "': mask is empty");
        if (!(score >= 0.0 && score <= 1.0))
            throw std::invalid_argument("InstanceProposal '" + id + "': score outside [0,1]");
    }
};

struct TagConfig {
    double flow_threshold = 0.25;      // fraction of (normalized) magnitude
    bool normalize = true;             // divide magnitude by its max first
    double overlap_threshold = 0.8;    // strict: selection requires overlap > this
    std::optional<int> min_flow_pixels;// degenerate-motion guard; unset = 0.1% of frame
    bool largest_component_only = true;// clean the fallback mask

    void validate() const {
        if (!(flow_threshold > 0 && flow_threshold < 1))
            throw std::invalid_argument("TagConfig: flow_threshold must be in (0,1)");
        if (!(overlap_threshold > 0 && overlap_threshold <= 1))
            throw std::invalid_argument("TagConfig: overlap_threshold must be in (0,1]");
        if (min_flow_pixels && *min_flow_pixels < 0)
            throw std::invalid_argument("TagConfig: min_flow_pixels must be >= 0");
    }

    int effective_min_flow_pixels(int width, int height) const {
        if (min_flow_pixels) return *min_flow_pixels;
        return static_cast<int>(std::llround(0.001 * width * height));
    }
};

enum class TagSource { proposals, flow_fallback };

inline const char* to_string(TagSource source) {
    return source == TagSource::proposals ? "proposals" : "flow_fallback";
}

struct PseudoGroundTruth {
    BinaryMask mask;
    TagSource source = TagSource::flow_fallback;
    std::vector<std::string> selected_ids;
    BinaryMask flow_mask;     // the thresholded motion mask that drove selection
    bool degenerate = false;  // motion below the min_flow_pixels guard
};

// Normalize the magnitude by its maximum (optional) and keep pixels strictly
// above the threshold. An all-zero map yields an empty mask.
inline BinaryMask threshold_flow(const ScalarMap& magnitude, const TagConfig& config) {
    config.validate();
    double max_mag = 0.0;
    for (float m : magnitude.data) max_mag = std::max(max_mag, static_cast<double>(m));
    const double scale = (config.normalize && max_mag > 0.0) ? 1.0 / max_mag : 1.0;
    BinaryMask mask(magnitude.width, magnitude.height);
    for (std::size_t i = 0; i < magnitude.data.size(); ++i)
        mask.data[i] = magnitude.data[i] * scale > config.flow_threshold ? 1 : 0;
    return mask;
}

// Fraction of the proposal's own pixels covered by the flow mask.
inline double proposal_overlap(const BinaryMask& proposal, const BinaryMask& flow_mask) {
    if (proposal.width != flow_mask.width || proposal.height != flow_mask.height)
        throw std::invalid_argument("proposal_overlap: dimension mismatch");
    std::size_t inter = 0, area = 0;
    for (std::size_t i = 0; i < proposal.data.size(); ++i) {
        if (proposal.data[i]) {
            ++area;
            if (flow_mask.data[i]) ++inter;
        }
    }
    if (area == 0) throw std::invalid_argument("proposal_overlap: empty proposal mask");
    return static_cast<double>(inter) / static_cast<double>(area);
}

// Keep proposals whose overlap with the flow mask is strictly greater than
// the threshold, preserving input order.
inline std::vector<InstanceProposal> select_proposals(const std::vector<InstanceProposal>& proposals,
                                                      const BinaryMask& flow_mask,
                                                      const TagConfig& config) {
    config.validate();
    std::vector<InstanceProposal> selected;
    for (const InstanceProposal& p : proposals)
        if (proposal_overlap(p.mask, flow_mask) > config.overlap_threshold)
            selected.push_back(p);
    return selected;
}

// Pixelwise union; category labels are dropped. An empty list yields an
// empty 0x0 mask (the list carries no dimensions).
inline BinaryMask merge_to_foreground(const std::vector<InstanceProposal>& selected) {
    if (selected.empty()) return BinaryMask(0, 0);
    BinaryMask out(selected.front().mask.width, selected.front().mask.height);
    for (const InstanceProposal& p : selected) {
        if (p.mask.width != out.width || p.mask.height != out.height)
            throw std::invalid_argument("merge_to_foreground: proposal dimension mismatch");
        for (std::size_t i = 0; i < out.data.size(); ++i)
            if (p.mask.data[i]) out.data[i] = 1;
    }
    return out;
}

// Full tagging pipeline: flow -> magnitude -> threshold -> select -> merge.
// Falls back to the (optionally largest-component) flow mask when nothing is
// selected; motion below the guard yields an empty degenerate result.
inline PseudoGroundTruth make_pseudo_gt(const Image& first, const Image& second,
                                        const std::vector<InstanceProposal>& proposals,
                                        const FlowParams& flow_params, const TagConfig& config) {
    config.validate();
    if (!first.same_size(second))
        throw std::invalid_argument("make_pseudo_gt: frame dimension mismatch");

    const FlowField flow = compute_flow(first, second, flow_params);
    const ScalarMap magnitude = flow_magnitude(flow);

    PseudoGroundTruth result;
    result.flow_mask = threshold_flow(magnitude, config);

    const int min_pixels = config.effective_min_flow_pixels(first.width, first.height);
    if (static_cast<long long>(result.flow_mask.count()) < min_pixels) {
        result.mask = BinaryMask(first.width, first.height);
        result.source = TagSource::flow_fallback;
        result.degenerate = true;
        return result;
    }

    const std::vector<InstanceProposal> selected =
        select_proposals(proposals, result.flow_mask, config);
    if (!selected.empty()) {
        result.mask = merge_to_foreground(selected);
        result.source = TagSource::proposals;
        for (const InstanceProposal& p : selected) result.selected_ids.push_back(p.id);
        return result;
    }

    result.source = TagSource::flow_fallback;
    result.mask = result.flow_mask;
    if (config.largest_component_only && result.mask.count() > 0) {
        std::vector<Component> components = connected_components(result.mask);
        result.mask = components.front().mask;
    }
    return result;
}

// Proposal manifest: a JSON array of {id, category, score, mask} records;
// mask paths are relative to the manifest's directory.
inline std::vector<InstanceProposal> load_proposals(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open proposals manifest: " + manifest_path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid JSON in " + manifest_path.string() + ": " + e.what());
    }
    if (!doc.is_array())
        throw std::runtime_error("proposals manifest must be a JSON array: " + manifest_path.string());

    const std::filesystem::path base = manifest_path.parent_path();
    std::vector<InstanceProposal> proposals;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const nlohmann::json& rec = doc[i];
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("mask"))
            throw std::runtime_error("proposal record " + std::to_string(i) + " in " +
                                     manifest_path.string() + " needs 'id' and 'mask' fields");
        InstanceProposal p;
        p.id = rec.at("id").get<std::string>();
        p.category = rec.value("category", std::string{});
        p.score = rec.value("score", 1.0);
        p.mask = load_mask(base / rec.at("mask").get<std::string>());
        p.validate();
        proposals.push_back(std::move(p));
    }
    return proposals;
}

} // namespace flowtag
