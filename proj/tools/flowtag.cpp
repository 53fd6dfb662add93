#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "flowtag/adapt.hpp"
#include "flowtag/eval.hpp"
#include "flowtag/flo_io.hpp"
#include "flowtag/flow.hpp"
#include "flowtag/raster_io.hpp"
#include "flowtag/tagger.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

bool g_verbose = false;

void note(const std::string& msg) {
    if (g_verbose) std::cerr << msg << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const ordered_json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

ordered_json flow_params_json(const flowtag::FlowParams& p) {
    return {{"alpha", p.alpha},
            {"pyramid_ratio", p.pyramid_ratio},
            {"min_width", p.min_width},
            {"outer_iterations", p.outer_iterations},
            {"inner_iterations", p.inner_iterations},
            {"sor_iterations", p.sor_iterations},
            {"sor_omega", p.sor_omega},
            {"epsilon", p.epsilon}};
}

ordered_json tag_config_json(const flowtag::TagConfig& c, int width, int height) {
    return {{"flow_threshold", c.flow_threshold},
            {"normalize", c.normalize},
            {"overlap_threshold", c.overlap_threshold},
            {"min_flow_pixels", c.effective_min_flow_pixels(width, height)},
            {"largest_component_only", c.largest_component_only}};
}

// Frame files of a sequence directory, sorted by name.
std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> frames;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm")
            frames.push_back(e.path());
    }
    std::sort(frames.begin(), frames.end());
    return frames;
}

void add_flow_params(CLI::App* cmd, flowtag::FlowParams& p) {
    cmd->add_option("--alpha", p.alpha, "smoothness weight")->capture_default_str();
    cmd->add_option("--pyramid-ratio", p.pyramid_ratio, "pyramid downscale ratio in (0,1)")
        ->capture_default_str();
    cmd->add_option("--min-width", p.min_width, "coarsest pyramid level width")
        ->capture_default_str();
    cmd->add_option("--outer-iterations", p.outer_iterations, "relinearizations per level")
        ->capture_default_str();
    cmd->add_option("--inner-iterations", p.inner_iterations, "weight refreshes per outer step")
        ->capture_default_str();
    cmd->add_option("--sor-iterations", p.sor_iterations, "SOR sweeps per linear solve")
        ->capture_default_str();
    cmd->add_option("--sor-omega", p.sor_omega, "SOR relaxation factor in (0,2)")
        ->capture_default_str();
    cmd->add_option("--epsilon", p.epsilon, "robust penalty constant")->capture_default_str();
}

void add_tag_config(CLI::App* cmd, flowtag::TagConfig& c) {
    cmd->add_option("--flow-threshold", c.flow_threshold, "magnitude threshold after normalization")
        ->capture_default_str();
    cmd->add_flag("--normalize,!--no-normalize", c.normalize,
                  "normalize magnitude by its maximum");
    cmd->add_option("--overlap-threshold", c.overlap_threshold,
                    "proposal selection needs overlap strictly above this")
        ->capture_default_str();
    cmd->add_option("--min-flow-pixels", c.min_flow_pixels,
                    "degenerate-motion guard (default: 0.1% of frame area)");
    cmd->add_flag("--largest-component-only,!--keep-all-components", c.largest_component_only,
                  "reduce the fallback mask to its largest component");
}

int cmd_flow(const fs::path& first_path, const fs::path& second_path, const fs::path& out,
             const std::string& magnitude_out, const flowtag::FlowParams& params) {
    params.validate();
    const flowtag::Image first = flowtag::load_image(first_path.string());
    const flowtag::Image second = flowtag::load_image(second_path.string());
    note("computing flow " + first_path.string() + " -> " + second_path.string());
    const flowtag::FlowField flow = flowtag::compute_flow(first, second, params);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    flowtag::write_flo(flow, out.string());
    note("wrote " + out.string());
    if (!magnitude_out.empty()) {
        flowtag::ScalarMap mag = flowtag::flow_magnitude(flow);
        float max_mag = 0.0f;
        for (float m : mag.data) max_mag = std::max(max_mag, m);
        flowtag::Image vis(mag.width, mag.height, 1);
        for (std::size_t i = 0; i < mag.data.size(); ++i)
            vis.data[i] = max_mag > 0.0f ? mag.data[i] / max_mag : 0.0f;
        flowtag::save_image(vis, magnitude_out);
        note("wrote " + magnitude_out);
    }
    return 0;
}

int cmd_tag(const fs::path& sequence_dir, std::string proposals_path, int frame,
            const fs::path& out, std::string report_path, const flowtag::FlowParams& params,
            const flowtag::TagConfig& config) {
    params.validate();
    config.validate();
    const std::vector<fs::path> frames = list_frames(sequence_dir);
    if (frame < 0) throw std::runtime_error("frame index must be >= 0");
    if (frames.size() < static_cast<std::size_t>(frame) + 2)
        throw std::runtime_error("sequence " + sequence_dir.string() + " has " +
                                 std::to_string(frames.size()) + " frames, need at least " +
                                 std::to_string(frame + 2));
    const fs::path first_path = frames[static_cast<std::size_t>(frame)];
    const fs::path second_path = frames[static_cast<std::size_t>(frame) + 1];
    const flowtag::Image first = flowtag::load_image(first_path.string());
    const flowtag::Image second = flowtag::load_image(second_path.string());

    if (proposals_path.empty()) proposals_path = (sequence_dir / "proposals.json").string();
    std::vector<flowtag::InstanceProposal> proposals;
    bool manifest_found = fs::exists(proposals_path);
    if (manifest_found) proposals = flowtag::load_proposals(proposals_path);
    note(manifest_found ? "loaded " + std::to_string(proposals.size()) + " proposals"
                        : "no proposals manifest, flow fallback only");

    const flowtag::PseudoGroundTruth pgt =
        flowtag::make_pseudo_gt(first, second, proposals, params, config);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    flowtag::save_mask(pgt.mask, out.string());
    note("wrote " + out.string());

    ordered_json report;
    report["source"] = flowtag::to_string(pgt.source);
    report["degenerate"] = pgt.degenerate;
    report["selected_ids"] = pgt.selected_ids;
    report["frames"] = {first_path.string(), second_path.string()};
    report["proposals_manifest"] =
        manifest_found ? ordered_json(proposals_path) : ordered_json(nullptr);
    report["proposal_count"] = proposals.size();
    report["mask"] = out.string();
    report["mask_pixels"] = pgt.mask.count();
    report["flow_mask_pixels"] = pgt.flow_mask.count();
    report["flow_params"] = flow_params_json(params);
    report["tag_config"] = tag_config_json(config, first.width, first.height);
    if (report_path.empty()) report_path = fs::path(out).replace_extension(".json").string();
    write_json(report_path, report);
    note("wrote " + report_path);
    if (pgt.degenerate)
        std::cerr << "warning: motion below min-flow-pixels guard, wrote empty mask\n";
    return 0;
}

int cmd_eval(const fs::path& manifest_path, const fs::path& out, const std::string& table_path,
             const flowtag::EvalPolicy& policy, int workers) {
    policy.validate();
    const flowtag::DatasetManifest manifest = flowtag::load_manifest(manifest_path);
    note("evaluating " + std::to_string(manifest.sequences.size()) + " sequences");
    const flowtag::EvalReport report = flowtag::evaluate_dataset(manifest, policy, workers);
    write_json(out, flowtag::report_to_json(report));
    note("wrote " + out.string());
    const std::string table = flowtag::render_report_table(report);
    if (!table_path.empty()) {
        write_text(table_path, table);
        note("wrote " + table_path);
    }
    std::cout << table;
    return 0;
}

int cmd_analyze(const fs::path& pseudo_path, const fs::path& gt_path, std::vector<int> radii,
                bool baseline_only, const fs::path& out) {
    if (baseline_only) radii.clear();
    const flowtag::BinaryMask pseudo = flowtag::load_mask(pseudo_path.string());
    const flowtag::BinaryMask gt = flowtag::load_mask(gt_path.string());
    const std::vector<flowtag::AnalysisRow> rows =
        flowtag::erosion_dilation_analysis(pseudo, gt, radii);
    ordered_json doc;
    doc["config"] = {{"pseudo_gt", pseudo_path.string()},
                     {"ground_truth", gt_path.string()},
                     {"radii", radii}};
    doc["rows"] = flowtag::analysis_to_json(rows);
    write_json(out, doc);
    note("wrote " + out.string());
    std::cout << flowtag::render_analysis_table(rows);
    return 0;
}

int cmd_adapt(const fs::path& confidence_path, const fs::path& mask_path,
              const fs::path& out_positives, const fs::path& out_negatives,
              const std::string& out_dontcare, std::string report_path,
              const flowtag::AdaptConfig& config) {
    config.validate();
    const flowtag::ScalarMap confidence = flowtag::load_confidence(confidence_path.string());
    const flowtag::BinaryMask last_mask = flowtag::load_mask(mask_path.string());
    const flowtag::AdaptationExamples ex =
        flowtag::select_adaptation_examples(confidence, last_mask, config);
    for (const fs::path& p : {out_positives, out_negatives})
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
    flowtag::save_mask(ex.positives, out_positives.string());
    flowtag::save_mask(ex.negatives, out_negatives.string());
    if (!out_dontcare.empty()) flowtag::save_mask(ex.dontcare, out_dontcare);

    ordered_json report;
    report["confidence"] = confidence_path.string();
    report["last_mask"] = mask_path.string();
    report["positive_threshold"] = config.positive_threshold;
    report["negative_distance"] = config.negative_distance;
    report["positives"] = ex.positives.count();
    report["negatives"] = ex.negatives.count();
    report["dontcare"] = ex.dontcare.count();
    if (report_path.empty())
        report_path = fs::path(out_positives).replace_extension(".json").string();
    write_json(report_path, report);
    note("wrote " + report_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"optical-flow foreground tagging and segmentation evaluation"};
    app.set_version_flag("--version", "flowtag 0.1.0");
    app.set_config("--config", "", "read defaults from a config file (flags take precedence)");
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", g_verbose, "progress messages on stderr");

    // flow
    auto* flow = app.add_subcommand("flow", "compute optical flow between two frames");
    fs::path flow_first, flow_second, flow_out;
    std::string flow_magnitude_out;
    flowtag::FlowParams flow_params;
    flow->add_option("--first", flow_first, "first frame")->required();
    flow->add_option("--second", flow_second, "second frame")->required();
    flow->add_option("--out", flow_out, "output .flo path")->required();
    flow->add_option("--magnitude", flow_magnitude_out, "optional magnitude raster (normalized)");
    add_flow_params(flow, flow_params);

    // tag
    auto* tag = app.add_subcommand("tag", "generate a pseudo ground truth mask");
    fs::path tag_sequence, tag_out;
    std::string tag_proposals, tag_report;
    int tag_frame = 0;
    flowtag::FlowParams tag_flow_params;
    flowtag::TagConfig tag_config;
    tag->add_option("--sequence", tag_sequence, "sequence directory (frames sorted by name)")
        ->required();
    tag->add_option("--proposals", tag_proposals,
                    "proposals manifest (default: <sequence>/proposals.json)");
    tag->add_option("--frame", tag_frame, "tag the pair (frame, frame+1)")->capture_default_str();
    tag->add_option("--out", tag_out, "output mask raster")->required();
    tag->add_option("--report", tag_report, "provenance JSON (default: out with .json)");
    add_flow_params(tag, tag_flow_params);
    add_tag_config(tag, tag_config);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate predictions against ground truth");
    fs::path eval_manifest, eval_out;
    std::string eval_table;
    flowtag::EvalPolicy eval_policy;
    int eval_workers = 0;
    eval->add_option("--manifest", eval_manifest, "dataset manifest JSON")->required();
    eval->add_option("--out", eval_out, "output report JSON")->required();
    eval->add_option("--table", eval_table, "also write the rendered table here");
    eval->add_flag("--include-frame0", eval_policy.include_frame0,
                   "score frame 0 as well (excluded by default)");
    eval->add_option("--boundary-tolerance", eval_policy.boundary_tolerance,
                     "contour match tolerance in px (default: 0.8% of diagonal)");
    eval->add_option("--workers", eval_workers, "worker threads (0 = hardware)")
        ->envname("FLOWTAG_WORKERS")
        ->capture_default_str();

    // analyze
    auto* analyze = app.add_subcommand("analyze", "erosion/dilation sensitivity analysis");
    fs::path an_pseudo, an_gt, an_out;
    std::vector<int> an_radii{5};
    bool an_baseline_only = false;
    analyze->add_option("--pseudo", an_pseudo, "pseudo ground truth mask")->required();
    analyze->add_option("--gt", an_gt, "reference mask")->required();
    analyze->add_option("--radii", an_radii, "perturbation radii")
        ->delimiter(',')
        ->capture_default_str();
    analyze->add_flag("--baseline-only", an_baseline_only, "skip perturbation rows");
    analyze->add_option("--out", an_out, "output JSON")->required();

    // adapt
    auto* adapt = app.add_subcommand("adapt", "select online-adaptation training examples");
    fs::path ad_confidence, ad_mask, ad_pos, ad_neg;
    std::string ad_dontcare, ad_report;
    flowtag::AdaptConfig adapt_config;
    adapt->add_option("--confidence", ad_confidence, "confidence map (raster or float .flo)")
        ->required();
    adapt->add_option("--last-mask", ad_mask, "last predicted mask")->required();
    adapt->add_option("--out-positives", ad_pos, "positives mask output")->required();
    adapt->add_option("--out-negatives", ad_neg, "negatives mask output")->required();
    adapt->add_option("--out-dontcare", ad_dontcare, "dontcare mask output");
    adapt->add_option("--report", ad_report, "summary JSON (default: positives path with .json)");
    adapt->add_option("--positive-threshold", adapt_config.positive_threshold,
                      "confidence at or above becomes a positive")
        ->capture_default_str();
    adapt->add_option("--negative-distance", adapt_config.negative_distance,
                      "distance strictly beyond becomes a negative")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (flow->parsed())
            return cmd_flow(flow_first, flow_second, flow_out, flow_magnitude_out, flow_params);
        if (tag->parsed())
            return cmd_tag(tag_sequence, tag_proposals, tag_frame, tag_out, tag_report,
                           tag_flow_params, tag_config);
        if (eval->parsed())
            return cmd_eval(eval_manifest, eval_out, eval_table, eval_policy, eval_workers);
        if (analyze->parsed())
            return cmd_analyze(an_pseudo, an_gt, an_radii, an_baseline_only, an_out);
        if (adapt->parsed())
            return cmd_adapt(ad_confidence, ad_mask, ad_pos, ad_neg, ad_dontcare, ad_report,
                             adapt_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
