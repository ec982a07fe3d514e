// dq: command-line front end for dataset quantization.
//
//   dq quantize  --features F.npy [--labels L.npy] --bins N --out bins.json
//   dq sample    --bins bins.json --ratio R --seed S --out coreset.json
//   dq patchmask --attn A.npy --patch 16x16 --theta 0.25 --out masks.bin
//   dq diagnose  --features F.npy [--labels L.npy] --bins N --out report.json
//   dq pipeline  ... --out-dir DIR
//
// Exit codes: 0 ok, 1 I/O error, 2 validation/usage error, 3 invariant violation.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dq/dq.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

struct Dims {
    std::size_t height = 0;
    std::size_t width = 0;
};

Dims parse_dims(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used = 0;
        Dims d;
        const auto h = text.substr(0, x), w = text.substr(x + 1);
        d.height = std::stoul(h, &used);
        if (used != h.size()) throw std::invalid_argument(text);
        d.width = std::stoul(w, &used);
        if (used != w.size()) throw std::invalid_argument(text);
        return d;
    } catch (const std::logic_error&) {
        throw dq::ValidationError("expected HxW, got '" + text + "'");
    }
}

std::size_t resolve_threads(std::optional<std::size_t> flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("DQ_THREADS")) {
        try {
            return std::stoul(env);
        } catch (const std::logic_error&) {
            throw dq::ValidationError(std::string("bad DQ_THREADS value '") + env + "'");
        }
    }
    return 0;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct QuantizeArgs {
    std::string features;
    std::string labels;
    std::size_t bins = 10;
    bool no_center = false;
    bool no_stratify = false;
};

void add_quantize_flags(CLI::App* cmd, QuantizeArgs& a) {
    cmd->add_option("--features", a.features, "float32 M x m feature array (.npy)")->required();
    cmd->add_option("--labels", a.labels, "int64 length-M label array (.npy)");
    cmd->add_option("--bins", a.bins, "number of bins N")->capture_default_str();
    cmd->add_flag("--no-center", a.no_center, "do not center features before selection");
    cmd->add_flag("--no-stratify", a.no_stratify, "select over all samples even with labels");
}

struct LoadedInputs {
    dq::FeatureMatrix features;
    std::optional<dq::LabelVector> labels;
    dq::QuantizeConfig config;
    dq::RunManifest run;

    const dq::LabelVector* label_ptr() const { return labels ? &*labels : nullptr; }
};

LoadedInputs load_inputs(const QuantizeArgs& a) {
    LoadedInputs in;
    in.features = dq::read_features(a.features);
    in.run.input_sha256["features"] = dq::sha256_file(a.features);
    if (!a.labels.empty()) {
        in.labels = dq::read_labels(a.labels);
        in.run.input_sha256["labels"] = dq::sha256_file(a.labels);
    }
    dq::validate_inputs(in.features, in.label_ptr()).throw_if_failed();
    in.config.num_bins = a.bins;
    in.config.center_features = !a.no_center;
    in.config.stratify_by_class = in.labels.has_value() && !a.no_stratify;
    in.run.quantize = in.config;
    return in;
}

int run_quantize(const QuantizeArgs& a, const std::string& out, const dq::Executor& exec) {
    auto in = load_inputs(a);
    const auto t0 = std::chrono::steady_clock::now();
    const auto sets = dq::quantize(in.features, in.label_ptr(), in.config, exec);
    std::cerr << "quantized " << in.features.num_samples() << " samples into " << a.bins
              << " bins per stratum (" << sets.size() << " strata) in " << seconds_since(t0)
              << " s\n";
    dq::write_binsets(out, sets, &in.run);
    return kExitOk;
}

struct SampleArgs {
    std::string bins;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::string sampler = "uniform";
    std::string index_npy;
};

void add_sample_flags(CLI::App* cmd, SampleArgs& a, bool with_bins_file) {
    if (with_bins_file) cmd->add_option("--bins", a.bins, "bins.json from quantize")->required();
    cmd->add_option("--ratio", a.ratio, "keep ratio rho in (0, 1]")->required();
    cmd->add_option("--seed", a.seed, "sampling seed")->capture_default_str();
    cmd->add_option("--sampler", a.sampler, "sampler name")->capture_default_str();
    cmd->add_option("--index-npy", a.index_npy, "also write the indices as an int64 .npy");
}

dq::CoresetManifest sample_and_report(const std::vector<dq::BinSet>& sets, const SampleArgs& a,
                                      std::string source) {
    dq::SampleConfig cfg{a.ratio, a.seed};
    auto manifest = dq::sample_coreset(sets, cfg, a.sampler, std::move(source));
    const double pct = manifest.total_samples == 0
                           ? 0.0
                           : 100.0 * static_cast<double>(manifest.selected_indices.size()) /
                                 static_cast<double>(manifest.total_samples);
    std::printf("kept %zu of %zu (%.1f%%)\n", manifest.selected_indices.size(),
                manifest.total_samples, pct);
    return manifest;
}

int run_sample(const SampleArgs& a, const std::string& out) {
    const auto sets = dq::read_binsets(a.bins);
    dq::RunManifest run;
    run.input_sha256["bins"] = dq::sha256_file(a.bins);
    run.sample = dq::SampleConfig{a.ratio, a.seed};
    const auto manifest = sample_and_report(sets, a, run.input_sha256["bins"]);
    dq::write_manifest(out, manifest, &run);
    if (!a.index_npy.empty()) dq::write_index_array(a.index_npy, manifest);
    return kExitOk;
}

struct PatchArgs {
    std::string attn;
    std::string patch = "16x16";
    double theta = 0.25;
    std::string image_size;
    std::string manifest;
};

void add_patch_flags(CLI::App* cmd, PatchArgs& a, bool required) {
    auto* opt = cmd->add_option("--attn", a.attn, "float32 attention maps (.npy, images x H x W)");
    if (required) opt->required();
    cmd->add_option("--patch", a.patch, "patch size HxW")->capture_default_str();
    cmd->add_option("--theta", a.theta, "patch drop ratio in [0, 1)")->capture_default_str();
    cmd->add_option("--image-size", a.image_size, "upsample maps to HxW before scoring");
}

dq::PatchConfig patch_config(const PatchArgs& a) {
    const Dims p = parse_dims(a.patch);
    return dq::PatchConfig{p.height, p.width, a.theta};
}

/// Masks the given images (all when `only` is empty) and prints the dropped fraction.
std::vector<dq::PatchMask> build_masks(const PatchArgs& a, const dq::PatchConfig& cfg,
                                       const std::vector<std::size_t>* only,
                                       const dq::Executor& exec) {
    auto maps = dq::read_attention(a.attn);
    if (only != nullptr) {
        std::vector<dq::AttentionMap> kept;
        for (std::size_t id : *only) {
            if (id >= maps.size()) {
                throw dq::ValidationError("coreset index " + std::to_string(id) + " has no attention map (" +
                                          std::to_string(maps.size()) + " maps)");
            }
            kept.push_back(std::move(maps[id]));
        }
        maps = std::move(kept);
    }
    if (!a.image_size.empty()) {
        const Dims target = parse_dims(a.image_size);
        for (auto& m : maps) m.values = dq::upsample_map(m.values, target.height, target.width);
    }
    if (!(cfg.drop_ratio >= 0.0 && cfg.drop_ratio < 1.0)) {
        throw dq::ValidationError("drop ratio must be in [0, 1)");
    }
    std::vector<dq::PatchMask> masks(maps.size());
    std::vector<std::string> errors(maps.size());
    exec.for_each(maps.size(), [&](std::size_t n) {
        try {
            masks[n] = dq::mask_batch({maps[n]}, cfg).front();
        } catch (const dq::ValidationError& e) {
            errors[n] = e.what();
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) throw dq::ValidationError(e);
    }
    std::size_t dropped = 0, total = 0;
    for (const auto& m : masks) {
        dropped += m.dropped_count;
        total += m.keep.size();
    }
    const std::size_t per_image = masks.empty() ? 0 : masks.front().keep.size();
    std::printf("dropped %zu of %zu patches (%.1f%%) across %zu images, %zu patches per image\n",
                dropped, total, total == 0 ? 0.0 : 100.0 * static_cast<double>(dropped) / static_cast<double>(total),
                masks.size(), per_image);
    return masks;
}

int run_patchmask(const PatchArgs& a, const std::string& out, const dq::Executor& exec) {
    const auto cfg = patch_config(a);
    std::optional<std::vector<std::size_t>> only;
    dq::RunManifest run;
    run.patch = cfg;
    run.input_sha256["attention"] = dq::sha256_file(a.attn);
    if (!a.manifest.empty()) {
        only = dq::read_manifest(a.manifest).selected_indices;
        run.input_sha256["manifest"] = dq::sha256_file(a.manifest);
    }
    const auto masks = build_masks(a, cfg, only ? &*only : nullptr, exec);
    dq::write_masks(out, masks, cfg, &run);
    return kExitOk;
}

void print_report_summary(const dq::DiagnosticsReport& r) {
    std::printf("first_pick_ok %s\n", r.first_pick_ok ? "true" : "false");
    std::printf("delta_agreements %zu of %zu\n", r.delta_agreements, r.delta_total);
    std::printf("delta_norm_violations %zu of %zu\n", r.delta_norm_violations, r.delta_norm_checked);
    std::printf("radius_monotone_fraction %.4f\n", r.radius_monotone_fraction);
}

int run_diagnose(const QuantizeArgs& a, const std::string& out, const dq::Executor& exec) {
    auto in = load_inputs(a);
    const auto report = dq::run_diagnostics(in.features, in.label_ptr(), in.config, exec);
    dq::write_report(out, report, &in.run);
    print_report_summary(report);
    if (!report.exact_invariants_hold()) {
        std::cerr << "error: exact selection invariants violated\n";
        return kExitInvariant;
    }
    return kExitOk;
}

struct PipelineArgs {
    QuantizeArgs quantize;
    SampleArgs sample;
    PatchArgs patch;
    std::string out_dir;
    bool dry_run = false;
};

int run_pipeline(const PipelineArgs& a, const dq::Executor& exec) {
    const fs::path dir(a.out_dir);
    const fs::path bins = dir / "bins.json", coreset = dir / "coreset.json",
                   masks = dir / "masks.bin", report = dir / "report.json";
    if (a.dry_run) {
        std::printf("quantize: %s -> %s (N=%zu, center=%s, stratify=%s)\n", a.quantize.features.c_str(),
                    bins.c_str(), a.quantize.bins, a.quantize.no_center ? "off" : "on",
                    (!a.quantize.labels.empty() && !a.quantize.no_stratify) ? "on" : "off");
        std::printf("sample: %s -> %s (ratio=%g, seed=%llu, sampler=%s)\n", bins.c_str(),
                    coreset.c_str(), a.sample.ratio,
                    static_cast<unsigned long long>(a.sample.seed), a.sample.sampler.c_str());
        if (!a.patch.attn.empty()) {
            std::printf("patchmask: %s -> %s (patch=%s, theta=%g)\n", a.patch.attn.c_str(),
                        masks.c_str(), a.patch.patch.c_str(), a.patch.theta);
        }
        std::printf("diagnose: -> %s\n", report.c_str());
        return kExitOk;
    }

    // Validate cheap arguments before the expensive stage.
    if (!(a.sample.ratio > 0.0 && a.sample.ratio <= 1.0)) {
        throw dq::ValidationError("keep ratio must be in (0, 1]");
    }
    std::optional<dq::PatchConfig> pcfg;
    if (!a.patch.attn.empty()) pcfg = patch_config(a.patch);
    dq::sampler_registry(a.sample.sampler);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw dq::IoError("cannot create " + dir.string() + ": " + ec.message());

    auto in = load_inputs(a.quantize);
    in.run.sample = dq::SampleConfig{a.sample.ratio, a.sample.seed};
    if (pcfg) {
        in.run.patch = *pcfg;
        in.run.input_sha256["attention"] = dq::sha256_file(a.patch.attn);
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto diagnosed = dq::quantize_with_diagnostics(in.features, in.label_ptr(), in.config, exec);
    std::cerr << "quantize: " << seconds_since(t0) << " s\n";
    dq::write_binsets(bins, diagnosed.binsets, &in.run);

    const auto manifest = sample_and_report(diagnosed.binsets, a.sample, dq::sha256_file(bins));
    dq::write_manifest(coreset, manifest, &in.run);
    if (!a.sample.index_npy.empty()) dq::write_index_array(a.sample.index_npy, manifest);

    if (pcfg) {
        const auto m = build_masks(a.patch, *pcfg, &manifest.selected_indices, exec);
        dq::write_masks(masks, m, *pcfg, &in.run);
    }

    dq::write_report(report, diagnosed.report, &in.run);
    print_report_summary(diagnosed.report);
    if (!diagnosed.report.exact_invariants_hold()) {
        std::cerr << "error: exact selection invariants violated\n";
        return kExitInvariant;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dataset quantization: recursive GraphCut bins, coreset sampling, patch masks"};
    app.require_subcommand(1);
    std::optional<std::size_t> threads;
    app.add_option("--threads", threads, "worker cap (default: $DQ_THREADS or all cores)");

    QuantizeArgs qa;
    std::string q_out;
    auto* quantize = app.add_subcommand("quantize", "partition samples into diversity-graded bins");
    add_quantize_flags(quantize, qa);
    quantize->add_option("--out", q_out, "output bins.json")->required();

    SampleArgs sa;
    std::string s_out;
    auto* sample = app.add_subcommand("sample", "draw a coreset from the bins");
    add_sample_flags(sample, sa, true);
    sample->add_option("--out", s_out, "output coreset.json")->required();

    PatchArgs pa;
    std::string p_out;
    auto* patchmask = app.add_subcommand("patchmask", "drop low-attention patches");
    add_patch_flags(patchmask, pa, true);
    patchmask->add_option("--manifest", pa.manifest, "only mask the images in this coreset.json");
    patchmask->add_option("--out", p_out, "output masks.bin (sidecar masks.bin.json)")->required();

    QuantizeArgs da;
    std::string d_out;
    auto* diagnose = app.add_subcommand("diagnose", "audit greedy selection invariants");
    add_quantize_flags(diagnose, da);
    diagnose->add_option("--out", d_out, "output report.json")->required();

    PipelineArgs pl;
    auto* pipeline = app.add_subcommand("pipeline", "quantize, sample, patchmask and diagnose");
    add_quantize_flags(pipeline, pl.quantize);
    add_sample_flags(pipeline, pl.sample, false);
    add_patch_flags(pipeline, pl.patch, false);
    pipeline->add_option("--out-dir", pl.out_dir, "directory for all artifacts")->required();
    pipeline->add_flag("--dry-run", pl.dry_run, "print the plan without writing anything");

    for (auto* cmd : {quantize, sample, patchmask, diagnose, pipeline}) {
        // Allow --threads after the subcommand name too.
        cmd->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const dq::Executor exec(resolve_threads(threads));
        if (*quantize) return run_quantize(qa, q_out, exec);
        if (*sample) return run_sample(sa, s_out);
        if (*patchmask) return run_patchmask(pa, p_out, exec);
        if (*diagnose) return run_diagnose(da, d_out, exec);
        if (*pipeline) return run_pipeline(pl, exec);
    } catch (const dq::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const dq::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const dq::InvariantError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
