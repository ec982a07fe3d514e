#pragma once

/**
 * @file serialize.hpp
 * @brief JSON documents for bins, coreset manifests, run manifests and
 *        diagnostics reports, plus the bit-packed patch mask file.
 *
 * Integers are JSON numbers. Reals are decimal strings with 17 significant
 * digits, which round-trip every double exactly. Object keys are emitted in
 * sorted order, so equal inputs give byte-identical files.
 */

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dq/binner.hpp"
#include "dq/core.hpp"
#include "dq/diagnostics.hpp"
#include "dq/npy.hpp"
#include "dq/patchmask.hpp"
#include "dq/sampler.hpp"

namespace dq {

using json = nlohmann::json;

inline constexpr int kBinsVersion = 1;
inline constexpr int kManifestVersion = 1;
inline constexpr int kReportVersion = 1;
inline constexpr int kMaskVersion = 1;

inline std::string format_real(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_real(const json& j) {
    if (!j.is_string()) throw FormatError("expected a real encoded as a string");
    const auto& s = j.get_ref<const std::string&>();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw FormatError("bad real '" + s + "'");
    }
    return v;
}

inline json real_array(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(format_real(x));
    return a;
}

inline std::vector<double> parse_real_array(const json& j) {
    std::vector<double> out;
    for (const auto& x : j) out.push_back(parse_real(x));
    return out;
}

/// Config snapshot, input hashes, tool version and RNG id for one run.
struct RunManifest {
    std::optional<QuantizeConfig> quantize;
    std::optional<SampleConfig> sample;
    std::optional<PatchConfig> patch;
    std::map<std::string, std::string> input_sha256;
    std::string tool_version = kToolVersion;
    std::string rng = kRngAlgorithm;
};

inline json to_json(const QuantizeConfig& c) {
    return {{"num_bins", c.num_bins},
            {"center_features", c.center_features},
            {"stratify_by_class", c.stratify_by_class},
            {"seed", c.seed}};
}

inline QuantizeConfig quantize_config_from_json(const json& j) {
    QuantizeConfig c;
    c.num_bins = j.at("num_bins").get<std::size_t>();
    c.center_features = j.at("center_features").get<bool>();
    c.stratify_by_class = j.at("stratify_by_class").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json to_json(const RunManifest& r) {
    json j;
    j["tool_version"] = r.tool_version;
    j["rng"] = r.rng;
    j["inputs"] = r.input_sha256;
    json cfg = json::object();
    if (r.quantize) cfg["quantize"] = to_json(*r.quantize);
    if (r.sample) {
        cfg["sample"] = {{"keep_ratio", format_real(r.sample->keep_ratio)}, {"seed", r.sample->seed}};
    }
    if (r.patch) {
        cfg["patch"] = {{"patch_height", r.patch->patch_height},
                        {"patch_width", r.patch->patch_width},
                        {"drop_ratio", format_real(r.patch->drop_ratio)}};
    }
    j["config"] = cfg;
    return j;
}

// ---- bins -----------------------------------------------------------------

inline json to_json(const BinSet& set) {
    json bins = json::array();
    for (const auto& b : set.bins) {
        bins.push_back({{"index", b.bin_index}, {"members", b.members}, {"gains", real_array(b.gains)}});
    }
    json stratum = set.stratum ? json(*set.stratum) : json("all");
    return {{"version", kBinsVersion},
            {"stratum", stratum},
            {"universe_size", set.universe_size},
            {"config", to_json(set.config)},
            {"bins", bins}};
}

inline void check_version(const json& j, int expected, const char* what) {
    const auto v = j.at("version").get<int>();
    if (v != expected) {
        throw FormatError(std::string(what) + " version mismatch: file has " + std::to_string(v) +
                          ", expected " + std::to_string(expected));
    }
}

/**
 * Parses one BinSet document. Rejects empty bins, members repeated across
 * bins, mismatched gain counts, and a member total other than universe_size.
 */
inline BinSet binset_from_json(const json& j) {
    check_version(j, kBinsVersion, "bins");
    BinSet set;
    const auto& s = j.at("stratum");
    if (s.is_string()) {
        if (s.get<std::string>() != "all") throw FormatError("bad stratum");
    } else {
        set.stratum = s.get<std::int64_t>();
    }
    set.universe_size = j.at("universe_size").get<std::size_t>();
    set.config = quantize_config_from_json(j.at("config"));
    std::set<std::size_t> seen;
    for (const auto& jb : j.at("bins")) {
        Bin b;
        b.bin_index = jb.at("index").get<std::size_t>();
        b.members = jb.at("members").get<std::vector<std::size_t>>();
        b.gains = parse_real_array(jb.at("gains"));
        if (b.members.empty()) throw FormatError("bin " + std::to_string(b.bin_index) + " is empty");
        if (b.gains.size() != b.members.size()) {
            throw FormatError("bin " + std::to_string(b.bin_index) + " gain count mismatch");
        }
        if (b.bin_index != set.bins.size()) throw FormatError("bins out of order");
        for (std::size_t m : b.members) {
            if (!seen.insert(m).second) {
                throw FormatError("sample " + std::to_string(m) + " appears in more than one bin");
            }
        }
        set.bins.push_back(std::move(b));
    }
    if (set.bins.empty()) throw FormatError("no bins");
    if (seen.size() != set.universe_size) {
        throw FormatError("bins hold " + std::to_string(seen.size()) + " samples, universe_size is " +
                          std::to_string(set.universe_size));
    }
    return set;
}

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

inline void write_binset(const std::filesystem::path& path, const BinSet& set) {
    write_bytes(path, dump(to_json(set)));
}

inline json parse_json_file(const std::filesystem::path& path) {
    const std::string text = read_bytes(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

template <class Fn>
auto parse_document(const std::filesystem::path& path, Fn fn) {
    const json j = parse_json_file(path);
    try {
        return fn(j);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline BinSet read_binset(const std::filesystem::path& path) {
    return parse_document(path, binset_from_json);
}

/// Collection document written by the tools: one BinSet per stratum.
inline json binsets_to_json(const std::vector<BinSet>& sets, const RunManifest* run = nullptr) {
    json j;
    j["version"] = kBinsVersion;
    json arr = json::array();
    std::size_t total = 0;
    for (const auto& s : sets) {
        arr.push_back(to_json(s));
        total += s.universe_size;
    }
    j["binsets"] = arr;
    j["total_samples"] = total;
    if (run) j["run"] = to_json(*run);
    return j;
}

inline std::vector<BinSet> binsets_from_json(const json& j) {
    check_version(j, kBinsVersion, "bins");
    std::vector<BinSet> out;
    std::set<std::size_t> seen;
    for (const auto& js : j.at("binsets")) {
        out.push_back(binset_from_json(js));
        for (const auto& b : out.back().bins) {
            for (std::size_t m : b.members) {
                if (!seen.insert(m).second) {
                    throw FormatError("sample " + std::to_string(m) + " appears in more than one bin");
                }
            }
        }
    }
    if (out.empty()) throw FormatError("no binsets");
    if (seen.size() != j.at("total_samples").get<std::size_t>()) {
        throw FormatError("total_samples does not match the bins");
    }
    return out;
}

inline void write_binsets(const std::filesystem::path& path, const std::vector<BinSet>& sets,
                          const RunManifest* run = nullptr) {
    write_bytes(path, dump(binsets_to_json(sets, run)));
}

inline std::vector<BinSet> read_binsets(const std::filesystem::path& path) {
    return parse_document(path, binsets_from_json);
}

// ---- coreset manifest -----------------------------------------------------

inline json to_json(const CoresetManifest& m, const RunManifest* run = nullptr) {
    json j = {{"version", kManifestVersion},
              {"selected_indices", m.selected_indices},
              {"per_bin_counts", m.per_bin_counts},
              {"keep_ratio", format_real(m.keep_ratio)},
              {"seed", m.seed},
              {"source", m.source},
              {"sampler", m.sampler},
              {"rng", m.rng},
              {"total_samples", m.total_samples}};
    if (run) j["run"] = to_json(*run);
    return j;
}

/// Enforces sorted, unique indices and count totals.
inline CoresetManifest manifest_from_json(const json& j) {
    check_version(j, kManifestVersion, "manifest");
    CoresetManifest m;
    m.selected_indices = j.at("selected_indices").get<std::vector<std::size_t>>();
    m.per_bin_counts = j.at("per_bin_counts").get<std::vector<std::size_t>>();
    m.keep_ratio = parse_real(j.at("keep_ratio"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.source = j.at("source").get<std::string>();
    m.sampler = j.at("sampler").get<std::string>();
    m.rng = j.at("rng").get<std::string>();
    m.total_samples = j.at("total_samples").get<std::size_t>();
    for (std::size_t t = 1; t < m.selected_indices.size(); ++t) {
        if (m.selected_indices[t - 1] >= m.selected_indices[t]) {
            throw FormatError("selected_indices must be strictly increasing");
        }
    }
    std::size_t sum = 0;
    for (auto c : m.per_bin_counts) sum += c;
    if (sum != m.selected_indices.size()) {
        throw FormatError("per-bin counts sum to " + std::to_string(sum) + " but " +
                          std::to_string(m.selected_indices.size()) + " indices are listed");
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& path, const CoresetManifest& m,
                           const RunManifest* run = nullptr) {
    write_bytes(path, dump(to_json(m, run)));
}

inline CoresetManifest read_manifest(const std::filesystem::path& path) {
    return parse_document(path, manifest_from_json);
}

/// Flat '<i8' array of the selected indices.
inline void write_index_array(const std::filesystem::path& path, const CoresetManifest& m) {
    NpyArray a;
    a.shape = {m.selected_indices.size()};
    a.data = std::vector<std::int64_t>(m.selected_indices.begin(), m.selected_indices.end());
    write_array(path, a);
}

// ---- diagnostics ----------------------------------------------------------

inline json to_json(const StratumDiagnostics& d) {
    return {{"stratum", d.stratum},
            {"first_pick_ok", d.first_pick_ok},
            {"first_pick_checked", d.first_pick_checked},
            {"delta_agreements", d.delta_agreements},
            {"delta_total", d.delta_total},
            {"delta_skipped", d.delta_skipped},
            {"delta_norm_checked", d.delta_norm_checked},
            {"delta_norm_violations", d.delta_norm_violations},
            {"bin_radii", real_array(d.bin_radii)},
            {"radius_monotone_fraction", format_real(d.radius_monotone_fraction)},
            {"mean_nn_distance_per_bin", real_array(d.mean_nn_distance_per_bin)}};
}

inline json to_json(const DiagnosticsReport& r, const RunManifest* run = nullptr) {
    json strata = json::array();
    for (const auto& s : r.strata) strata.push_back(to_json(s));
    json j = {{"version", kReportVersion},
              {"first_pick_ok", r.first_pick_ok},
              {"delta_agreements", r.delta_agreements},
              {"delta_total", r.delta_total},
              {"delta_norm_checked", r.delta_norm_checked},
              {"delta_norm_violations", r.delta_norm_violations},
              {"radius_monotone_fraction", format_real(r.radius_monotone_fraction)},
              {"exact_invariants_hold", r.exact_invariants_hold()},
              {"strata", strata}};
    if (run) j["run"] = to_json(*run);
    return j;
}

inline DiagnosticsReport report_from_json(const json& j) {
    check_version(j, kReportVersion, "report");
    DiagnosticsReport r;
    r.first_pick_ok = j.at("first_pick_ok").get<bool>();
    r.delta_agreements = j.at("delta_agreements").get<std::size_t>();
    r.delta_total = j.at("delta_total").get<std::size_t>();
    r.delta_norm_checked = j.at("delta_norm_checked").get<std::size_t>();
    r.delta_norm_violations = j.at("delta_norm_violations").get<std::size_t>();
    r.radius_monotone_fraction = parse_real(j.at("radius_monotone_fraction"));
    for (const auto& js : j.at("strata")) {
        StratumDiagnostics d;
        d.stratum = js.at("stratum").get<std::string>();
        d.first_pick_ok = js.at("first_pick_ok").get<bool>();
        d.first_pick_checked = js.at("first_pick_checked").get<std::size_t>();
        d.delta_agreements = js.at("delta_agreements").get<std::size_t>();
        d.delta_total = js.at("delta_total").get<std::size_t>();
        d.delta_skipped = js.at("delta_skipped").get<std::size_t>();
        d.delta_norm_checked = js.at("delta_norm_checked").get<std::size_t>();
        d.delta_norm_violations = js.at("delta_norm_violations").get<std::size_t>();
        d.bin_radii = parse_real_array(js.at("bin_radii"));
        d.radius_monotone_fraction = parse_real(js.at("radius_monotone_fraction"));
        d.mean_nn_distance_per_bin = parse_real_array(js.at("mean_nn_distance_per_bin"));
        r.strata.push_back(std::move(d));
    }
    return r;
}

inline void write_report(const std::filesystem::path& path, const DiagnosticsReport& r,
                         const RunManifest* run = nullptr) {
    write_bytes(path, dump(to_json(r, run)));
}

inline DiagnosticsReport read_report(const std::filesystem::path& path) {
    return parse_document(path, report_from_json);
}

// ---- patch masks ----------------------------------------------------------
//
// masks.bin: for each image in sidecar order, grid_rows * grid_cols bits in
// row-major patch order, bit t of an image stored in byte t / 8 at bit
// position t % 8 (LSB first), 1 = keep. Every image starts on a byte boundary.
// masks.bin.json sidecar: version, grid, patch size, theta, tie-break tag,
// image ids, and per-image dropped counts.

struct MaskFileInfo {
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    PatchConfig patch;
    std::vector<std::size_t> image_ids;
    std::vector<std::size_t> dropped_counts;
    std::string tie_break = kMaskTieBreak;
};

inline std::string pack_masks(const std::vector<PatchMask>& masks) {
    std::string out;
    for (const auto& m : masks) {
        std::string bytes((m.keep.size() + 7) / 8, '\0');
        for (std::size_t t = 0; t < m.keep.size(); ++t) {
            if (m.keep[t]) bytes[t / 8] = static_cast<char>(bytes[t / 8] | (1u << (t % 8)));
        }
        out += bytes;
    }
    return out;
}

inline std::filesystem::path mask_sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

/// Writes `path` (bits) and `path`.json (sidecar). All masks must share one grid.
inline void write_masks(const std::filesystem::path& path, const std::vector<PatchMask>& masks,
                        const PatchConfig& patch, const RunManifest* run = nullptr) {
    json j;
    j["version"] = kMaskVersion;
    std::size_t rows = masks.empty() ? 0 : masks.front().grid_rows();
    std::size_t cols = masks.empty() ? 0 : masks.front().grid_cols();
    std::vector<std::size_t> ids, dropped;
    for (const auto& m : masks) {
        if (m.grid_rows() != rows || m.grid_cols() != cols) {
            throw ValidationError("masks in one file must share a grid shape");
        }
        ids.push_back(m.image_id);
        dropped.push_back(m.dropped_count);
    }
    j["grid"] = {rows, cols};
    j["patch"] = {patch.patch_height, patch.patch_width};
    j["theta"] = format_real(patch.drop_ratio);
    j["tie_break"] = kMaskTieBreak;
    j["bit_order"] = "row-major, lsb-first, byte-aligned per image, 1=keep";
    j["image_ids"] = ids;
    j["dropped_counts"] = dropped;
    if (run) j["run"] = to_json(*run);
    write_bytes(path, pack_masks(masks));
    write_bytes(mask_sidecar_path(path), dump(j));
}

struct MaskFile {
    MaskFileInfo info;
    /// keep bits per image, row-major.
    std::vector<std::vector<bool>> keep;
};

inline MaskFile read_masks(const std::filesystem::path& path) {
    MaskFile out;
    parse_document(mask_sidecar_path(path), [&](const json& j) {
        check_version(j, kMaskVersion, "masks");
        out.info.grid_rows = j.at("grid").at(0).get<std::size_t>();
        out.info.grid_cols = j.at("grid").at(1).get<std::size_t>();
        out.info.patch.patch_height = j.at("patch").at(0).get<std::size_t>();
        out.info.patch.patch_width = j.at("patch").at(1).get<std::size_t>();
        out.info.patch.drop_ratio = parse_real(j.at("theta"));
        out.info.tie_break = j.at("tie_break").get<std::string>();
        out.info.image_ids = j.at("image_ids").get<std::vector<std::size_t>>();
        out.info.dropped_counts = j.at("dropped_counts").get<std::vector<std::size_t>>();
        return 0;
    });
    if (out.info.tie_break != kMaskTieBreak) {
        throw FormatError("unknown mask tie-break '" + out.info.tie_break + "'");
    }
    const std::size_t bits = out.info.grid_rows * out.info.grid_cols;
    const std::size_t stride = (bits + 7) / 8;
    const std::string bytes = read_bytes(path);
    if (bytes.size() != stride * out.info.image_ids.size()) {
        throw FormatError("mask payload size mismatch (expected " +
                          std::to_string(stride * out.info.image_ids.size()) + ")");
    }
    for (std::size_t n = 0; n < out.info.image_ids.size(); ++n) {
        std::vector<bool> keep(bits);
        std::size_t dropped = 0;
        for (std::size_t t = 0; t < bits; ++t) {
            keep[t] = (static_cast<unsigned char>(bytes[n * stride + t / 8]) >> (t % 8)) & 1u;
            if (!keep[t]) ++dropped;
        }
        if (dropped != out.info.dropped_counts.at(n)) {
            throw FormatError("dropped count mismatch for image " +
                              std::to_string(out.info.image_ids[n]));
        }
        out.keep.push_back(std::move(keep));
    }
    return out;
}

}  // namespace dq
