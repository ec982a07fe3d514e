// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "dq/dq.hpp"
#include "support/oracles.hpp"

namespace {

using namespace dq;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
    std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

QuantizeConfig bins_config(std::size_t n) {
    QuantizeConfig c;
    c.num_bins = n;
    return c;
}

// Oracle equivalence, delta identity, first-pick law and delta-norm bound
// share one set of random instances.
void greedy_invariants() {
    constexpr int kInstances = 240;
    std::mt19937_64 gen(2024);
    int equal = 0;
    std::size_t delta_ok = 0, delta_total = 0, norm_checked = 0, norm_bad = 0;
    std::size_t first_checked = 0;
    bool first_ok = true;
    double library_s = 0.0;
    const auto t0 = Clock::now();
    for (int t = 0; t < kInstances; ++t) {
        const std::size_t m_samples = 5 + gen() % 196, dim = 1 + gen() % 16;
        const std::size_t n = 1 + gen() % std::min<std::size_t>(m_samples, 20);
        const auto rows = testing::gaussian_rows(gen(), m_samples, dim);
        const auto f = FeatureMatrix::from_rows(rows);

        const auto t1 = Clock::now();
        const auto d = quantize_with_diagnostics(f, nullptr, bins_config(n));
        library_s += seconds_since(t1);

        std::vector<std::vector<std::size_t>> got;
        for (const auto& b : d.binsets[0].bins) got.push_back(b.members);
        if (got == testing::oracle_greedy_bins(rows, n, true)) ++equal;

        const auto& r = d.report;
        delta_ok += r.delta_agreements;
        delta_total += r.delta_total;
        norm_checked += r.delta_norm_checked;
        norm_bad += r.delta_norm_violations;
        first_ok = first_ok && r.first_pick_ok;
        first_checked += r.strata[0].first_pick_checked;
    }
    const double total_s = seconds_since(t0);
    report("oracle_equivalence", equal == kInstances && total_s < 60.0,
           fmt("%d/%d instances index-identical, %.2f s total (library %.2f s)", equal, kInstances, total_s,
               library_s));
    report("delta_identity", delta_ok == delta_total && delta_total > 0,
           fmt("%zu/%zu steps agree", delta_ok, delta_total));
    report("first_pick_law", first_ok && first_checked > 0, fmt("%zu bin openings checked", first_checked));
    report("delta_norm_bound", norm_bad == 0 && norm_checked > 0,
           fmt("%zu violations in %zu steps (rel tol %.0e)", norm_bad, norm_checked, kDeltaBoundTolerance));
}

void partition_and_budget() {
    bool ok = true;
    std::string detail;
    struct Fixture {
        std::size_t m_samples, dim, bins;
        bool labelled;
    };
    for (const auto& fx : {Fixture{1000, 4, 10, false}, Fixture{997, 3, 7, true}, Fixture{123, 5, 4, false}}) {
        const auto f = testing::gaussian_features(fx.m_samples, fx.m_samples, fx.dim);
        std::vector<std::int64_t> l(fx.m_samples);
        for (std::size_t i = 0; i < fx.m_samples; ++i) l[i] = static_cast<std::int64_t>(i % 3);
        const auto labels = LabelVector::from_labels(l);
        const auto sets = quantize(f, fx.labelled ? &labels : nullptr, bins_config(fx.bins));

        std::vector<int> seen(fx.m_samples, 0);
        for (const auto& s : sets) {
            for (const auto& b : s.bins) {
                for (std::size_t i : b.members) ++seen[i];
            }
        }
        for (int c : seen) ok = ok && c == 1;

        for (double rho : {0.01, 0.1, 0.35, 0.6, 1.0}) {
            const auto m = sample_coreset(sets, SampleConfig{rho, 7});
            // Stratified budgets are floored per class.
            std::size_t expect = 0;
            for (const auto& s : sets) expect += floor_fraction(rho, s.universe_size);
            const bool exact = m.selected_indices.size() == expect &&
                               (fx.labelled || expect == floor_fraction(rho, fx.m_samples));
            ok = ok && exact;
            try {
                verify_manifest(m, sets);
            } catch (const Error&) {
                ok = false;
            }
            if (!fx.labelled && fx.m_samples == 1000) detail += fmt("%zu ", m.selected_indices.size());
        }
    }
    report("partition_and_budget", ok, "M=1000 sizes " + detail + "for rho 0.01 0.1 0.35 0.6 1.0");
}

void diversity_growth() {
    SamplerRegistry::global().add("head", [](std::span<const std::size_t> members, std::size_t count,
                                             SampleRng&) {
        return std::vector<std::size_t>(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(count));
    });
    const auto t0 = Clock::now();
    const Executor exec(0);
    int grown = 0, covered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto f = testing::gaussian_features(7000 + seed, 5000, 2);
        const auto dq_bins = generate_bins(f, bins_config(10), exec);
        const auto radii = bin_radii(dq_bins, f);
        if (radii.back() > radii.front()) ++grown;

        const auto one_shot = generate_bins(f, bins_config(1), exec);
        const auto dq_set = sample_coreset(dq_bins, SampleConfig{0.1, seed});
        const auto base_set = sample_coreset(one_shot, SampleConfig{0.1, seed}, "head");
        if (coverage_stats(dq_set, f, exec).max_distance <= coverage_stats(base_set, f, exec).max_distance) {
            ++covered;
        }
    }
    const double s = seconds_since(t0);
    report("diversity_growth", grown >= 18 && s < 300.0, fmt("radius(bin 10) > radius(bin 1) in %d/20 seeds", grown));
    report("coverage_vs_one_shot", covered >= 18 && s < 300.0,
           fmt("max-coverage no worse than one-shot in %d/20 seeds, %.1f s", covered, s));
}

void patch_rules() {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto random_map = [&](std::size_t h, std::size_t w) {
        Grid g(h, w);
        for (auto& v : g.values) v = u(gen);
        return g;
    };

    bool counts_ok = true;
    for (std::size_t side : {1, 2, 5, 7, 14, 16}) {
        const auto scores = random_map(side, side);
        for (std::size_t pct = 0; pct < 100; pct += 5) {
            const auto m = drop_mask(scores, static_cast<double>(pct) / 100.0);
            std::size_t dropped = 0;
            for (bool k : m.keep) dropped += !k;
            counts_ok = counts_ok && dropped == pct * side * side / 100 && dropped == m.dropped_count;
        }
    }
    report("patch_drop_count", counts_ok, "floor(theta P) for theta in {0, 0.05, ..., 0.95}, 6 grid sizes");

    double worst = 0.0;
    bool scale_ok = true;
    for (int t = 0; t < 50; ++t) {
        const auto a = random_map(64, 96);
        const PatchConfig cfg{16, 8, 0.3};
        const auto s = patch_scores(AttentionMap{a, 0}, cfg);
        double ta = 0.0, ts = 0.0;
        for (double v : a.values) ta += v;
        for (double v : s.values) ts += v * 16 * 8;
        worst = std::max(worst, std::abs(ts - ta) / ta);
        Grid scaled = a;
        const double c = 0.001 + 100.0 * u(gen);
        for (auto& v : scaled.values) v *= c;
        scale_ok = scale_ok && mask_image(AttentionMap{a, 0}, cfg).keep == mask_image(AttentionMap{scaled, 0}, cfg).keep;
    }
    report("patch_conservation", worst <= 1e-9, fmt("max relative error %.2e", worst));
    report("patch_scaling_invariance", scale_ok, "50 maps, random positive scale");

    const auto m = mask_image(AttentionMap{random_map(224, 224), 0}, PatchConfig{16, 16, 0.25});
    report("patch_vit_grid", m.grid_rows() == 14 && m.grid_cols() == 14 && m.dropped_count == 49,
           fmt("14x14 grid, theta 0.25, %zu dropped", m.dropped_count));
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void cli_determinism() {
    const auto dir = testing::temp_dir("acceptance_cli");
    std::vector<std::int64_t> l(600);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = static_cast<std::int64_t>(i % 4);
    write_features(dir / "f.npy", testing::gaussian_features(11, 600, 16));
    write_labels(dir / "l.npy", LabelVector::from_labels(l));
    NpyArray att;
    att.shape = {600, 32, 32};
    std::mt19937_64 gen(12);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    std::vector<float> v(600 * 32 * 32);
    for (auto& x : v) x = u(gen);
    att.data = std::move(v);
    write_array(dir / "a.npy", att);

    bool ok = true;
    std::string first[3];
    for (int threads : {1, 2, 4}) {
        const auto out = dir / ("t" + std::to_string(threads));
        const int code = run_cli("--threads " + std::to_string(threads) + " pipeline --features " +
                                 (dir / "f.npy").string() + " --labels " + (dir / "l.npy").string() +
                                 " --bins 10 --ratio 0.35 --seed 3 --attn " + (dir / "a.npy").string() +
                                 " --patch 8x8 --theta 0.25 --out-dir " + out.string());
        ok = ok && code == 0;
        int k = 0;
        for (const char* name : {"bins.json", "coreset.json", "masks.bin"}) {
            std::string bytes;
            try {
                bytes = read_bytes(out / name);
            } catch (const Error&) {
                ok = false;
            }
            if (threads == 1) first[k] = bytes;
            else ok = ok && !bytes.empty() && bytes == first[k];
            ++k;
        }
    }
    report("cli_determinism", ok, "bins.json coreset.json masks.bin byte-identical for --threads 1 2 4");
}

void performance() {
    const auto f = testing::gaussian_features(99, 50000, 128);
    const Executor exec(0);
    const auto t0 = Clock::now();
    const auto set = generate_bins(f, bins_config(10), exec);
    const double s = seconds_since(t0);
    report("performance", s < 600.0 && set.member_count() == 50000,
           fmt("M=50000 m=128 N=10 in %.1f s on %zu threads", s, exec.threads()));
}

}  // namespace

int main(int argc, char** argv) {
    const bool skip_perf = argc > 1 && std::string(argv[1]) == "--skip-performance";
    greedy_invariants();
    partition_and_budget();
    diversity_growth();
    patch_rules();
    cli_determinism();
    if (!skip_perf) performance();
    std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures == 0 ? 0 : 1;
}
