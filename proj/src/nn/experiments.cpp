#include "propnet/nn/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "propnet/nn/predictor.hpp"
#include "propnet/nn/trainer.hpp"
#include "propnet/propagator.hpp"

namespace propnet::experiments {

Suite parse_suite(const std::string& name) {
    if (name == "propose_only") return Suite::propose_only;
    if (name == "+boundary" || name == "boundary") return Suite::boundary;
    if (name == "+refine" || name == "refine") return Suite::refine;
    if (name == "+mcc" || name == "mcc") return Suite::mcc;
    if (name == "variants") return Suite::variants;
    if (name == "interval_sweep") return Suite::interval_sweep;
    if (name == "deviation_sweep") return Suite::deviation_sweep;
    throw ConfigError("unknown suite '" + name +
                      "' (expected propose_only, +boundary, +refine, +mcc, variants, interval_sweep, deviation_sweep)");
}

std::string suite_name(Suite s) {
    switch (s) {
        case Suite::propose_only:
            return "propose_only";
        case Suite::boundary:
            return "+boundary";
        case Suite::refine:
            return "+refine";
        case Suite::mcc:
            return "+mcc";
        case Suite::variants:
            return "variants";
        case Suite::interval_sweep:
            return "interval_sweep";
        case Suite::deviation_sweep:
            return "deviation_sweep";
    }
    return "?";
}

std::vector<Variant> ablation_variants() {
    using model::Head;
    return {{"propose_only", Head::proposing_region, false},
            {"+boundary", Head::proposing_composite, false},
            {"+refine", Head::refining_composite, false},
            {"+mcc", Head::refining_composite, true}};
}

std::filesystem::path variant_checkpoint(const std::filesystem::path& dir, const std::string& variant) {
    for (const auto& name : {variant + ".ckpt", std::string("model.ckpt"), std::string("best.ckpt")}) {
        if (std::filesystem::is_regular_file(dir / name)) return dir / name;
    }
    throw std::runtime_error("missing checkpoint for variant '" + variant + "' in " + dir.string() + " (looked for " +
                             variant + ".ckpt, model.ckpt, best.ckpt)");
}

int64_t deviated_seed(const MaskVolume& mask, double deviation_mm) {
    const int64_t base = data::largest_slice(mask);
    const int64_t depth = mask.voxels.depth();
    const auto shift = static_cast<int64_t>(std::llround(deviation_mm / mask.spacing.z));
    const int64_t target = std::clamp<int64_t>(base + shift, 0, depth - 1);
    int64_t best = base;
    int64_t best_dist = std::numeric_limits<int64_t>::max();
    for (int64_t z = 0; z < depth; ++z) {
        if (mask.slice_area(z) == 0) continue;
        const int64_t d = std::abs(z - target);
        // Ties go toward the annotated centre.
        if (d < best_dist || (d == best_dist && std::abs(z - base) < std::abs(best - base))) {
            best = z;
            best_dist = d;
        }
    }
    return best;
}

std::vector<metrics::ExperimentReport> run_specs(model::PropNet& net, const std::vector<data::Case>& cases,
                                                 const config::RunConfig& cfg, const std::vector<RunSpec>& specs) {
    struct Acc {
        std::vector<metrics::CaseMetrics> rows;
        double seconds = 0.0;
        nlohmann::json seeds = nlohmann::json::object();
    };
    std::vector<Acc> acc(specs.size());
    std::vector<std::unique_ptr<model::NetworkPredictor>> predictors;
    std::vector<propagate::PropagationConfig> pcfgs;
    int64_t repeats = 1;
    for (const auto& spec : specs) {
        predictors.push_back(std::make_unique<model::NetworkPredictor>(net, spec.variant.head));
        auto pcfg = cfg.propagate;
        pcfg.interval_mm = spec.interval_mm;
        pcfg.mcc = spec.variant.mcc;
        pcfgs.push_back(pcfg);
        repeats = std::max(repeats, spec.timing_repeats);
    }
    for (const auto& c : cases) {
        std::vector<int64_t> z(specs.size());
        std::vector<double> best(specs.size(), std::numeric_limits<double>::infinity());
        std::vector<std::optional<propagate::SegmentationOutput>> seg(specs.size());
        for (std::size_t i = 0; i < specs.size(); ++i) z[i] = deviated_seed(c.mask, specs[i].deviation_mm);
        // repeats are interleaved across specs so slow drift in machine load
        // hits every spec alike
        for (int64_t r = 0; r < repeats; ++r) {
            for (std::size_t i = 0; i < specs.size(); ++i) {
                if (r >= std::max<int64_t>(1, specs[i].timing_repeats)) continue;
                const auto t0 = std::chrono::steady_clock::now();
                auto out = propagate::segment_volume(*predictors[i], c.volume, z[i], c.mask.voxels.slice(z[i]),
                                                     cfg.data.preprocess, pcfgs[i]);
                best[i] = std::min(best[i], std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
                seg[i] = std::move(out);
            }
        }
        for (std::size_t i = 0; i < specs.size(); ++i) {
            acc[i].seeds[c.id] = z[i];
            acc[i].seconds += best[i];
            acc[i].rows.push_back(metrics::evaluate_case(c.id, seg[i]->mask, c.mask, cfg.evaluate.tolerances_mm));
        }
    }
    std::vector<metrics::ExperimentReport> reports;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        auto report = metrics::make_report(spec.name, std::move(acc[i].rows), cfg.evaluate.tolerances_mm);
        report.fingerprint = {{"config", config::fingerprint(cfg)},
                              {"variant", spec.variant.name},
                              {"interval_mm", spec.interval_mm},
                              {"deviation_mm", spec.deviation_mm}};
        report.extra["seconds_per_volume"] =
            cases.empty() ? 0.0 : acc[i].seconds / static_cast<double>(cases.size());
        report.extra["seed_slices"] = acc[i].seeds;
        reports.push_back(std::move(report));
    }
    return reports;
}

metrics::ExperimentReport run_spec(model::PropNet& net, const std::vector<data::Case>& cases,
                                   const config::RunConfig& cfg, const RunSpec& spec) {
    return std::move(run_specs(net, cases, cfg, {spec}).front());
}

namespace {

void add_p_values(std::vector<metrics::ExperimentReport>& reports, std::size_t reference) {
    const auto ref = reports[reference].column("dsc");
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (i == reference || ref.size() < 2) continue;
        const auto t = metrics::paired_t_test(reports[i].column("dsc"), ref);
        reports[i].p_values[reports[reference].name] = t.p;
    }
}

}  // namespace

std::vector<metrics::ExperimentReport> run_ablation(Suite suite, const config::RunConfig& cfg,
                                                    const std::filesystem::path& ckpt_dir,
                                                    const std::vector<data::Case>& cases) {
    std::vector<metrics::ExperimentReport> reports;
    const auto variants = ablation_variants();
    auto load = [&](const Variant& v) {
        auto path = variant_checkpoint(ckpt_dir, v.name);
        auto net = train::load_network(path);
        return std::make_pair(std::move(net), path);
    };
    auto single = [&](const Variant& v, RunSpec spec) {
        auto [net, path] = load(v);
        auto r = run_spec(net, cases, cfg, spec);
        r.fingerprint["checkpoint"] = path.filename().string();
        return r;
    };
    const double interval = cfg.propagate.interval_mm;
    switch (suite) {
        case Suite::propose_only:
        case Suite::boundary:
        case Suite::refine:
        case Suite::mcc: {
            const auto& v = variants[static_cast<std::size_t>(suite)];
            reports.push_back(single(v, {v.name, v, interval, 0.0, 1}));
            break;
        }
        case Suite::variants: {
            for (const auto& v : variants) reports.push_back(single(v, {v.name, v, interval, 0.0, 1}));
            add_p_values(reports, reports.size() - 1);
            break;
        }
        case Suite::interval_sweep: {
            const auto& v = variants.back();
            auto [net, path] = load(v);
            std::vector<RunSpec> specs;
            for (double mm : cfg.ablate.intervals_mm) {
                std::ostringstream name;
                name << "interval_" << mm << "mm";
                specs.push_back({name.str(), v, mm, 0.0, cfg.ablate.timing_repeats});
            }
            reports = run_specs(net, cases, cfg, specs);
            for (auto& r : reports) r.fingerprint["checkpoint"] = path.filename().string();
            break;
        }
        case Suite::deviation_sweep: {
            const auto& v = variants.back();
            auto [net, path] = load(v);
            std::size_t zero = 0;
            for (double mm : cfg.ablate.deviations_mm) {
                std::ostringstream name;
                name << "deviation_" << (mm > 0 ? "+" : "") << mm << "mm";
                if (mm == 0.0) zero = reports.size();
                auto r = run_spec(net, cases, cfg, {name.str(), v, interval, mm, 1});
                r.fingerprint["checkpoint"] = path.filename().string();
                reports.push_back(std::move(r));
            }
            if (!reports.empty()) add_p_values(reports, zero);
            break;
        }
    }
    return reports;
}

std::string summary_table(const std::vector<metrics::ExperimentReport>& reports) {
    std::ostringstream os;
    if (reports.empty()) return "";
    const auto names = reports.front().metric_names();
    os << std::left << std::setw(22) << "row";
    for (const auto& n : names) os << std::setw(18) << n;
    os << std::setw(12) << "s/volume" << "p(dsc)\n";
    os << std::fixed << std::setprecision(3);
    for (const auto& r : reports) {
        os << std::setw(22) << r.name;
        for (const auto& n : names) {
            const auto a = r.summary(n);
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(3) << a.mean << "+-" << a.sem;
            os << std::setw(18) << cell.str();
        }
        std::ostringstream sec;
        if (r.extra.contains("seconds_per_volume")) sec << std::fixed << std::setprecision(3)
                                                        << r.extra["seconds_per_volume"].get<double>();
        os << std::setw(12) << sec.str();
        if (r.p_values.empty()) {
            os << "-";
        } else {
            os << std::setprecision(4) << r.p_values.begin()->second << std::setprecision(3);
        }
        os << "\n";
    }
    return os.str();
}

void write_suite(const std::filesystem::path& out, const std::vector<metrics::ExperimentReport>& reports) {
    std::filesystem::create_directories(out);
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& r : reports) {
        metrics::write_report(out / r.name, r);
        nlohmann::json row{{"name", r.name}, {"fingerprint", r.fingerprint}, {"p_values", r.p_values}};
        for (const auto& n : r.metric_names()) {
            const auto a = r.summary(n);
            row[n] = {{"mean", a.mean}, {"sem", a.sem}};
        }
        if (r.extra.contains("seconds_per_volume")) row["seconds_per_volume"] = r.extra["seconds_per_volume"];
        summary.push_back(row);
    }
    std::ofstream(out / "summary.json") << summary.dump(2) << "\n";
    std::ofstream(out / "table.txt") << summary_table(reports);
}

}  // namespace propnet::experiments
