#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "propnet/config.hpp"
#include "propnet/dataset.hpp"
#include "propnet/metrics.hpp"
#include "propnet/nn/model.hpp"

namespace propnet::experiments {

enum class Suite { propose_only, boundary, refine, mcc, variants, interval_sweep, deviation_sweep };

/// Accepts propose_only, +boundary, +refine, +mcc, variants, interval_sweep, deviation_sweep.
[[nodiscard]] Suite parse_suite(const std::string& name);
[[nodiscard]] std::string suite_name(Suite s);

struct Variant {
    std::string name;
    model::Head head = model::Head::refining_composite;
    bool mcc = true;
};

/// The four ablation rows, all evaluated from one trained network.
[[nodiscard]] std::vector<Variant> ablation_variants();

/// `<dir>/<variant>.ckpt`, then model.ckpt, then best.ckpt; throws naming the
/// variant when none exists.
[[nodiscard]] std::filesystem::path variant_checkpoint(const std::filesystem::path& dir, const std::string& variant);

struct RunSpec {
    std::string name;
    Variant variant;
    double interval_mm = 20.0;
    double deviation_mm = 0.0;
    int64_t timing_repeats = 1;
};

/// Seed slice for a deviation: the largest annotated slice shifted by
/// round(mm / spacing_z) slices, then moved to the nearest slice with tumour.
[[nodiscard]] int64_t deviated_seed(const MaskVolume& mask, double deviation_mm);

/// Propagates every case and scores it against its ground truth. Timing per
/// volume is the minimum over `timing_repeats` runs.
[[nodiscard]] metrics::ExperimentReport run_spec(model::PropNet& net, const std::vector<data::Case>& cases,
                                                 const config::RunConfig& cfg, const RunSpec& spec);

/// Several specs over the same cases; timing repeats are interleaved across
/// specs within each case.
[[nodiscard]] std::vector<metrics::ExperimentReport> run_specs(model::PropNet& net,
                                                               const std::vector<data::Case>& cases,
                                                               const config::RunConfig& cfg,
                                                               const std::vector<RunSpec>& specs);

/// Runs a suite on `cases`, loading checkpoints from `ckpt_dir`.
[[nodiscard]] std::vector<metrics::ExperimentReport> run_ablation(Suite suite, const config::RunConfig& cfg,
                                                                  const std::filesystem::path& ckpt_dir,
                                                                  const std::vector<data::Case>& cases);

/// Plain-text table: one row per report with DSC, JI and SDSC as mean +- SEM,
/// plus timing when recorded.
[[nodiscard]] std::string summary_table(const std::vector<metrics::ExperimentReport>& reports);

/// Writes `<out>/<report name>/report.{json,csv}`, summary.json and table.txt.
void write_suite(const std::filesystem::path& out, const std::vector<metrics::ExperimentReport>& reports);

}  // namespace propnet::experiments
