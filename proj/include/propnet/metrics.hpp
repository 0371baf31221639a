#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "propnet/grid.hpp"

namespace propnet::metrics {

/// 2|a&b| / (|a|+|b|); both empty -> 1.
[[nodiscard]] double dsc(const MaskVolume& a, const MaskVolume& b);
/// |a&b| / |a|b|; both empty -> 1.
[[nodiscard]] double ji(const MaskVolume& a, const MaskVolume& b);

/// Foreground voxels with at least one background 6-neighbour; the volume
/// border counts as background.
[[nodiscard]] Grid3<uint8_t> surface_voxels(const Grid3<uint8_t>& mask);

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// nonzero voxel of `sites`; +inf everywhere when `sites` is empty.
[[nodiscard]] Grid3<double> squared_distance_to(const Grid3<uint8_t>& sites, const Spacing& spacing);

/// Bidirectional surface Dice at `tolerance_mm`; both surfaces empty -> 1.
[[nodiscard]] double surface_dice(const MaskVolume& a, const MaskVolume& b, double tolerance_mm,
                                  const Spacing& spacing);

/// Surface Dice at several tolerances sharing one pair of distance maps.
[[nodiscard]] std::vector<double> surface_dice(const MaskVolume& a, const MaskVolume& b,
                                               const std::vector<double>& tolerances_mm, const Spacing& spacing);

struct TTest {
    double t = 0.0;
    double p = 1.0;
};

/// Two-sided paired t-test on x - y.
[[nodiscard]] TTest paired_t_test(const std::vector<double>& x, const std::vector<double>& y);

struct CaseMetrics {
    std::string id;
    double dsc = 0.0;
    double ji = 0.0;
    std::map<double, double> sdsc;  // tolerance_mm -> value
    int64_t predicted_voxels = 0;
    int64_t truth_voxels = 0;
    int64_t overlap_voxels = 0;
};

[[nodiscard]] CaseMetrics evaluate_case(const std::string& id, const MaskVolume& pred, const MaskVolume& truth,
                                        const std::vector<double>& tolerances_mm);

struct Aggregate {
    double mean = 0.0;
    double sem = 0.0;  // standard error of the mean
};

[[nodiscard]] Aggregate aggregate(const std::vector<double>& values);

struct ExperimentReport {
    std::string name;
    std::vector<CaseMetrics> cases;
    std::vector<double> tolerances_mm;
    nlohmann::json fingerprint = nlohmann::json::object();
    std::map<std::string, double> p_values;  // paired t-test on per-case DSC vs named report
    nlohmann::json extra = nlohmann::json::object();

    [[nodiscard]] std::vector<double> column(const std::string& metric) const;
    [[nodiscard]] Aggregate summary(const std::string& metric) const;
    [[nodiscard]] std::vector<std::string> metric_names() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Builds a report from per-case metrics; cases are ordered by id.
[[nodiscard]] ExperimentReport make_report(std::string name, std::vector<CaseMetrics> cases,
                                           std::vector<double> tolerances_mm);

/// report.json plus report.csv (id, dsc, ji, sdsc@<tol>...).
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);
[[nodiscard]] std::string report_csv(const ExperimentReport& report);

/// Matches <id>.mask.{raw,json} files across the two directories.
[[nodiscard]] ExperimentReport evaluate_set(const std::filesystem::path& pred_dir,
                                            const std::filesystem::path& gt_dir,
                                            const std::vector<double>& tolerances_mm = {0.5, 1.0, 2.0});

}  // namespace propnet::metrics
