#include "propnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "propnet/io.hpp"

namespace propnet::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Counts {
    int64_t a = 0;
    int64_t b = 0;
    int64_t both = 0;
};

Counts overlap_counts(const MaskVolume& a, const MaskVolume& b) {
    if (a.voxels.shape != b.voxels.shape) throw ShapeError("metrics: mask shape mismatch");
    Counts c;
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
        const bool x = a.voxels.data[i] != 0;
        const bool y = b.voxels.data[i] != 0;
        c.a += x;
        c.b += y;
        c.both += x && y;
    }
    return c;
}

// Lower envelope of parabolas s2*(p-q)^2 + f(q); entries equal to +inf are skipped.
void squared_edt_1d(std::vector<double>& f, double s2, std::vector<int64_t>& v, std::vector<double>& z) {
    const auto n = static_cast<int64_t>(f.size());
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n + 1), 0.0);
    int64_t k = -1;
    for (int64_t q = 0; q < n; ++q) {
        const double fq = f[static_cast<std::size_t>(q)];
        if (fq == kInf) continue;
        double s = -kInf;
        while (k >= 0) {
            const int64_t r = v[static_cast<std::size_t>(k)];
            const double fr = f[static_cast<std::size_t>(r)];
            s = ((fq + s2 * static_cast<double>(q * q)) - (fr + s2 * static_cast<double>(r * r))) /
                (2.0 * s2 * static_cast<double>(q - r));
            if (s <= z[static_cast<std::size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k + 1)] = kInf;
    }
    if (k < 0) return;  // no sites on this line
    std::vector<double> out(static_cast<std::size_t>(n));
    int64_t j = 0;
    for (int64_t p = 0; p < n; ++p) {
        while (z[static_cast<std::size_t>(j + 1)] < static_cast<double>(p)) ++j;
        const int64_t q = v[static_cast<std::size_t>(j)];
        const double d = static_cast<double>(p - q);
        out[static_cast<std::size_t>(p)] = s2 * d * d + f[static_cast<std::size_t>(q)];
    }
    f.swap(out);
}

double within_fraction_numerator(const Grid3<uint8_t>& surface, const Grid3<double>& dist2, double tol2) {
    // Relative slack absorbs rounding in the separable sums at exact ties.
    const double limit = tol2 * (1.0 + 1e-12);
    double n = 0.0;
    for (std::size_t i = 0; i < surface.size(); ++i) {
        if (surface.data[i] != 0 && dist2.data[i] <= limit) n += 1.0;
    }
    return n;
}

}  // namespace

double dsc(const MaskVolume& a, const MaskVolume& b) {
    const Counts c = overlap_counts(a, b);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double ji(const MaskVolume& a, const MaskVolume& b) {
    const Counts c = overlap_counts(a, b);
    const int64_t uni = c.a + c.b - c.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.both) / static_cast<double>(uni);
}

Grid3<uint8_t> surface_voxels(const Grid3<uint8_t>& m) {
    Grid3<uint8_t> s(m.shape);
    const auto fg = [&](int64_t z, int64_t y, int64_t x) {
        return z >= 0 && z < m.depth() && y >= 0 && y < m.height() && x >= 0 && x < m.width() && m(z, y, x) != 0;
    };
    for (int64_t z = 0; z < m.depth(); ++z) {
        for (int64_t y = 0; y < m.height(); ++y) {
            for (int64_t x = 0; x < m.width(); ++x) {
                if (m(z, y, x) == 0) continue;
                const bool interior = fg(z - 1, y, x) && fg(z + 1, y, x) && fg(z, y - 1, x) && fg(z, y + 1, x) &&
                                      fg(z, y, x - 1) && fg(z, y, x + 1);
                s(z, y, x) = interior ? 0 : 1;
            }
        }
    }
    return s;
}

Grid3<double> squared_distance_to(const Grid3<uint8_t>& sites, const Spacing& spacing) {
    Grid3<double> d(sites.shape, kInf);
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (sites.data[i] != 0) d.data[i] = 0.0;
    }
    const int64_t nz = sites.depth();
    const int64_t ny = sites.height();
    const int64_t nx = sites.width();
    std::vector<double> line;
    std::vector<int64_t> v;
    std::vector<double> z;

    const auto pass = [&](int64_t len, double step, auto&& index_of, int64_t outer_a, int64_t outer_b) {
        line.resize(static_cast<std::size_t>(len));
        const double s2 = step * step;
        for (int64_t a = 0; a < outer_a; ++a) {
            for (int64_t b = 0; b < outer_b; ++b) {
                for (int64_t i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = d.data[index_of(a, b, i)];
                squared_edt_1d(line, s2, v, z);
                for (int64_t i = 0; i < len; ++i) d.data[index_of(a, b, i)] = line[static_cast<std::size_t>(i)];
            }
        }
    };
    pass(nx, spacing.x, [&](int64_t a, int64_t b, int64_t i) { return d.index(a, b, i); }, nz, ny);
    pass(ny, spacing.y, [&](int64_t a, int64_t b, int64_t i) { return d.index(a, i, b); }, nz, nx);
    pass(nz, spacing.z, [&](int64_t a, int64_t b, int64_t i) { return d.index(i, a, b); }, ny, nx);
    return d;
}

std::vector<double> surface_dice(const MaskVolume& a, const MaskVolume& b, const std::vector<double>& tolerances_mm,
                                 const Spacing& spacing) {
    if (a.voxels.shape != b.voxels.shape) throw ShapeError("surface_dice: mask shape mismatch");
    for (double t : tolerances_mm) {
        if (!(t >= 0.0)) throw std::invalid_argument("surface_dice: tolerance must be nonnegative");
    }
    const auto sa = surface_voxels(a.voxels);
    const auto sb = surface_voxels(b.voxels);
    const auto na = static_cast<double>(std::count(sa.data.begin(), sa.data.end(), uint8_t{1}));
    const auto nb = static_cast<double>(std::count(sb.data.begin(), sb.data.end(), uint8_t{1}));
    std::vector<double> out;
    if (na + nb == 0.0) return std::vector<double>(tolerances_mm.size(), 1.0);
    const auto to_b = squared_distance_to(sb, spacing);
    const auto to_a = squared_distance_to(sa, spacing);
    for (double t : tolerances_mm) {
        const double tol2 = t * t;
        out.push_back((within_fraction_numerator(sa, to_b, tol2) + within_fraction_numerator(sb, to_a, tol2)) /
                      (na + nb));
    }
    return out;
}

double surface_dice(const MaskVolume& a, const MaskVolume& b, double tolerance_mm, const Spacing& spacing) {
    return surface_dice(a, b, std::vector<double>{tolerance_mm}, spacing).front();
}

TTest paired_t_test(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
    const auto n = static_cast<double>(x.size());
    std::vector<double> diff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
    const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    const double var = ss / (n - 1.0);
    if (var == 0.0) {
        if (mean == 0.0) return {0.0, 1.0};
        return {mean > 0.0 ? kInf : -kInf, 0.0};
    }
    const double t = mean / std::sqrt(var / n);
    if (mean == 0.0) return {0.0, 1.0};
    const boost::math::students_t dist(n - 1.0);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return {t, std::min(1.0, p)};
}

CaseMetrics evaluate_case(const std::string& id, const MaskVolume& pred, const MaskVolume& truth,
                          const std::vector<double>& tolerances_mm) {
    const Counts c = overlap_counts(pred, truth);
    CaseMetrics m;
    m.id = id;
    m.dsc = dsc(pred, truth);
    m.ji = ji(pred, truth);
    const auto sd = surface_dice(pred, truth, tolerances_mm, truth.spacing);
    for (std::size_t i = 0; i < tolerances_mm.size(); ++i) m.sdsc[tolerances_mm[i]] = sd[i];
    m.predicted_voxels = c.a;
    m.truth_voxels = c.b;
    m.overlap_voxels = c.both;
    return m;
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    const auto n = static_cast<double>(values.size());
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return a;
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sem = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    return a;
}

namespace {

std::string tolerance_key(double t) {
    std::ostringstream os;
    os.precision(1);
    os << std::fixed << t;
    return "sdsc@" + os.str();
}

}  // namespace

std::vector<std::string> ExperimentReport::metric_names() const {
    std::vector<std::string> names{"dsc", "ji"};
    for (double t : tolerances_mm) names.push_back(tolerance_key(t));
    return names;
}

std::vector<double> ExperimentReport::column(const std::string& metric) const {
    std::vector<double> out;
    out.reserve(cases.size());
    for (const auto& c : cases) {
        if (metric == "dsc") {
            out.push_back(c.dsc);
        } else if (metric == "ji") {
            out.push_back(c.ji);
        } else {
            bool found = false;
            for (const auto& [tol, v] : c.sdsc) {
                if (tolerance_key(tol) == metric) {
                    out.push_back(v);
                    found = true;
                }
            }
            if (!found) throw std::invalid_argument("report: unknown metric " + metric);
        }
    }
    return out;
}

Aggregate ExperimentReport::summary(const std::string& metric) const { return aggregate(column(metric)); }

nlohmann::json ExperimentReport::to_json() const {
    using nlohmann::json;
    json cases_j = json::array();
    for (const auto& c : cases) {
        json sd = json::object();
        for (const auto& [tol, v] : c.sdsc) sd[tolerance_key(tol)] = v;
        cases_j.push_back(json{{"id", c.id},
                               {"dsc", c.dsc},
                               {"ji", c.ji},
                               {"sdsc", sd},
                               {"predicted_voxels", c.predicted_voxels},
                               {"truth_voxels", c.truth_voxels},
                               {"overlap_voxels", c.overlap_voxels}});
    }
    json agg = json::object();
    for (const auto& name : metric_names()) {
        const Aggregate a = summary(name);
        agg[name] = json{{"mean", a.mean}, {"sem", a.sem}};
    }
    return json{{"name", name},           {"n", cases.size()},    {"aggregate", agg},
                {"cases", cases_j},       {"p_values", p_values}, {"fingerprint", fingerprint},
                {"tolerances_mm", tolerances_mm}, {"extra", extra}};
}

ExperimentReport make_report(std::string name, std::vector<CaseMetrics> cases, std::vector<double> tolerances_mm) {
    std::sort(cases.begin(), cases.end(), [](const CaseMetrics& a, const CaseMetrics& b) { return a.id < b.id; });
    ExperimentReport r;
    r.name = std::move(name);
    r.cases = std::move(cases);
    r.tolerances_mm = std::move(tolerances_mm);
    return r;
}

std::string report_csv(const ExperimentReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "id";
    for (const auto& name : report.metric_names()) os << ',' << name;
    os << '\n';
    const auto names = report.metric_names();
    std::vector<std::vector<double>> cols;
    for (const auto& name : names) cols.push_back(report.column(name));
    for (std::size_t i = 0; i < report.cases.size(); ++i) {
        os << report.cases[i].id;
        for (const auto& col : cols) os << ',' << col[i];
        os << '\n';
    }
    return os.str();
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json", std::ios::trunc);
        if (!out) throw io::IoError("cannot write " + (dir / "report.json").string());
        out << report.to_json().dump(2) << '\n';
    }
    std::ofstream csv(dir / "report.csv", std::ios::trunc);
    if (!csv) throw io::IoError("cannot write " + (dir / "report.csv").string());
    csv << report_csv(report);
}

namespace {

std::set<std::string> mask_ids(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw io::IoError("not a directory: " + dir.string());
    std::set<std::string> ids;
    const std::string suffix = ".mask.json";
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            ids.insert(name.substr(0, name.size() - suffix.size()));
        }
    }
    return ids;
}

}  // namespace

ExperimentReport evaluate_set(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              const std::vector<double>& tolerances_mm) {
    const auto pred_ids = mask_ids(pred_dir);
    const auto gt_ids = mask_ids(gt_dir);
    std::vector<std::string> missing;
    for (const auto& id : gt_ids) {
        if (!pred_ids.contains(id)) missing.push_back("prediction for " + id);
    }
    for (const auto& id : pred_ids) {
        if (!gt_ids.contains(id)) missing.push_back("ground truth for " + id);
    }
    if (!missing.empty()) {
        std::string msg = "evaluate: case id mismatch; missing:";
        for (const auto& m : missing) msg += " " + m + ";";
        throw std::invalid_argument(msg);
    }
    if (gt_ids.empty()) throw std::invalid_argument("evaluate: no cases found in " + gt_dir.string());
    std::vector<CaseMetrics> cases;
    for (const auto& id : gt_ids) {
        const auto pred = io::read_mask(pred_dir / id);
        const auto truth = io::read_mask(gt_dir / id);
        cases.push_back(evaluate_case(id, pred, truth, tolerances_mm));
    }
    auto report = make_report("evaluate", std::move(cases), tolerances_mm);
    report.fingerprint = nlohmann::json{{"pred_dir", pred_dir.string()}, {"gt_dir", gt_dir.string()}};
    return report;
}

}  // namespace propnet::metrics
