// Acceptance run: one PASS/FAIL line per criterion.
// usage: acceptance <training-run-dir> <report-dir>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "propnet/config.hpp"
#include "propnet/data.hpp"
#include "propnet/dataset.hpp"
#include "propnet/metrics.hpp"
#include "propnet/nn/experiments.hpp"
#include "propnet/nn/losses.hpp"
#include "propnet/nn/predictor.hpp"
#include "propnet/nn/trainer.hpp"
#include "propnet/objectives.hpp"
#include "propnet/propagator.hpp"

using namespace propnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;
std::string transcript;  // copied to <report_dir>/criteria.txt

void run(int id, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    if (s > limit_s) {
        o.pass = false;
        o.detail += "; over time limit";
    }
    if (!o.pass) ++failures;
    char head[160];
    std::snprintf(head, sizeof head, "criterion %2d %s: %s [%.1f s] ", id, o.pass ? "PASS" : "FAIL", title.c_str(), s);
    const std::string line = head + o.detail + "\n";
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    transcript += line;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

Outcome loss_gradients() {
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
        const std::size_t n = 64;
        std::vector<double> a(n), b(n);
        std::vector<uint8_t> hard(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = 0.02 + 0.96 * u(rng);
            b[i] = u(rng) < 0.3 ? 1.0 : 0.0;
            hard[i] = u(rng) < 0.34 ? 1 : 0;
        }
        const bool masked = point % 2 == 1;
        std::span<const uint8_t> hm = masked ? std::span<const uint8_t>(hard) : std::span<const uint8_t>();
        const auto g = objectives::soft_dice_grad(a, b, hm);
        // Same point through the autograd loss used in training.
        auto at = torch::from_blob(a.data(), {1, 1, 8, 8}, torch::kFloat64).clone().requires_grad_(true);
        auto bt = torch::from_blob(b.data(), {1, 1, 8, 8}, torch::kFloat64).clone();
        torch::Tensor ht;
        if (masked) {
            ht = torch::empty({1, 1, 8, 8}, torch::kFloat64);
            for (std::size_t i = 0; i < n; ++i) ht.data_ptr<double>()[i] = hard[i];
        }
        losses::soft_dice(at, bt, ht).backward();
        double num = 0.0, den = 0.0, num_t = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double h = 1e-5;
            auto ap = a, am = a;
            ap[i] += h;
            am[i] -= h;
            const double fd = (objectives::soft_dice(ap, b, hm) - objectives::soft_dice(am, b, hm)) / (2 * h);
            num += (fd - g[i]) * (fd - g[i]);
            num_t += (fd - at.grad().data_ptr<double>()[i]) * (fd - at.grad().data_ptr<double>()[i]);
            den += fd * fd;
        }
        worst = std::max({worst, std::sqrt(num / den), std::sqrt(num_t / den)});
    }
    return {worst <= 1e-4, "max relative error " + fmt(worst, 3) + " over 100 points"};
}

Outcome morphology() {
    std::mt19937_64 rng(2002);
    int mismatches = 0;
    for (int i = 0; i < 200; ++i) {
        const auto m = oracle::random_blob_mask(rng, 32, 32);
        const int e = i % 2 == 0 ? 3 : 9;
        const auto expect_eroded = oracle::erode(m, e, false);
        MaskSlice expect(32, 32);
        for (std::size_t k = 0; k < m.data.size(); ++k) expect.data[k] = m.data[k] - expect_eroded.data[k];
        if (objectives::boundary_gt(m, e).data != expect.data) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches in 200 masks"};
}

Outcome sdsc() {
    std::mt19937_64 rng(3003);
    std::uniform_int_distribution<int64_t> dim(2, 12);
    const Spacing s{2.5, 0.8, 0.6};
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::array<int64_t, 3> shape{dim(rng), dim(rng), dim(rng)};
        const double density = 0.1 + 0.4 * (i % 5) / 4.0;
        const auto a = oracle::random_volume(rng, shape, density, s);
        const auto b = oracle::random_volume(rng, shape, density, s);
        const auto fast = metrics::surface_dice(a, b, std::vector<double>{0.5, 1.0, 2.0}, s);
        for (std::size_t k = 0; k < 3; ++k) {
            const double tol = std::array<double, 3>{0.5, 1.0, 2.0}[k];
            worst = std::max(worst, std::abs(fast[k] - oracle::surface_dice(a, b, tol, s)));
        }
    }
    return {worst <= 1e-9, "max abs difference " + fmt(worst, 3)};
}

Outcome mcc() {
    std::mt19937_64 rng(4004);
    std::uniform_int_distribution<int64_t> dim(3, 14);
    int bad = 0;
    for (int i = 0; i < 100; ++i) {
        const auto m = oracle::random_volume(rng, {dim(rng), dim(rng), dim(rng)}, 0.05 + 0.002 * i);
        if (propagate::mcc_filter(m, propagate::Connectivity::c26).voxels.data !=
            oracle::largest_component(m, true).voxels.data)
            ++bad;
        if (propagate::mcc_filter(m, propagate::Connectivity::c6).voxels.data !=
            oracle::largest_component(m, false).voxels.data)
            ++bad;
    }
    return {bad == 0, std::to_string(bad) + " mismatches in 200 comparisons"};
}

Outcome schedules() {
    struct Row {
        double n, w, wp;
    };
    const Row rows[] = {{0, 1.0, 0.0}, {10, 0.75, 0.25}, {20, 0.5, 0.5}, {40, 0.5, 1.0}, {200, 0.5, 1.0}};
    bool ok = true;
    for (const auto& r : rows) {
        const auto w = objectives::stage_weights(r.n, 40);
        ok = ok && w.w == r.w && w.w_prime == r.wp;
    }
    const int64_t interval = propagate::compute_interval(5.0, 20.0);
    MaskSlice m(20, 20);
    for (int i = 0; i < 200; ++i) m.data[static_cast<std::size_t>(i)] = 1;
    const double tau = propagate::compute_tau(m);
    ok = ok && interval == 4 && tau == 10.0;
    return {ok, "interval(5 mm)=" + std::to_string(interval) + ", tau(200)=" + fmt(tau)};
}

Outcome determinism(const fs::path& ckpt, const config::RunConfig& cfg, const std::vector<data::Case>& cases) {
    auto net = train::load_network(ckpt);
    model::NetworkPredictor pred(net, model::default_head(net->config()));
    int identical = 0, halted = 0;
    for (const auto& c : cases) {
        const int64_t z = data::largest_slice(c.mask);
        auto pc = cfg.propagate;
        pc.parallel = true;
        const auto a = propagate::segment_volume(pred, c.volume, z, c.mask.voxels.slice(z), cfg.data.preprocess, pc);
        pc.parallel = false;
        const auto b = propagate::segment_volume(pred, c.volume, z, c.mask.voxels.slice(z), cfg.data.preprocess, pc);
        if (a.mask.voxels.data == b.mask.voxels.data) ++identical;
        bool guard = false;
        for (const auto* r : {&a, &b})
            for (const auto& f : r->propagation.fronts) guard = guard || f.termination == propagate::Termination::max_iterations;
        if (!guard) ++halted;
    }
    const auto n = static_cast<int>(cases.size());
    return {n == 10 && identical == n && halted == n,
            std::to_string(identical) + "/" + std::to_string(n) + " identical, " + std::to_string(halted) + "/" +
                std::to_string(n) + " halted without the guard"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: acceptance <training-run-dir> <report-dir>\n";
        return 2;
    }
    const fs::path run_dir = argv[1];
    const fs::path report_dir = argv[2];
    fs::create_directories(report_dir);
    torch::set_num_threads(1);

    run(1, "loss gradients vs central differences", 10, loss_gradients);
    run(2, "boundary_gt vs neighbourhood oracle", 30, morphology);
    run(3, "surface dice vs all-pairs oracle", 120, sdsc);
    run(4, "mcc_filter vs flood-fill oracle", 60, mcc);
    run(5, "schedule formulas", 1, schedules);

    config::RunConfig cfg;
    double train_seconds = 0.0;
    fs::path ckpt;
    std::vector<data::Case> val;
    bool have_run = false;
    try {
        std::ifstream in(run_dir / "run.json");
        if (!in) throw std::runtime_error("no run.json in " + run_dir.string());
        const auto j = nlohmann::json::parse(in);
        cfg = config::from_json(j.at("config"));
        train_seconds = j.at("wall_seconds").get<double>();
        ckpt = experiments::variant_checkpoint(run_dir, "+mcc");
        val = data::load_split(cfg, true);
        have_run = true;
    } catch (const std::exception& e) {
        std::cerr << "cannot use training run: " << e.what() << "\n";
    }
    auto need_run = [&](const std::function<Outcome()>& f) {
        return [&, f]() -> Outcome {
            if (!have_run) return {false, "training run missing"};
            return f();
        };
    };

    run(6, "parallel vs sequential propagation", 600, need_run([&] { return determinism(ckpt, cfg, val); }));

    run(7, "desk-scale training and variant ordering", 1800 - train_seconds, need_run([&]() -> Outcome {
            const auto reports = experiments::run_ablation(experiments::Suite::variants, cfg, run_dir, val);
            experiments::write_suite(report_dir / "variants", reports);
            const double base = reports.front().summary("dsc").mean;
            const double full = reports.back().summary("dsc").mean;
            std::ostringstream os;
            for (const auto& r : reports) os << r.name << "=" << fmt(r.summary("dsc").mean) << " ";
            os << "train " << fmt(train_seconds, 4) << " s";
            return {full >= 0.70 && full >= base, os.str()};
        }));

    run(8, "seed deviation sweep", 900, need_run([&]() -> Outcome {
            const auto reports = experiments::run_ablation(experiments::Suite::deviation_sweep, cfg, run_dir, val);
            experiments::write_suite(report_dir / "deviation_sweep", reports);
            std::map<double, double> dsc;
            for (const auto& r : reports) dsc[r.fingerprint["deviation_mm"].get<double>()] = r.summary("dsc").mean;
            const bool rows = dsc.size() == 7 && dsc.contains(-15.0) && dsc.contains(15.0) && dsc.contains(0.0);
            const double drop = rows ? std::max(dsc[0.0] - dsc[-15.0], dsc[0.0] - dsc[15.0]) : 1.0;
            std::ostringstream os;
            for (const auto& [mm, v] : dsc) os << mm << "mm=" << fmt(v) << " ";
            os << "worst drop " << fmt(drop, 3);
            return {rows && drop <= 0.05 && fs::exists(report_dir / "deviation_sweep" / "table.txt"), os.str()};
        }));

    run(9, "interval sweep timing", 900, need_run([&]() -> Outcome {
            const auto reports = experiments::run_ablation(experiments::Suite::interval_sweep, cfg, run_dir, val);
            experiments::write_suite(report_dir / "interval_sweep", reports);
            bool ok = reports.size() == 4;
            std::ostringstream os;
            double prev = std::numeric_limits<double>::infinity();
            for (const auto& r : reports) {
                const double s = r.extra["seconds_per_volume"].get<double>();
                ok = ok && s <= prev && r.fingerprint.contains("interval_mm");
                prev = s;
                os << r.fingerprint["interval_mm"].get<double>() << "mm: " << fmt(s, 3) << " s dsc "
                   << fmt(r.summary("dsc").mean) << "; ";
            }
            return {ok, os.str()};
        }));

    run(10, "paired t-test vs textbook recomputation", 30, []() -> Outcome {
        std::mt19937_64 rng(1010);
        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<double> x(20), y(20);
        for (std::size_t i = 0; i < 20; ++i) {
            x[i] = nd(rng);
            y[i] = x[i] + 0.4 + 0.6 * nd(rng);
        }
        const auto t = metrics::paired_t_test(x, y);
        const double t_ref = oracle::paired_t(x, y);
        const double p_ref = oracle::t_two_sided_p(t_ref, 19);
        const auto same = metrics::paired_t_test(x, x);
        const double dt = std::abs(t.t - t_ref), dp = std::abs(t.p - p_ref);
        return {dt <= 1e-9 && dp <= 1e-9 && same.p == 1.0,
                "t=" + fmt(t.t, 6) + " p=" + fmt(t.p, 6) + " |dt|=" + fmt(dt, 2) + " |dp|=" + fmt(dp, 2)};
    });

    std::printf("acceptance: %d of 10 criteria failed\n", failures);
    std::ofstream(report_dir / "criteria.txt") << transcript << "failed: " << failures << "\n";
    return failures == 0 ? 0 : 1;
}
