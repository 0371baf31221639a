// propnet command-line entry point: synth, train, propagate, evaluate, ablate.
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include "propnet/config.hpp"
#include "propnet/dataset.hpp"
#include "propnet/io.hpp"
#include "propnet/metrics.hpp"
#include "propnet/nn/checkpoint.hpp"
#include "propnet/nn/experiments.hpp"
#include "propnet/nn/predictor.hpp"
#include "propnet/nn/trainer.hpp"
#include "propnet/propagator.hpp"

namespace fs = std::filesystem;
using namespace propnet;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
};

config::RunConfig load_config(const Common& c) {
    std::optional<fs::path> path;
    if (!c.config.empty()) path = c.config;
    return config::parse_config(path, c.sets);
}

void write_run_json(const fs::path& dir, const std::string& command, const config::RunConfig& cfg,
                    const std::vector<std::string>& argv, double seconds, nlohmann::json extra = {}) {
    fs::create_directories(dir);
    nlohmann::json j{{"command", command},
                     {"argv", argv},
                     {"fingerprint", config::fingerprint(cfg)},
                     {"config", config::to_json(cfg)},
                     {"versions", {{"propnet", kVersion}, {"torch", TORCH_VERSION}}},
                     {"wall_seconds", seconds}};
    if (!extra.is_null()) j["result"] = std::move(extra);
    std::ofstream(dir / "run.json") << j.dump(2) << "\n";
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw CLI::ValidationError("--tolerances", "not a number: " + item);
        out.push_back(v);
    }
    if (out.empty()) throw CLI::ValidationError("--tolerances", "empty list");
    return out;
}

void log(const std::string& msg) { std::cerr << "[propnet] " << msg << std::endl; }

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"2D-to-3D annotation propagation on synthetic phantoms"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Common common;
    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", common.config, "JSON run configuration");
        if (needs_config) opt->check(CLI::ExistingFile);
        sub->add_option("--set", common.sets, "section.key=value override (repeatable)");
        sub->add_option("--out", common.out, "output directory")->required();
    };

    auto* synth = app.add_subcommand("synth", "generate phantom volumes with masks and seeds");
    add_common(synth, true);
    int64_t count = 4;
    std::string split = "train";
    synth->add_option("--count", count, "number of phantoms")->required()->check(CLI::PositiveNumber);
    synth->add_option("--split", split, "seed stream: train or val")->check(CLI::IsMember({"train", "val"}));

    auto* train_cmd = app.add_subcommand("train", "train the network");
    add_common(train_cmd, true);
    std::string resume;
    bool deterministic = false;
    train_cmd->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);
    train_cmd->add_flag("--deterministic", deterministic, "force deterministic kernels and one thread");

    auto* prop = app.add_subcommand("propagate", "segment one volume from an annotated slice");
    add_common(prop, true);
    std::string ckpt, volume, seed_mask;
    bool sequential = false;
    prop->add_option("--ckpt", ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
    prop->add_option("--volume", volume, "volume stem (<stem>.vol.raw/.json)")->required();
    prop->add_option("--seed-mask", seed_mask, "seed annotation stem (<stem>.seed.raw/.json)")->required();
    prop->add_flag("--sequential", sequential, "run the two fronts one after the other");

    auto* eval = app.add_subcommand("evaluate", "score predicted masks against ground truth");
    std::string pred_dir, gt_dir, tolerances;
    eval->add_option("--pred", pred_dir, "directory of predicted <id>.mask files")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--gt", gt_dir, "directory of ground-truth <id>.mask files")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--out", common.out, "output directory")->required();
    eval->add_option("--tolerances", tolerances, "surface tolerances in mm, comma separated");
    eval->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    eval->add_option("--set", common.sets, "section.key=value override (repeatable)");

    auto* ablate = app.add_subcommand("ablate", "run an ablation or robustness suite on the validation phantoms");
    add_common(ablate, true);
    std::string suite, ckpt_dir;
    ablate->add_option("--suite", suite, "propose_only, +boundary, +refine, +mcc, variants, interval_sweep, deviation_sweep")
        ->required();
    ablate->add_option("--ckpt-dir", ckpt_dir, "directory holding <variant>.ckpt or model.ckpt")
        ->required()
        ->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    try {
        if (synth->parsed()) {
            const auto cfg = load_config(common);
            const bool val = split == "val";
            auto cases = data::generate_cases(cfg, val, count);
            data::write_cases(common.out, cases);
            log("wrote " + std::to_string(cases.size()) + " phantoms to " + common.out);
            write_run_json(common.out, "synth", cfg, args, elapsed(), {{"count", count}, {"split", split}});
        } else if (train_cmd->parsed()) {
            auto cfg = load_config(common);
            if (deterministic) {
                cfg.train.deterministic = true;
                cfg.train.threads = 1;
            }
            train::TrainOptions opts;
            if (!resume.empty()) opts.resume = resume;
            opts.on_epoch = [&](const train::EpochRecord& r) {
                std::ostringstream os;
                os << "epoch " << r.epoch + 1 << "/" << cfg.train.epochs << " loss " << r.loss << " lr " << r.lr;
                if (r.val_dsc) os << " val_dsc " << *r.val_dsc;
                os << " (" << r.seconds << " s)";
                log(os.str());
            };
            const auto res = train::train(cfg, common.out, opts);
            write_run_json(common.out, "train", cfg, args, elapsed(),
                           {{"best_val_dsc", res.best_val_dsc},
                            {"best_checkpoint", res.best_checkpoint.string()},
                            {"last_checkpoint", res.last_checkpoint.string()},
                            {"epochs", res.history.size()}});
        } else if (prop->parsed()) {
            auto cfg = load_config(common);
            if (sequential) cfg.propagate.parallel = false;
            const auto vol = io::read_volume(volume);
            const auto seed = io::read_seed(seed_mask);
            auto net = train::load_network(ckpt);
            model::NetworkPredictor predictor(net, model::default_head(net->config()));
            const auto seg = propagate::segment_volume(predictor, vol, seed.slice_index, seed.mask,
                                                       cfg.data.preprocess, cfg.propagate);
            fs::create_directories(common.out);
            const std::string id = vol.id.empty() ? io::strip_suffix(volume).filename().string() : vol.id;
            io::write_mask(fs::path(common.out) / id, seg.mask);
            auto trace = seg.propagation.trace_json();
            trace["crop"] = {{"y0", seg.crop.y0}, {"x0", seg.crop.x0}, {"size", seg.crop.size}};
            std::ofstream(fs::path(common.out) / "trace.json") << trace.dump(2) << "\n";
            log("segmented " + id + ": " + std::to_string(seg.mask.count()) + " voxels");
            write_run_json(common.out, "propagate", cfg, args, elapsed(),
                           {{"id", id}, {"voxels", seg.mask.count()}, {"checkpoint", ckpt}});
        } else if (eval->parsed()) {
            auto cfg = load_config(common);
            if (!tolerances.empty()) cfg.evaluate.tolerances_mm = parse_list(tolerances);
            auto report = metrics::evaluate_set(pred_dir, gt_dir, cfg.evaluate.tolerances_mm);
            report.fingerprint = {{"config", config::fingerprint(cfg)}};
            metrics::write_report(common.out, report);
            const auto d = report.summary("dsc");
            log("mean DSC " + std::to_string(d.mean) + " +- " + std::to_string(d.sem) + " over " +
                std::to_string(report.cases.size()) + " cases");
            write_run_json(common.out, "evaluate", cfg, args, elapsed(), {{"dsc_mean", d.mean}});
        } else if (ablate->parsed()) {
            const auto cfg = load_config(common);
            const auto s = experiments::parse_suite(suite);
            train::configure_runtime(cfg.train);
            const auto cases = data::load_split(cfg, true);
            const auto reports = experiments::run_ablation(s, cfg, ckpt_dir, cases);
            experiments::write_suite(common.out, reports);
            std::cout << experiments::summary_table(reports);
            write_run_json(common.out, "ablate", cfg, args, elapsed(), {{"suite", experiments::suite_name(s)}});
        }
    } catch (const ConfigError& e) {
        std::cerr << "propnet: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const c10::Error& e) {
        std::cerr << "propnet: " << e.what_without_backtrace() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "propnet: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
