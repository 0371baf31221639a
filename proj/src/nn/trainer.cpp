#include "propnet/nn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "propnet/metrics.hpp"
#include "propnet/nn/losses.hpp"
#include "propnet/nn/predictor.hpp"
#include "propnet/objectives.hpp"
#include "propnet/propagator.hpp"

namespace propnet::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
    std::istringstream ss(s);
    ss >> rng;
    if (!ss) throw checkpoint::CheckpointError("checkpoint: corrupt rng state");
}

struct Batch {
    torch::Tensor support_image;
    torch::Tensor support_mask;
    torch::Tensor query_image;
    torch::Tensor query_mask;
    torch::Tensor boundary;
};

Batch make_batch(std::span<const data::SliceTask> tasks, const TrainConfig& tc) {
    const auto n = static_cast<int64_t>(tasks.size());
    const int64_t h = tasks.front().query_image.height, w = tasks.front().query_image.width;
    Batch b;
    b.support_image = torch::empty({n, 1, h, w});
    b.support_mask = torch::empty({n, 1, h, w});
    b.query_image = torch::empty({n, 1, h, w});
    b.query_mask = torch::empty({n, 1, h, w});
    b.boundary = torch::empty({n, 1, h, w});
    auto fill_mask = [&](torch::Tensor& t, int64_t i, const MaskSlice& m) {
        auto* dst = t.data_ptr<float>() + i * h * w;
        for (std::size_t k = 0; k < m.data.size(); ++k) dst[k] = m.data[k] != 0 ? 1.0F : 0.0F;
    };
    auto fill_image = [&](torch::Tensor& t, int64_t i, const Image<float>& im) {
        std::copy(im.data.begin(), im.data.end(), t.data_ptr<float>() + i * h * w);
    };
    for (int64_t i = 0; i < n; ++i) {
        const auto& task = tasks[static_cast<std::size_t>(i)];
        fill_image(b.support_image, i, task.support_image);
        fill_mask(b.support_mask, i, task.support_mask);
        fill_image(b.query_image, i, task.query_image);
        fill_mask(b.query_mask, i, task.query_mask);
        fill_mask(b.boundary, i, objectives::boundary_gt(task.query_mask, tc.erosion_kernel_size, tc.erosion_kernel));
    }
    return b;
}

void dump_batch(const std::filesystem::path& path, const Batch& b) {
    torch::save(std::vector<torch::Tensor>{b.support_image, b.support_mask, b.query_image, b.query_mask, b.boundary},
                path.string());
}

// Keeps the lines of a JSON-lines log whose epoch precedes `before_epoch`.
void truncate_log(const std::filesystem::path& path, int64_t before_epoch) {
    std::vector<std::string> keep;
    {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && nlohmann::json::parse(line).at("epoch").get<int64_t>() < before_epoch) {
                keep.push_back(line);
            }
        }
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

std::vector<EpochRecord> read_history(const std::filesystem::path& path, int64_t before_epoch) {
    std::vector<EpochRecord> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        EpochRecord r;
        r.epoch = j.at("epoch").get<int64_t>();
        if (r.epoch >= before_epoch) continue;
        r.lr = j.at("lr").get<double>();
        r.loss = j.at("loss").get<double>();
        r.propose_c = j.at("loss_propose_c").get<double>();
        r.refine_c = j.at("loss_refine_c").get<double>();
        r.w = j.at("w").get<double>();
        r.w_prime = j.at("w_prime").get<double>();
        if (!j.at("val_dsc").is_null()) r.val_dsc = j.at("val_dsc").get<double>();
        r.seconds = j.at("seconds").get<double>();
        out.push_back(r);
    }
    return out;
}

}  // namespace

double lr_at(double epoch, const LrSchedule& s) {
    if (epoch < 0.0) throw std::invalid_argument("lr_at: epoch must be nonnegative");
    double t = epoch;
    double period = s.t0;
    while (t >= period) {
        t -= period;
        period *= s.t_mult;
    }
    return s.eta_min + (s.initial_lr - s.eta_min) * (1.0 + std::cos(std::numbers::pi * t / period)) / 2.0;
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j{{"epoch", epoch},       {"lr", lr},   {"loss", loss},           {"loss_propose_c", propose_c},
                     {"loss_refine_c", refine_c}, {"w", w}, {"w_prime", w_prime}, {"seconds", seconds}};
    j["val_dsc"] = val_dsc ? nlohmann::json(*val_dsc) : nlohmann::json(nullptr);
    return j;
}

std::vector<PreparedCase> prepare(const std::vector<data::Case>& cases, const data::PreprocessConfig& prep) {
    std::vector<PreparedCase> out;
    out.reserve(cases.size());
    for (const auto& c : cases) {
        auto [vol, mask] = data::preprocess(c.volume, c.mask, prep);
        out.push_back({c.id, std::move(vol), std::move(mask)});
    }
    return out;
}

double validation_dsc(model::PropNet& net, const std::vector<data::Case>& cases, const config::RunConfig& cfg) {
    if (cases.empty()) return 0.0;
    const bool was_training = net->is_training();
    model::NetworkPredictor predictor(net, model::default_head(cfg.model));
    double sum = 0.0;
    for (const auto& c : cases) {
        const int64_t z = data::largest_slice(c.mask);
        auto seg = propagate::segment_volume(predictor, c.volume, z, c.mask.voxels.slice(z), cfg.data.preprocess,
                                             cfg.propagate);
        sum += metrics::dsc(seg.mask, c.mask);
    }
    net->train(was_training);
    return sum / static_cast<double>(cases.size());
}

void configure_runtime(const TrainConfig& cfg) {
    torch::set_num_threads(static_cast<int>(cfg.threads));
    if (cfg.deterministic) at::globalContext().setDeterministicAlgorithms(true, false);
}

model::PropNet build_network(const config::RunConfig& cfg) {
    torch::manual_seed(cfg.seed);
    return model::PropNet(cfg.model);
}

model::PropNet load_network(const std::filesystem::path& ckpt) {
    const auto meta = checkpoint::read_meta(ckpt);
    const auto cfg = config::from_json(meta.config);
    model::PropNet net(cfg.model);
    (void)checkpoint::load(ckpt, net, nullptr);
    net->eval();
    return net;
}

TrainResult train(const config::RunConfig& cfg, const std::filesystem::path& out_dir, const TrainOptions& opts) {
    cfg.validate();
    const auto t_start = Clock::now();
    const auto& tc = cfg.train;
    configure_runtime(tc);
    std::filesystem::create_directories(out_dir);

    const auto train_cases = prepare(data::load_split(cfg, false), cfg.data.preprocess);
    const auto val_cases = data::load_split(cfg, true);
    if (train_cases.empty()) throw ConfigError("data.train_count: no training volumes");

    auto net = build_network(cfg);
    torch::optim::Adam optim(net->parameters(), torch::optim::AdamOptions(tc.schedule.initial_lr));
    std::mt19937_64 rng(cfg.seed);

    checkpoint::Checkpoint meta;
    meta.config = config::to_json(cfg);
    meta.fingerprint = config::fingerprint(cfg);

    TrainResult result;
    result.last_checkpoint = out_dir / "last.ckpt";
    result.best_checkpoint = out_dir / "best.ckpt";
    const auto history_path = out_dir / "history.jsonl";
    const auto steps_path = out_dir / "steps.jsonl";

    if (opts.resume) {
        meta = checkpoint::load(*opts.resume, net, &optim);
        rng_from_string(rng, meta.rng_state);
        result.history = read_history(history_path, meta.state.epoch);
    }
    truncate_log(steps_path, meta.state.epoch);
    std::ofstream step_log(steps_path, std::ios::app);
    {
        std::ofstream h(history_path, std::ios::trunc);
        for (const auto& r : result.history) h << r.to_json().dump() << "\n";
    }
    result.best_val_dsc = meta.state.best_val_dsc;

    auto save = [&](const std::filesystem::path& p) {
        meta.rng_state = rng_to_string(rng);
        checkpoint::save(p, net, &optim, meta);
    };

    const int64_t end_epoch = opts.stop_after ? std::min(tc.epochs, *opts.stop_after) : tc.epochs;
    for (int64_t epoch = meta.state.epoch; epoch < end_epoch; ++epoch) {
        const auto t_epoch = Clock::now();
        net->train();
        const double lr = lr_at(static_cast<double>(epoch), tc.schedule);
        for (auto& group : optim.param_groups()) {
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        }
        const auto weights = objectives::stage_weights(static_cast<double>(epoch), tc.loss_adjusting_factor);

        std::vector<data::SliceTask> tasks;
        for (const auto& c : train_cases) {
            for (int64_t s = 0; s < tc.supports_per_volume; ++s) {
                auto t = data::sample_training_tasks(c.volume, c.mask, rng, cfg.data.preprocess.crop_size);
                for (auto& task : t) tasks.push_back(std::move(task));
            }
        }
        std::shuffle(tasks.begin(), tasks.end(), rng);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.w = weights.w;
        rec.w_prime = weights.w_prime;
        int64_t steps = 0;
        for (std::size_t i = 0; i < tasks.size(); i += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(tc.batch_size), tasks.size() - i);
            // A lone trailing task would make batch norm degenerate.
            if (n < 2 && steps > 0) break;
            const Batch b = make_batch(std::span(tasks).subspan(i, n), tc);
            optim.zero_grad();
            auto out = net->forward(b.support_image, b.support_mask, b.query_image);
            auto br = losses::total_loss(out, b.query_mask, b.boundary, weights);
            const double loss = br.total.item<double>();
            if (!std::isfinite(loss)) {
                const auto dump = out_dir / "nan_batch.pt";
                dump_batch(dump, b);
                throw NanLossError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(meta.state.global_step) + "; batch written to " + dump.string());
            }
            br.total.backward();
            torch::nn::utils::clip_grad_norm_(net->parameters(), tc.grad_clip);
            optim.step();
            step_log << nlohmann::json{{"epoch", epoch},
                                       {"step", meta.state.global_step},
                                       {"L_c", br.propose_c},
                                       {"L_r", br.propose_r},
                                       {"L_b", br.propose_b},
                                       {"L_c_ref", br.refine_c},
                                       {"L_r_ref", br.refine_r},
                                       {"L_b_ref", br.refine_b},
                                       {"w", weights.w},
                                       {"w_prime", weights.w_prime},
                                       {"total", loss}}
                            .dump()
                     << "\n";
            rec.loss += loss;
            rec.propose_c += br.propose_c;
            rec.refine_c += br.refine_c;
            ++steps;
            ++meta.state.global_step;
        }
        if (steps > 0) {
            rec.loss /= static_cast<double>(steps);
            rec.propose_c /= static_cast<double>(steps);
            rec.refine_c /= static_cast<double>(steps);
        }
        meta.state.epoch = epoch + 1;

        const bool last_epoch = epoch + 1 == tc.epochs;
        const bool validate_now =
            !val_cases.empty() && tc.validate_every > 0 && ((epoch + 1) % tc.validate_every == 0 || last_epoch);
        bool improved = false;
        if (validate_now) {
            rec.val_dsc = validation_dsc(net, val_cases, cfg);
            if (*rec.val_dsc > meta.state.best_val_dsc) {
                meta.state.best_val_dsc = *rec.val_dsc;
                meta.state.best_epoch = epoch + 1;
                improved = true;
            }
        }
        rec.seconds = seconds_since(t_epoch);

        save(result.last_checkpoint);
        if (improved) save(result.best_checkpoint);
        if (tc.checkpoint_every > 0 && (epoch + 1) % tc.checkpoint_every == 0) {
            save(out_dir / ("epoch_" + std::to_string(epoch + 1) + ".ckpt"));
        }
        std::ofstream(history_path, std::ios::app) << rec.to_json().dump() << "\n";
        step_log.flush();
        result.history.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
    }
    if (!std::filesystem::exists(result.best_checkpoint) && std::filesystem::exists(result.last_checkpoint)) {
        std::filesystem::copy_file(result.last_checkpoint, result.best_checkpoint,
                                   std::filesystem::copy_options::overwrite_existing);
    }
    result.best_val_dsc = meta.state.best_val_dsc;
    result.wall_seconds = seconds_since(t_start);
    return result;
}

}  // namespace propnet::train
