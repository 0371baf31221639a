#include "propnet/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace propnet::checkpoint {

namespace {

constexpr const char* kMagic = "propnet-ckpt-v1\n";

enum class DType : uint8_t { f32 = 1, f64 = 2, i64 = 3 };

DType dtype_of(const torch::Tensor& t) {
    switch (t.scalar_type()) {
        case torch::kFloat32:
            return DType::f32;
        case torch::kFloat64:
            return DType::f64;
        case torch::kInt64:
            return DType::i64;
        default:
            throw CheckpointError("checkpoint: unsupported tensor dtype " + std::string(c10::toString(t.scalar_type())));
    }
}

torch::ScalarType scalar_of(DType d) {
    switch (d) {
        case DType::f32:
            return torch::kFloat32;
        case DType::f64:
            return torch::kFloat64;
        case DType::i64:
            return torch::kInt64;
    }
    throw CheckpointError("checkpoint: bad dtype code");
}

template <typename T>
void put(std::string& out, T v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_tensor(std::string& out, const std::string& name, const torch::Tensor& t0) {
    auto t = t0.detach().contiguous().cpu();
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put<uint8_t>(out, static_cast<uint8_t>(dtype_of(t)));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<int64_t>(out, d);
    const auto nbytes = static_cast<uint64_t>(t.numel() * t.element_size());
    put<uint64_t>(out, nbytes);
    out.append(static_cast<const char*>(t.data_ptr()), nbytes);
}

class Reader {
public:
    explicit Reader(std::string data) : buf_(std::move(data)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    [[nodiscard]] bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
    }
    std::string buf_;
    std::size_t pos_ = 0;
};

nlohmann::json meta_json(const Checkpoint& m) {
    return {{"config", m.config},
            {"fingerprint", m.fingerprint},
            {"rng_state", m.rng_state},
            {"state",
             {{"best_epoch", m.state.best_epoch},
              {"best_val_dsc", m.state.best_val_dsc},
              {"epoch", m.state.epoch},
              {"global_step", m.state.global_step}}}};
}

Checkpoint meta_from(const nlohmann::json& j) {
    Checkpoint m;
    try {
        m.config = j.at("config");
        m.fingerprint = j.at("fingerprint").get<std::string>();
        m.rng_state = j.at("rng_state").get<std::string>();
        const auto& s = j.at("state");
        m.state.best_epoch = s.at("best_epoch").get<int64_t>();
        m.state.best_val_dsc = s.at("best_val_dsc").get<double>();
        m.state.epoch = s.at("epoch").get<int64_t>();
        m.state.global_step = s.at("global_step").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed metadata: ") + e.what());
    }
    return m;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Reader open_reader(const std::filesystem::path& path, Checkpoint& meta) {
    Reader r(read_file(path));
    if (r.bytes(std::strlen(kMagic)) != kMagic) throw CheckpointError("checkpoint: bad header in " + path.string() + " (expected 'propnet-ckpt-v1')");
    const auto len = r.get<uint64_t>();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(r.bytes(len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: metadata is not JSON: ") + e.what());
    }
    meta = meta_from(j);
    return r;
}

// Adam state entries keyed by parameter name, in the order of named_parameters().
using AdamState = torch::optim::AdamParamState;

AdamState* adam_state(const torch::optim::Adam& optim, const torch::Tensor& p) {
    auto& st = const_cast<torch::optim::Adam&>(optim).state();
    auto it = st.find(p.unsafeGetTensorImpl());
    if (it == st.end()) return nullptr;
    return static_cast<AdamState*>(it->second.get());
}

}  // namespace

void save(const std::filesystem::path& path, const model::PropNet& net, const torch::optim::Adam* optim,
          const Checkpoint& meta) {
    std::string out = kMagic;
    const std::string js = meta_json(meta).dump();
    put<uint64_t>(out, js.size());
    out += js;
    for (const auto& kv : net->named_parameters()) put_tensor(out, "param/" + kv.key(), kv.value());
    for (const auto& kv : net->named_buffers()) put_tensor(out, "buffer/" + kv.key(), kv.value());
    if (optim != nullptr) {
        for (const auto& kv : net->named_parameters()) {
            const auto* st = adam_state(*optim, kv.value());
            if (st == nullptr) continue;
            const std::string base = "optim/" + kv.key() + "/";
            put_tensor(out, base + "step", torch::tensor({st->step()}, torch::kInt64));
            put_tensor(out, base + "exp_avg", st->exp_avg());
            put_tensor(out, base + "exp_avg_sq", st->exp_avg_sq());
        }
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw CheckpointError("checkpoint: cannot write " + tmp.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw CheckpointError("checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_meta(const std::filesystem::path& path) {
    Checkpoint meta;
    (void)open_reader(path, meta);
    return meta;
}

Checkpoint load(const std::filesystem::path& path, model::PropNet& net, torch::optim::Adam* optim) {
    Checkpoint meta;
    Reader r = open_reader(path, meta);
    std::map<std::string, torch::Tensor> tensors;
    while (!r.done()) {
        const auto nlen = r.get<uint32_t>();
        std::string name = r.bytes(nlen);
        const auto dt = static_cast<DType>(r.get<uint8_t>());
        const auto ndim = r.get<uint32_t>();
        std::vector<int64_t> dims(ndim);
        for (auto& d : dims) d = r.get<int64_t>();
        const auto nbytes = r.get<uint64_t>();
        auto t = torch::empty(dims, scalar_of(dt));
        if (static_cast<uint64_t>(t.numel() * t.element_size()) != nbytes) {
            throw CheckpointError("checkpoint: size mismatch for tensor " + name);
        }
        const std::string raw = r.bytes(nbytes);
        std::memcpy(t.data_ptr(), raw.data(), nbytes);
        tensors.emplace(std::move(name), std::move(t));
    }

    auto expect = [&](const std::string& key, const torch::Tensor& like) -> const torch::Tensor& {
        auto it = tensors.find(key);
        if (it == tensors.end()) throw CheckpointError("checkpoint: missing tensor " + key);
        if (it->second.sizes() != like.sizes()) {
            throw CheckpointError("checkpoint: shape mismatch for " + key + " (architecture differs)");
        }
        return it->second;
    };
    auto params = net->named_parameters();
    auto buffers = net->named_buffers();
    for (const auto& kv : params) (void)expect("param/" + kv.key(), kv.value());
    for (const auto& kv : buffers) (void)expect("buffer/" + kv.key(), kv.value());
    const std::size_t expected = params.size() + buffers.size();
    std::size_t model_records = 0;
    for (const auto& kv : tensors) {
        if (kv.first.rfind("optim/", 0) != 0) ++model_records;
    }
    if (model_records != expected) throw CheckpointError("checkpoint: unexpected tensors (architecture differs)");
    if (optim != nullptr) {
        for (const auto& kv : params) {
            const std::string base = "optim/" + kv.key() + "/";
            if (!tensors.contains(base + "step")) continue;
            (void)expect(base + "exp_avg", kv.value());
            (void)expect(base + "exp_avg_sq", kv.value());
        }
    }

    // Everything validated; now mutate.
    torch::NoGradGuard guard;
    for (auto& kv : params) kv.value().copy_(tensors.at("param/" + kv.key()));
    for (auto& kv : buffers) kv.value().copy_(tensors.at("buffer/" + kv.key()));
    if (optim != nullptr) {
        auto& st = optim->state();
        st.clear();
        auto& group_opts = static_cast<torch::optim::AdamOptions&>(optim->param_groups().front().options());
        for (auto& kv : params) {
            const std::string base = "optim/" + kv.key() + "/";
            auto it = tensors.find(base + "step");
            if (it == tensors.end()) continue;
            auto s = std::make_unique<AdamState>();
            s->step(it->second.item<int64_t>());
            s->exp_avg(tensors.at(base + "exp_avg").clone());
            s->exp_avg_sq(tensors.at(base + "exp_avg_sq").clone());
            if (group_opts.amsgrad()) s->max_exp_avg_sq(torch::zeros_like(kv.value()));
            st[kv.value().unsafeGetTensorImpl()] = std::move(s);
        }
    }
    return meta;
}

}  // namespace propnet::checkpoint
