#include "casp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "casp/objectives.hpp"

namespace casp {

using nlohmann::json;

std::vector<Prepared> prepare(const Dataset& data, const ModelConfig& model, double fps) {
    std::vector<Prepared> out;
    out.reserve(data.size());
    const Shape want{3, model.frames, model.height, model.width_px};
    for (const auto& s : data) {
        if (s.clip.shape() != want) {
            throw DimensionError("clip " + s.id + " has shape " + shape_str(s.clip.shape()) + " but the model expects " +
                                 shape_str(want));
        }
        Prepared p;
        p.id = s.id;
        p.mode = s.mode;
        p.clip = s.clip;
        p.dense = s.dense;
        p.fixations = s.fixations;
        p.spec = audio::spectrogram(audio::crop_align(s.audio, model.frames, fps), model.frontend);
        out.push_back(std::move(p));
    }
    return out;
}

Adam::Adam(const AdamConfig& cfg, const ParamStore<float>& store) : cfg_(cfg) {
    for (const auto& [name, t] : store.items()) {
        m_.push_back(Tensor<float>::zeros(t.shape()));
        v_.push_back(Tensor<float>::zeros(t.shape()));
    }
}

void Adam::step(ParamStore<float>& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto& items = store.items();
    for (std::size_t k = 0; k < items.size(); ++k) {
        auto& p = items[k].second;
        if (!p.has_grad()) continue;
        auto g = p.grad();
        auto w = p.mutable_data();
        auto m = m_[k].mutable_data();
        auto v = v_[k].mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi);
            v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi);
            const double mhat = m[i] / c1, vhat = v[i] / c2;
            w[i] = static_cast<float>(w[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

void Adam::restore(int64_t t, std::vector<Tensor<float>> m, std::vector<Tensor<float>> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw InputError("optimizer state does not match the model");
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (m[k].shape() != m_[k].shape() || v[k].shape() != v_[k].shape()) {
            throw InputError("optimizer state shape mismatch for parameter #" + std::to_string(k));
        }
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train) : model_(model), train_(train) {
    train_.validate();
    store_ = std::make_unique<ParamStore<float>>(Rng(train.seed, "init").next_u64());
    net_ = std::make_unique<CaspNet<float>>(*store_, model_);
    for (auto& [name, t] : store_->items()) t.set_requires_grad(true);
    adam_ = Adam(train_.adam, *store_);
}

std::vector<std::size_t> Trainer::batch_indices(int64_t s, std::size_t n) const {
    // Sample k of the run lives in epoch k / n at position k % n of that epoch's shuffle.
    std::vector<std::size_t> out;
    int64_t cached_epoch = -1;
    std::vector<std::size_t> perm(n);
    for (int64_t j = 0; j < train_.batch_size; ++j) {
        const auto k = static_cast<uint64_t>((s - 1) * train_.batch_size + j);
        const auto epoch = static_cast<int64_t>(k / n);
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(train_.seed, "shuffle/" + std::to_string(epoch));
            for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
            cached_epoch = epoch;
        }
        out.push_back(perm[k % n]);
    }
    return out;
}

StepLog Trainer::step(const std::vector<Prepared>& data) {
    if (data.empty()) throw InputError("training needs a nonempty dataset");
    StepLog log;
    log.step = adam_.steps_taken() + 1;
    store_->zero_grad();
    const auto batch = batch_indices(log.step, data.size());
    const float share = 1.0f / static_cast<float>(batch.size());
    for (auto idx : batch) {
        const auto& p = data[idx];
        auto map = (*net_)(p.clip, p.spec);
        const auto diverged = [&](const std::string& what) {
            std::ostringstream msg;
            msg << "training diverged at step " << log.step << ": " << what << " on clip " << p.id;
            return TrainingDiverged(msg.str());
        };
        for (float v : map.data())
            if (!std::isfinite(v)) throw diverged("prediction is not finite");
        auto parts = loss_total(map, p.dense, train_.loss);
        const double value = parts.total.item();
        if (!std::isfinite(value)) {
            std::ostringstream what;
            what << "loss is " << value;
            throw diverged(what.str());
        }
        backward(mul_scalar(parts.total, share));
        log.loss += value / static_cast<double>(batch.size());
        log.kl += parts.kl / static_cast<double>(batch.size());
        log.cc += parts.cc / static_cast<double>(batch.size());
        log.sim += parts.sim / static_cast<double>(batch.size());
    }
    adam_.step(*store_);
    return log;
}

std::vector<StepLog> Trainer::run(const std::vector<Prepared>& data, int64_t until,
                                  const std::function<void(const StepLog&)>& on_step) {
    std::vector<StepLog> logs;
    while (adam_.steps_taken() < until) {
        logs.push_back(step(data));
        if (on_step) on_step(logs.back());
    }
    return logs;
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
    const auto text = j.dump(2) + "\n";
    write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

json read_json(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void load_params(const std::filesystem::path& dir, ParamStore<float>& store) {
    for (auto& [name, t] : store.items()) {
        const auto loaded = read_cspt(dir / (name + ".cspt"));
        if (loaded.shape() != t.shape()) {
            throw InputError("checkpoint tensor " + name + " has shape " + shape_str(loaded.shape()) +
                             ", model expects " + shape_str(t.shape()));
        }
        std::copy(loaded.data().begin(), loaded.data().end(), t.mutable_data().begin());
    }
}

}  // namespace

void Trainer::save(const std::filesystem::path& dir, const json& run_config) const {
    std::filesystem::create_directories(dir / "params");
    std::filesystem::create_directories(dir / "adam");
    const auto& items = store_->items();
    for (std::size_t k = 0; k < items.size(); ++k) {
        write_cspt(dir / "params" / (items[k].first + ".cspt"), items[k].second);
        write_cspt(dir / "adam" / (items[k].first + ".m.cspt"), adam_.first_moments()[k]);
        write_cspt(dir / "adam" / (items[k].first + ".v.cspt"), adam_.second_moments()[k]);
    }
    const auto model_json = to_json(model_);
    const auto n = static_cast<int64_t>(steps_taken() * train_.batch_size);
    json manifest{{"step", steps_taken()},
                  {"config_hash", config_hash(model_json)},
                  {"model", model_json},
                  {"train_seed", train_.seed},
                  {"rng",
                   {{"generator", "splitmix64-counter"},
                    {"seed", train_.seed},
                    {"stream", "shuffle/<epoch>"},
                    {"samples_drawn", n}}},
                  {"parameters", store_->parameter_count()}};
    if (!run_config.is_null()) manifest["run_config"] = run_config;
    write_json(dir / "manifest.json", manifest);
}

void Trainer::load(const std::filesystem::path& dir) {
    const auto manifest = read_json(dir / "manifest.json");
    if (manifest.value("config_hash", std::string{}) != config_hash(to_json(model_))) {
        throw InputError("checkpoint " + dir.string() + " was written for a different model configuration");
    }
    load_params(dir / "params", *store_);
    std::vector<Tensor<float>> m, v;
    for (const auto& [name, t] : store_->items()) {
        m.push_back(read_cspt(dir / "adam" / (name + ".m.cspt")));
        v.push_back(read_cspt(dir / "adam" / (name + ".v.cspt")));
    }
    adam_.restore(manifest.at("step").get<int64_t>(), std::move(m), std::move(v));
}

LoadedModel load_model(const std::filesystem::path& dir) {
    const auto manifest = read_json(dir / "manifest.json");
    LoadedModel out;
    try {
        out.config = parse_model_config(manifest.at("model"));
        out.step = manifest.at("step").get<int64_t>();
    } catch (const json::exception& e) {
        throw InputError(dir.string() + ": malformed checkpoint manifest: " + e.what());
    }
    out.store = std::make_unique<ParamStore<float>>(0);
    out.net = std::make_unique<CaspNet<float>>(*out.store, out.config);
    load_params(dir / "params", *out.store);
    return out;
}

Tensor<float> predict(const CaspNet<float>& net, const Prepared& p) {
    NoGradGuard guard;
    return net(p.clip, p.spec);
}

EvalRow EvalReport::mean(std::optional<Consistency> mode) const {
    EvalRow m;
    m.clip = "mean";
    double n = 0;
    for (const auto& r : rows) {
        if (mode && r.mode != *mode) continue;
        m.cc += r.cc;
        m.nss += r.nss;
        m.auc += r.auc;
        m.sim += r.sim;
        n += 1;
    }
    if (n > 0) {
        m.cc /= n;
        m.nss /= n;
        m.auc /= n;
        m.sim /= n;
    }
    if (mode) m.mode = *mode;
    return m;
}

std::string EvalReport::csv(const std::string& dataset) const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    out << "dataset,clip,mode,CC,NSS,AUC-J,SIM\n";
    auto row = [&](const EvalRow& r, const std::string& mode) {
        out << dataset << ',' << r.clip << ',' << mode << ',' << r.cc << ',' << r.nss << ',' << r.auc << ',' << r.sim
            << '\n';
    };
    bool has[2] = {false, false};
    for (const auto& r : rows) {
        row(r, to_string(r.mode));
        has[r.mode == Consistency::Inconsistent] = true;
    }
    row(mean(), "all");
    if (has[0] && has[1]) {
        auto c = mean(Consistency::Consistent), i = mean(Consistency::Inconsistent);
        row(c, "consistent");
        row(i, "inconsistent");
    }
    return out.str();
}

EvalReport evaluate_maps(const std::vector<Tensor<float>>& preds, const std::vector<Prepared>& data) {
    if (preds.size() != data.size()) throw InputError("prediction count does not match the dataset");
    EvalReport report;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& p = data[i];
        if (preds[i].shape() != p.dense.shape()) {
            throw DimensionError("prediction for " + p.id + " has shape " + shape_str(preds[i].shape()) +
                                 ", ground truth is " + shape_str(p.dense.shape()));
        }
        EvalRow r;
        r.clip = p.id;
        r.mode = p.mode;
        auto cc = metric_cc(preds[i], p.dense);
        auto nss = metric_nss(preds[i], p.fixations);
        r.cc = cc.value;
        r.nss = nss.value;
        r.auc = metric_auc_judd(preds[i], p.fixations);
        r.sim = metric_sim(preds[i], p.dense);
        for (const auto* w : {&cc.warning, &nss.warning})
            if (*w) report.warnings.push_back(p.id + ": " + **w);
        report.rows.push_back(r);
    }
    return report;
}

EvalReport evaluate(const CaspNet<float>& net, const std::vector<Prepared>& data) {
    std::vector<Tensor<float>> preds;
    preds.reserve(data.size());
    for (const auto& p : data) preds.push_back(predict(net, p));
    return evaluate_maps(preds, data);
}

}  // namespace casp
