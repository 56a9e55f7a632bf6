#include "casp/config.hpp"

#include <fstream>
#include <set>

#include "casp/io.hpp"

namespace casp {

using nlohmann::json;

Consistency parse_consistency(const std::string& s) {
    if (s == "consistent") return Consistency::Consistent;
    if (s == "inconsistent") return Consistency::Inconsistent;
    if (s == "mixed") return Consistency::Mixed;
    throw ConfigError("unknown consistency mode '" + s + "' (expected consistent, inconsistent or mixed)");
}

std::string to_string(Consistency c) {
    switch (c) {
        case Consistency::Consistent: return "consistent";
        case Consistency::Inconsistent: return "inconsistent";
        case Consistency::Mixed: return "mixed";
    }
    return "?";
}

void SynthConfig::validate() const {
    if (clips < 1) throw ConfigError("data.clips must be >= 1");
    if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0) {
        throw ConfigError("data resolution " + std::to_string(height) + "x" + std::to_string(width) +
                          " must be a positive multiple of 32");
    }
    if (frames < 1) throw ConfigError("data.frames must be >= 1");
    if (min_blobs < 1 || max_blobs < min_blobs || max_blobs > 3) {
        throw ConfigError("data blob count range must satisfy 1 <= min_blobs <= max_blobs <= 3");
    }
    if (!(fps > 0) || !(blob_sigma > 0) || max_speed < 0 || fixations < 1 || fixation_jitter < 0 || dense_sigma < 0) {
        throw ConfigError("data: fps, blob_sigma and fixations must be positive; speeds and widths non-negative");
    }
}

void TrainConfig::validate() const {
    if (!(adam.lr >= 0)) throw ConfigError("train.lr must be >= 0");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
        throw ConfigError("train: Adam betas must lie in [0, 1) and eps must be positive");
    }
    if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

void RunConfig::apply_seed(uint64_t s) {
    seed = s;
    train_data.seed = Rng(s, "data.train").next_u64();
    val_data.seed = Rng(s, "data.val").next_u64();
    train.seed = s;
}

namespace {

// Typed access to one JSON object that remembers which keys were read.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
    }

    template <class V>
    void get(const char* key, V& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<V>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    // nullptr when the key is absent.
    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string sub(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown config key " + path_ + "." + it.key());
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Triple to_triple(const std::vector<int64_t>& v, const std::string& what) {
    if (v.size() != 3) throw ConfigError(what + " needs exactly 3 entries");
    return {v[0], v[1], v[2]};
}

void read_encoder(Section s, EncoderConfig& c) {
    std::vector<int64_t> ch(c.channels.begin(), c.channels.end()), ts(c.temporal_strides.begin(), c.temporal_strides.end());
    s.get("stem_channels", c.stem_channels);
    s.get("channels", ch);
    s.get("temporal_strides", ts);
    s.get("groups", c.groups);
    s.finish();
    if (ch.size() != 4 || ts.size() != 4) throw ConfigError("encoder channels and temporal_strides need 4 entries");
    std::copy(ch.begin(), ch.end(), c.channels.begin());
    std::copy(ts.begin(), ts.end(), c.temporal_strides.begin());
}

void read_audio(Section s, ModelConfig& m) {
    auto& f = m.frontend;
    auto& e = m.embedder;
    s.get("sample_rate", f.sample_rate);
    s.get("win_len", f.win_len);
    s.get("hop", f.hop);
    s.get("n_mels", f.n_mels);
    s.get("f_min", f.f_min);
    s.get("f_max", f.f_max);
    s.get("log_floor", f.log_floor);
    s.get("frames", f.frames);
    s.get("embed_dim", e.dim);
    s.get("conv1", e.conv1);
    s.get("conv2", e.conv2);
    s.finish();
    e.frames = f.frames;
    e.mels = f.n_mels;
}

void read_avim(Section s, ModelConfig& m) {
    std::string mode = to_string(m.attention);
    std::vector<bool> stages(m.avim_stages.begin(), m.avim_stages.end());
    s.get("mode", mode);
    s.get("stages", stages);
    s.get("bilinear_rank", m.bilinear_rank);
    s.finish();
    m.attention = parse_attention_mode(mode);
    if (stages.size() != 4) throw ConfigError("avim.stages needs 4 entries");
    std::copy(stages.begin(), stages.end(), m.avim_stages.begin());
}

void read_cpc(Section s, ModelConfig& m) {
    auto& c = m.cpc;
    std::vector<int64_t> kernel(c.kernel.begin(), c.kernel.end()), stride(c.stride.begin(), c.stride.end());
    std::string act = c.feedforward_activation == Activation::Gelu ? "gelu" : "identity";
    s.get("enabled", m.use_cpc);
    s.get("layers", c.layers);
    s.get("iterations", c.iterations);
    s.get("alpha", c.alpha);
    s.get("refresh", c.refresh);
    s.get("kernel", kernel);
    s.get("stride", stride);
    s.get("activation", act);
    s.finish();
    c.kernel = to_triple(kernel, "cpc.kernel");
    c.stride = to_triple(stride, "cpc.stride");
    if (act == "gelu") {
        c.feedforward_activation = Activation::Gelu;
    } else if (act == "identity") {
        c.feedforward_activation = Activation::Identity;
    } else {
        throw ConfigError("cpc.activation must be gelu or identity, got '" + act + "'");
    }
    if (c.layers < 2 || !(c.alpha > 0) || c.iterations < 0) {
        throw ConfigError("cpc needs layers >= 2, alpha > 0 and iterations >= 0");
    }
}

void read_decoder(Section s, DecoderConfig& d) {
    s.get("width", d.width);
    s.get("growth", d.growth);
    s.get("dense_layers", d.dense_layers);
    s.get("temporal", d.temporal);
    s.get("groups", d.groups);
    s.finish();
}

void read_model(Section s, ModelConfig& m) {
    s.get("frames", m.frames);
    s.get("height", m.height);
    s.get("width", m.width_px);
    s.get("channels", m.channels);
    s.get("use_audio", m.use_audio);
    if (auto* e = s.child("encoder")) read_encoder(Section(*e, s.sub("encoder")), m.encoder);
    if (auto* a = s.child("aspp")) {
        Section as(*a, s.sub("aspp"));
        as.get("rates", m.aspp_rates);
        as.get("branch_channels", m.aspp_branch_channels);
        as.finish();
    }
    if (auto* a = s.child("audio")) read_audio(Section(*a, s.sub("audio")), m);
    if (auto* a = s.child("avim")) read_avim(Section(*a, s.sub("avim")), m);
    if (auto* c = s.child("cpc")) read_cpc(Section(*c, s.sub("cpc")), m);
    if (auto* d = s.child("decoder")) read_decoder(Section(*d, s.sub("decoder")), m.decoder);
    s.finish();
    if (!m.use_audio) m.use_cpc = false;
    m.validate();
}

void read_synth(Section s, SynthConfig& c) {
    std::string mode = to_string(c.mode);
    s.get("clips", c.clips);
    s.get("height", c.height);
    s.get("width", c.width);
    s.get("frames", c.frames);
    s.get("min_blobs", c.min_blobs);
    s.get("max_blobs", c.max_blobs);
    s.get("mode", mode);
    s.get("fps", c.fps);
    s.get("blob_sigma", c.blob_sigma);
    s.get("max_speed", c.max_speed);
    s.get("fixations", c.fixations);
    s.get("fixation_jitter", c.fixation_jitter);
    s.get("dense_sigma", c.dense_sigma);
    s.finish();
    c.mode = parse_consistency(mode);
    c.validate();
}

void read_train(Section s, TrainConfig& t) {
    s.get("steps", t.steps);
    s.get("batch_size", t.batch_size);
    s.get("lr", t.adam.lr);
    s.get("beta1", t.adam.beta1);
    s.get("beta2", t.adam.beta2);
    s.get("eps", t.adam.eps);
    s.get("log_every", t.log_every);
    s.get("checkpoint_every", t.checkpoint_every);
    if (auto* l = s.child("loss")) {
        Section ls(*l, s.sub("loss"));
        ls.get("lambda_cc", t.loss.lambda_cc);
        ls.get("lambda_sim", t.loss.lambda_sim);
        ls.get("paper_literal_signs", t.loss.paper_literal_signs);
        ls.finish();
    }
    s.finish();
    t.validate();
}

json synth_json(const SynthConfig& c) {
    return {{"clips", c.clips},
            {"height", c.height},
            {"width", c.width},
            {"frames", c.frames},
            {"min_blobs", c.min_blobs},
            {"max_blobs", c.max_blobs},
            {"mode", to_string(c.mode)},
            {"fps", c.fps},
            {"blob_sigma", c.blob_sigma},
            {"max_speed", c.max_speed},
            {"fixations", c.fixations},
            {"fixation_jitter", c.fixation_jitter},
            {"dense_sigma", c.dense_sigma}};
}

}  // namespace

ModelConfig parse_model_config(const json& j) {
    ModelConfig m;
    read_model(Section(j, "model"), m);
    return m;
}

RunConfig parse_run_config(const json& j) {
    RunConfig c;
    // The validation split defaults to the training split's layout with fewer clips.
    Section s(j, "");
    s.get("seed", c.seed);
    if (auto* m = s.child("model")) read_model(Section(*m, "model"), c.model);
    if (auto* d = s.child("train_data")) read_synth(Section(*d, "train_data"), c.train_data);
    c.val_data = c.train_data;
    c.val_data.clips = 16;
    if (auto* d = s.child("val_data")) read_synth(Section(*d, "val_data"), c.val_data);
    if (auto* t = s.child("train")) read_train(Section(*t, "train"), c.train);
    if (auto* b = s.child("bench")) {
        Section bs(*b, "bench");
        bs.get("tokens", c.bench.tokens);
        bs.get("channels", c.bench.channels);
        bs.finish();
        for (auto l : c.bench.tokens)
            if (l < 1) throw ConfigError("bench.tokens entries must be >= 1");
        if (c.bench.channels < 1) throw ConfigError("bench.channels must be >= 1");
    }
    if (auto* w = s.child("sweep")) {
        Section ws(*w, "sweep");
        ws.get("instances", c.sweep.instances);
        ws.get("max_iterations", c.sweep.max_iterations);
        ws.get("alpha", c.sweep.alpha);
        ws.finish();
        if (c.sweep.instances < 1 || c.sweep.max_iterations < 0 || !(c.sweep.alpha > 0)) {
            throw ConfigError("sweep needs instances >= 1, max_iterations >= 0 and alpha > 0");
        }
    }
    s.finish();
    c.apply_seed(c.seed);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    json j;
    try {
        j = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

json to_json(const ModelConfig& m) {
    const auto& e = m.encoder;
    const auto& c = m.cpc;
    return {
        {"frames", m.frames},
        {"height", m.height},
        {"width", m.width_px},
        {"channels", m.channels},
        {"use_audio", m.use_audio},
        {"encoder",
         {{"stem_channels", e.stem_channels},
          {"channels", std::vector<int64_t>(e.channels.begin(), e.channels.end())},
          {"temporal_strides", std::vector<int64_t>(e.temporal_strides.begin(), e.temporal_strides.end())},
          {"groups", e.groups}}},
        {"aspp", {{"rates", m.aspp_rates}, {"branch_channels", m.aspp_branch_channels}}},
        {"audio",
         {{"sample_rate", m.frontend.sample_rate},
          {"win_len", m.frontend.win_len},
          {"hop", m.frontend.hop},
          {"n_mels", m.frontend.n_mels},
          {"f_min", m.frontend.f_min},
          {"f_max", m.frontend.f_max},
          {"log_floor", m.frontend.log_floor},
          {"frames", m.frontend.frames},
          {"embed_dim", m.embedder.dim},
          {"conv1", m.embedder.conv1},
          {"conv2", m.embedder.conv2}}},
        {"avim",
         {{"mode", to_string(m.attention)},
          {"stages", std::vector<bool>(m.avim_stages.begin(), m.avim_stages.end())},
          {"bilinear_rank", m.bilinear_rank}}},
        {"cpc",
         {{"enabled", m.use_cpc},
          {"layers", c.layers},
          {"iterations", c.iterations},
          {"alpha", c.alpha},
          {"refresh", c.refresh},
          {"kernel", std::vector<int64_t>(c.kernel.begin(), c.kernel.end())},
          {"stride", std::vector<int64_t>(c.stride.begin(), c.stride.end())},
          {"activation", c.feedforward_activation == Activation::Gelu ? "gelu" : "identity"}}},
        {"decoder",
         {{"width", m.decoder.width},
          {"growth", m.decoder.growth},
          {"dense_layers", m.decoder.dense_layers},
          {"temporal", m.decoder.temporal},
          {"groups", m.decoder.groups}}},
    };
}

json to_json(const RunConfig& c) {
    const auto& t = c.train;
    return {{"seed", c.seed},
            {"model", to_json(c.model)},
            {"train_data", synth_json(c.train_data)},
            {"val_data", synth_json(c.val_data)},
            {"train",
             {{"steps", t.steps},
              {"batch_size", t.batch_size},
              {"lr", t.adam.lr},
              {"beta1", t.adam.beta1},
              {"beta2", t.adam.beta2},
              {"eps", t.adam.eps},
              {"log_every", t.log_every},
              {"checkpoint_every", t.checkpoint_every},
              {"loss",
               {{"lambda_cc", t.loss.lambda_cc},
                {"lambda_sim", t.loss.lambda_sim},
                {"paper_literal_signs", t.loss.paper_literal_signs}}}}},
            {"bench", {{"tokens", c.bench.tokens}, {"channels", c.bench.channels}}},
            {"sweep",
             {{"instances", c.sweep.instances},
              {"max_iterations", c.sweep.max_iterations},
              {"alpha", c.sweep.alpha}}}};
}

std::string config_hash(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(Rng::hash(j.dump())));
    return buf;
}

}  // namespace casp
