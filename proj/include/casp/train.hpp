#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "casp/config.hpp"
#include "casp/model.hpp"
#include "casp/synth.hpp"

namespace casp {

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Model-ready view of a clip: the spectrogram is computed once up front.
struct Prepared {
    std::string id;
    Consistency mode = Consistency::Consistent;
    Tensor<float> clip, spec, dense, fixations;
};

std::vector<Prepared> prepare(const Dataset& data, const ModelConfig& model, double fps);

// Adaptive-moment optimizer over every tensor in a ParamStore.
class Adam {
public:
    Adam() = default;
    Adam(const AdamConfig& cfg, const ParamStore<float>& store);

    void step(ParamStore<float>& store);
    int64_t steps_taken() const { return t_; }

    const std::vector<Tensor<float>>& first_moments() const { return m_; }
    const std::vector<Tensor<float>>& second_moments() const { return v_; }
    void restore(int64_t t, std::vector<Tensor<float>> m, std::vector<Tensor<float>> v);

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor<float>> m_, v_;
};

struct StepLog {
    int64_t step = 0;
    double loss = 0, kl = 0, cc = 0, sim = 0;
};

class Trainer {
public:
    Trainer(const ModelConfig& model, const TrainConfig& train);

    // One optimizer step over the next batch; steps are numbered from 1.
    StepLog step(const std::vector<Prepared>& data);
    // Runs until `until` steps have been taken, calling `on_step` after each.
    std::vector<StepLog> run(const std::vector<Prepared>& data, int64_t until,
                             const std::function<void(const StepLog&)>& on_step = {});

    // Clip indices of the batch used by step `s` (1-based); a function of the seed only.
    std::vector<std::size_t> batch_indices(int64_t s, std::size_t n) const;

    void save(const std::filesystem::path& dir, const nlohmann::json& run_config = {}) const;
    void load(const std::filesystem::path& dir);

    int64_t steps_taken() const { return adam_.steps_taken(); }
    ParamStore<float>& params() { return *store_; }
    const CaspNet<float>& net() const { return *net_; }
    const ModelConfig& model_config() const { return model_; }

private:
    ModelConfig model_;
    TrainConfig train_;
    std::unique_ptr<ParamStore<float>> store_;
    std::unique_ptr<CaspNet<float>> net_;
    Adam adam_;
};

// Loads a model from a checkpoint directory written by Trainer::save.
struct LoadedModel {
    ModelConfig config;
    std::unique_ptr<ParamStore<float>> store;
    std::unique_ptr<CaspNet<float>> net;
    int64_t step = 0;
};
LoadedModel load_model(const std::filesystem::path& dir);

Tensor<float> predict(const CaspNet<float>& net, const Prepared& p);

struct EvalRow {
    std::string clip;
    Consistency mode = Consistency::Consistent;
    double cc = 0, nss = 0, auc = 0, sim = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<std::string> warnings;

    // Arithmetic mean over the rows, optionally restricted to one mode.
    EvalRow mean(std::optional<Consistency> mode = std::nullopt) const;
    std::string csv(const std::string& dataset) const;
};

EvalReport evaluate_maps(const std::vector<Tensor<float>>& preds, const std::vector<Prepared>& data);
EvalReport evaluate(const CaspNet<float>& net, const std::vector<Prepared>& data);

}  // namespace casp
