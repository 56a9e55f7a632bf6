#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casp/model.hpp"
#include "casp/objectives.hpp"

namespace casp {

enum class Consistency { Consistent, Inconsistent, Mixed };

Consistency parse_consistency(const std::string& s);
std::string to_string(Consistency c);

struct SynthConfig {
    int64_t clips = 16;
    int64_t height = 64;
    int64_t width = 96;
    int64_t frames = 16;
    int64_t min_blobs = 1;
    int64_t max_blobs = 3;
    Consistency mode = Consistency::Consistent;
    double fps = 16.0;
    double blob_sigma = 4.0;      // pixels
    double max_speed = 1.0;       // pixels per frame
    int64_t fixations = 24;       // gaze samples per clip
    double fixation_jitter = 1.5; // pixels
    double dense_sigma = 0.0;     // 0: width / 32
    uint64_t seed = 0;

    void validate() const;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int64_t steps = 500;
    int64_t batch_size = 4;
    AdamConfig adam;
    LossWeights loss;
    int64_t log_every = 10;
    int64_t checkpoint_every = 0;  // 0: only at the end
    uint64_t seed = 0;

    void validate() const;
};

struct BenchConfig {
    std::vector<int64_t> tokens{64, 128, 256, 512, 1024};
    int64_t channels = 32;
};

struct SweepConfig {
    int64_t instances = 20;
    int64_t max_iterations = 6;
    double alpha = 0.01;
};

// Everything one CLI invocation can be configured with.
struct RunConfig {
    uint64_t seed = 0;
    ModelConfig model;
    SynthConfig train_data;
    SynthConfig val_data;
    TrainConfig train;
    BenchConfig bench;
    SweepConfig sweep;

    // Propagates the global seed into every sub-config.
    void apply_seed(uint64_t s);
};

// Parsing rejects unknown keys so typos surface as ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const ModelConfig& c);
ModelConfig parse_model_config(const nlohmann::json& j);

// FNV-1a of the canonical JSON dump; used to match checkpoints to configs.
std::string config_hash(const nlohmann::json& j);

}  // namespace casp
