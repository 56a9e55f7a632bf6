#pragma once

#include <string>
#include <vector>

#include "casp/config.hpp"

namespace casp {

struct BenchRow {
    std::string mode;  // quadratic | linear
    int64_t tokens = 0;
    int64_t channels = 0;
    int64_t multiply_adds = 0;
    int64_t peak_words = 0;     // transient words above the inputs
    int64_t largest_alloc = 0;  // words
    double seconds = 0;
    double rel_diff = 0;  // linear rows: relative inf-norm gap to the explicit kernel path
};

struct BenchResult {
    std::vector<BenchRow> rows;
    double slope_quadratic = 0;
    double slope_linear = 0;
    double max_rel_diff = 0;
    bool linear_avoids_square = true;  // no linear-mode allocation reached L*L words

    std::string csv() const;
};

BenchResult bench_attention(const std::vector<int64_t>& tokens, int64_t channels, uint64_t seed);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct SweepResult {
    // traces[i][n]: total CPC prediction error of instance i after n iterations.
    std::vector<std::vector<double>> traces;
    int64_t nonincreasing = 0;  // instances whose trace never rises

    std::string csv() const;
};

// Random CPC instances at the model's deepest-stage extent.
SweepResult cpc_sweep(const ModelConfig& model, const SweepConfig& sweep, uint64_t seed);

}  // namespace casp
