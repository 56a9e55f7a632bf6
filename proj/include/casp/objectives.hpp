#pragma once

#include <optional>
#include <span>
#include <string>

#include "casp/ops.hpp"

namespace casp {

// Raised by losses whose value is undefined for the given maps.
class DegenerateInputError : public InputError {
public:
    using InputError::InputError;
};

// ---- densification ---------------------------------------------------------

// Gaussian blur of a binary fixation map [H, W], normalized to sum 1.
// sigma <= 0 selects W / 32. The kernel is truncated at ceil(3 sigma).
Tensor<float> fixation_to_dense(const Tensor<float>& fix, double sigma = 0.0);

// ---- training losses (differentiable in `pred`) ----------------------------

inline constexpr double kPredFloor = 1e-8;

// sum den * ln(den / pred) over sum-normalized maps; pred floored first.
template <class T>
Tensor<T> loss_kl(const Tensor<T>& pred, const Tensor<T>& den);
// Negated Pearson correlation.
template <class T>
Tensor<T> loss_cc(const Tensor<T>& pred, const Tensor<T>& den);
// Histogram intersection of the sum-normalized maps.
template <class T>
Tensor<T> loss_sim(const Tensor<T>& pred, const Tensor<T>& den);

struct LossWeights {
    double lambda_cc = -0.1;
    double lambda_sim = -0.1;
    // Use the negated-correlation term inside the weighted sum as written,
    // i.e. KL + lambda_cc * loss_cc + lambda_sim * SIM.
    bool paper_literal_signs = false;
};

template <class T>
struct LossParts {
    Tensor<T> total;
    double kl = 0, cc = 0, sim = 0;  // raw KL, Pearson correlation, similarity
};

// Default: KL + lambda_cc * CC + lambda_sim * SIM with raw CC and SIM, so
// negative weights reward correlation and overlap.
template <class T>
LossParts<T> loss_total(const Tensor<T>& pred, const Tensor<T>& den, const LossWeights& w = {});

// ---- evaluation metrics (double precision) --------------------------------

struct MetricValue {
    double value = 0;
    std::optional<std::string> warning;  // set when the input was degenerate
};

// Shared similarity kernel used by both loss_sim and metric_sim.
double similarity(std::span<const double> a, std::span<const double> b);

MetricValue metric_cc(const Tensor<float>& pred, const Tensor<float>& den);
MetricValue metric_nss(const Tensor<float>& pred, const Tensor<float>& fix);
// Thresholds at the distinct fixation saliency values; ROC area by trapezoid
// through (0,0) and (1,1).
double metric_auc_judd(const Tensor<float>& pred, const Tensor<float>& fix);
double metric_sim(const Tensor<float>& pred, const Tensor<float>& den);
double metric_kl(const Tensor<float>& pred, const Tensor<float>& den);

}  // namespace casp
