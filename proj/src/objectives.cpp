#include "casp/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace casp {

namespace {

template <class T>
std::vector<double> as_double(const Tensor<T>& t) {
    return std::vector<double>(t.data().begin(), t.data().end());
}

template <class T>
std::vector<Wide<T>> as_wide(const Tensor<T>& t) {
    return std::vector<Wide<T>>(t.data().begin(), t.data().end());
}

template <class W>
W total(std::span<const W> v) {
    W s = 0;
    for (W x : v) s += x;
    return s;
}

template <class T>
void require_maps(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": map shapes differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_fixations(const Tensor<float>& fix, std::size_t& n_fix) {
    n_fix = 0;
    for (float v : fix.data()) {
        if (v != 0.0f && v != 1.0f) throw InputError("fixation maps must be binary");
        n_fix += v == 1.0f;
    }
    if (n_fix == 0) throw InputError("fixation map has no fixations");
}

struct Moments {
    double mean = 0, var = 0;  // population variance
};

Moments moments(std::span<const double> v) {
    Moments m;
    m.mean = total<double>(v) / static_cast<double>(v.size());
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(v.size());
    return m;
}

}  // namespace

Tensor<float> fixation_to_dense(const Tensor<float>& fix, double sigma) {
    if (fix.rank() != 2) throw DimensionError("fixation map must be [H, W], got " + shape_str(fix.shape()));
    std::size_t n_fix = 0;
    require_fixations(fix, n_fix);
    const int64_t h = fix.dim(0), w = fix.dim(1);
    if (sigma <= 0) sigma = static_cast<double>(w) / 32.0;
    const auto radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (int64_t i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    }
    const auto src = fix.data();
    std::vector<double> rows(static_cast<std::size_t>(h * w), 0.0), out(rows.size(), 0.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t d = -radius; d <= radius; ++d) {
                const int64_t xx = x + d;
                if (xx >= 0 && xx < w) rows[y * w + x] += kernel[d + radius] * src[y * w + xx];
            }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t d = -radius; d <= radius; ++d) {
                const int64_t yy = y + d;
                if (yy >= 0 && yy < h) out[y * w + x] += kernel[d + radius] * rows[yy * w + x];
            }
    const double s = total<double>(out);
    Buffer<float> values(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) values[i] = static_cast<float>(out[i] / s);
    return Tensor<float>(fix.shape(), std::move(values));
}

template <class T>
Tensor<T> loss_kl(const Tensor<T>& pred, const Tensor<T>& den) {
    using W = Wide<T>;
    require_maps(pred, den, "KL");
    const auto q = as_wide(den), p = as_wide(pred);
    const W qs = total<W>(q), ps = total<W>(p);
    if (!(qs > 0)) throw InputError("KL: target map sums to zero");
    if (!(ps > 0)) throw InputError("KL: prediction sums to zero");

    // The floor applies to the normalized prediction, so identical maps score exactly zero.
    // A floored site keeps only the gradient of the normalizing sum.
    std::vector<char> floored(p.size());
    W value = 0, kept_mass = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const W pn = p[i] / ps, qn = q[i] / qs;
        floored[i] = pn < W(kPredFloor);
        if (!floored[i]) kept_mass += qn;
        if (qn > 0) value += qn * (std::log(qn) - std::log(floored[i] ? W(kPredFloor) : pn));
    }
    Buffer<T> out(1, static_cast<T>(value));
    return make_result<T>({1}, std::move(out), "kl", {pred},
                          [q, p, qs, ps, kept_mass, floored](std::span<const T> g, Node<T>& self) {
                              auto& in = *self.inputs[0];
                              if (!in.requires_grad) return;
                              const W g0 = static_cast<W>(g[0]);
                              for (std::size_t i = 0; i < p.size(); ++i) {
                                  W d = kept_mass / ps;
                                  if (!floored[i]) d -= q[i] / (qs * p[i]);
                                  in.accumulate_at(i, static_cast<T>(g0 * d));
                              }
                          });
}

template <class T>
Tensor<T> loss_cc(const Tensor<T>& pred, const Tensor<T>& den) {
    require_maps(pred, den, "CC");
    if (moments(as_double(pred)).var <= 0 || moments(as_double(den)).var <= 0) {
        throw DegenerateInputError("CC loss is undefined for a constant map");
    }
    const Shape ones(pred.rank(), 1);
    auto centered = [&](const Tensor<T>& x) {
        return sub(x, expand(reshape(mean_all(x), ones), x.shape()));
    };
    auto pc = centered(pred);
    auto dc = centered(den);
    auto cov = sum_all(mul(pc, dc));
    auto norm = sqrt(mul(sum_all(square(pc)), sum_all(square(dc))));
    return neg(div(cov, norm));
}

template <class W>
W similarity(std::span<const W> a, std::span<const W> b) {
    if (a.size() != b.size()) throw DimensionError("similarity: size mismatch");
    const W sa = total(a), sb = total(b);
    if (!(sa > 0) || !(sb > 0)) throw InputError("similarity: map sums to zero");
    W s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::min(a[i] / sa, b[i] / sb);
    return s;
}

template <class T>
Tensor<T> loss_sim(const Tensor<T>& pred, const Tensor<T>& den) {
    using W = Wide<T>;
    require_maps(pred, den, "SIM");
    const auto a = as_wide(pred), b = as_wide(den);
    const W value = similarity<W>(a, b);
    Buffer<T> out(1, static_cast<T>(value));
    return make_result<T>({1}, std::move(out), "similarity", {pred, den},
                          [a, b](std::span<const T> g, Node<T>& self) {
                              const W sa = total<W>(a), sb = total<W>(b);
                              // Each site contributes the smaller normalized value; ties go to the prediction.
                              W picked_a = 0, picked_b = 0;
                              std::vector<char> from_a(a.size());
                              for (std::size_t i = 0; i < a.size(); ++i) {
                                  from_a[i] = a[i] / sa <= b[i] / sb;
                                  if (from_a[i]) {
                                      picked_a += a[i];
                                  } else {
                                      picked_b += b[i];
                                  }
                              }
                              const W g0 = static_cast<W>(g[0]);
                              auto& ia = *self.inputs[0];
                              auto& ib = *self.inputs[1];
                              for (std::size_t i = 0; i < a.size(); ++i) {
                                  if (ia.requires_grad) {
                                      const W d = (from_a[i] ? W(1) / sa : W(0)) - picked_a / (sa * sa);
                                      ia.accumulate_at(i, static_cast<T>(g0 * d));
                                  }
                                  if (ib.requires_grad) {
                                      const W d = (from_a[i] ? W(0) : W(1) / sb) - picked_b / (sb * sb);
                                      ib.accumulate_at(i, static_cast<T>(g0 * d));
                                  }
                              }
                          });
}

template <class T>
LossParts<T> loss_total(const Tensor<T>& pred, const Tensor<T>& den, const LossWeights& w) {
    LossParts<T> parts;
    auto kl = loss_kl(pred, den);
    auto neg_cc = loss_cc(pred, den);
    auto sim = loss_sim(pred, den);
    parts.kl = static_cast<double>(kl.item());
    parts.cc = -static_cast<double>(neg_cc.item());
    parts.sim = static_cast<double>(sim.item());
    auto cc_term = w.paper_literal_signs ? neg_cc : neg(neg_cc);
    parts.total = add(add(kl, mul_scalar(cc_term, static_cast<T>(w.lambda_cc))),
                      mul_scalar(sim, static_cast<T>(w.lambda_sim)));
    return parts;
}

MetricValue metric_cc(const Tensor<float>& pred, const Tensor<float>& den) {
    require_maps(pred, den, "CC");
    const auto a = as_double(pred), b = as_double(den);
    const auto ma = moments(a), mb = moments(b);
    if (ma.var <= 0 || mb.var <= 0) return {0.0, "CC: constant map, correlation undefined"};
    double cov = 0;
    for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
    cov /= static_cast<double>(a.size());
    return {cov / std::sqrt(ma.var * mb.var), std::nullopt};
}

MetricValue metric_nss(const Tensor<float>& pred, const Tensor<float>& fix) {
    require_maps(pred, fix, "NSS");
    std::size_t n_fix = 0;
    require_fixations(fix, n_fix);
    const auto a = as_double(pred);
    const auto m = moments(a);
    if (m.var <= 0) return {0.0, "NSS: constant prediction"};
    const double sd = std::sqrt(m.var);
    double s = 0;
    const auto f = fix.data();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (f[i] == 1.0f) s += (a[i] - m.mean) / sd;
    return {s / static_cast<double>(n_fix), std::nullopt};
}

double metric_auc_judd(const Tensor<float>& pred, const Tensor<float>& fix) {
    require_maps(pred, fix, "AUC-Judd");
    std::size_t n_fix = 0;
    require_fixations(fix, n_fix);
    const std::size_t n = static_cast<std::size_t>(pred.size());
    if (n_fix == n) throw InputError("AUC-Judd needs at least one non-fixated pixel");
    const std::size_t n_neg = n - n_fix;
    const auto s = pred.data();
    const auto f = fix.data();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

    double area = 0, prev_tp = 0, prev_fp = 0;
    std::size_t tp = 0, fp = 0, k = 0;
    while (k < n) {
        // Consume every pixel at this saliency value.
        const float level = s[order[k]];
        bool has_fixation = false;
        while (k < n && s[order[k]] == level) {
            if (f[order[k]] == 1.0f) {
                ++tp;
                has_fixation = true;
            } else {
                ++fp;
            }
            ++k;
        }
        if (!has_fixation) continue;
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_fix);
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        area += (fpr - prev_fp) * (tpr + prev_tp) / 2.0;
        prev_tp = tpr;
        prev_fp = fpr;
    }
    area += (1.0 - prev_fp) * (1.0 + prev_tp) / 2.0;
    return area;
}

double metric_sim(const Tensor<float>& pred, const Tensor<float>& den) {
    require_maps(pred, den, "SIM");
    return similarity<double>(as_double(pred), as_double(den));
}

double metric_kl(const Tensor<float>& pred, const Tensor<float>& den) {
    NoGradGuard guard;
    return static_cast<double>(loss_kl(pred, den).item());
}

template Tensor<float> loss_kl(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> loss_kl(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> loss_kl(const Tensor<long double>&, const Tensor<long double>&);
template Tensor<float> loss_cc(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> loss_cc(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> loss_cc(const Tensor<long double>&, const Tensor<long double>&);
template Tensor<float> loss_sim(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> loss_sim(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> loss_sim(const Tensor<long double>&, const Tensor<long double>&);
template LossParts<float> loss_total(const Tensor<float>&, const Tensor<float>&, const LossWeights&);
template LossParts<double> loss_total(const Tensor<double>&, const Tensor<double>&, const LossWeights&);
template LossParts<long double> loss_total(const Tensor<long double>&, const Tensor<long double>&, const LossWeights&);

}  // namespace casp
