#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "casp/objectives.hpp"
#include "support/testing.hpp"

using namespace casp;
using casp::testing::auc_bruteforce;
using casp::testing::grad_check;
using casp::testing::random_fixations;
using casp::testing::random_tensor;

namespace {

Tensor<float> map_from(const Shape& s, std::vector<float> v) { return Tensor<float>(s, Buffer<float>(v.begin(), v.end())); }

}  // namespace

TEST(FixationToDense, SingleFixationBump) {
    Buffer<float> v(15 * 15, 0.0f);
    v[7 * 15 + 7] = 1.0f;
    Tensor<float> fix({15, 15}, std::move(v));
    auto d = fixation_to_dense(fix, 2.0);
    double s = 0;
    for (auto x : d.data()) s += x;
    EXPECT_NEAR(s, 1.0, 1e-6);
    EXPECT_EQ(std::max_element(d.data().begin(), d.data().end()) - d.data().begin(), 7 * 15 + 7);
    EXPECT_NEAR(d[7 * 15 + 6], d[7 * 15 + 8], 1e-9);
    EXPECT_NEAR(d[6 * 15 + 7], d[7 * 15 + 6], 1e-9);

    auto sharp = fixation_to_dense(fix, 1e-3);
    EXPECT_NEAR(sharp[7 * 15 + 7], 1.0, 1e-6);
    EXPECT_THROW(fixation_to_dense(Tensor<float>::zeros({4, 4})), InputError);
}

TEST(FixationToDense, TwoFixationsMatchDirectConvolution) {
    const int64_t H = 12, W = 16;
    const double sigma = 1.5;
    Buffer<float> v(H * W, 0.0f);
    v[3 * W + 4] = v[8 * W + 11] = 1.0f;
    Tensor<float> fix({H, W}, std::move(v));
    auto d = fixation_to_dense(fix, sigma);
    const int r = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> ref(H * W, 0.0);
    double total = 0;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int64_t yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    ref[y * W + x] += fix[yy * W + xx] * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                }
            total += ref[y * W + x];
        }
    for (int64_t i = 0; i < H * W; ++i) EXPECT_NEAR(d[i], ref[i] / total, 1e-7);
}

TEST(LossKl, ClosedFormsAndGibbs) {
    auto p = map_from({2}, {1, 0}), q = map_from({2}, {0.5, 0.5});
    EXPECT_NEAR(loss_kl(q, p).item(), std::log(2.0), 1e-6);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        auto a = random_tensor<float>({5, 5}, rng, 0.01, 1), b = random_tensor<float>({5, 5}, rng, 0, 1);
        EXPECT_GE(loss_kl(a, b).item(), -1e-6);
        EXPECT_NEAR(loss_kl(a, a).item(), 0.0, 1e-6);
    }
    EXPECT_THROW(loss_kl(q, Tensor<float>::zeros({2})), InputError);
}

TEST(LossKl, SparseMapAgainstItselfIsZero) {
    // A blurred fixation map is exactly zero over most of a large frame.
    auto fix = Tensor<float>::zeros({64, 96});
    fix.mutable_data()[32 * 96 + 40] = 1.0f;
    const auto den = fixation_to_dense(fix, 3.0);
    EXPECT_NEAR(loss_kl(den, den).item(), 0.0, 1e-7);
    // A site below the floor keeps only the gradient of the normalizing sum.
    auto pred = Tensor<double>::from({3}, {1.0, 1e-12, 1.0});
    pred.set_requires_grad(true);
    backward(loss_kl(pred, Tensor<double>::from({3}, {0.5, 0.0, 0.5})));
    EXPECT_NEAR(pred.grad_tensor()[1], 1.0 / (2.0 + 1e-12), 1e-9);
    EXPECT_NEAR(pred.grad_tensor()[0], 1.0 / (2.0 + 1e-12) - 0.5, 1e-9);
}

TEST(LossCc, Cases) {
    Rng rng(2);
    auto s = random_tensor<float>({4, 4}, rng, 0, 1);
    EXPECT_NEAR(loss_cc(s, s).item(), -1.0, 1e-6);
    EXPECT_NEAR(loss_cc(add_scalar(mul_scalar(s, 3.0f), 0.5f), s).item(), -1.0, 1e-6);
    auto pred = map_from({2, 2}, {0, 1, 0, 1}), den = map_from({2, 2}, {1, 0, 1, 0});
    EXPECT_NEAR(loss_cc(pred, den).item(), 1.0, 1e-6);
    EXPECT_THROW(loss_cc(Tensor<float>::full({2, 2}, 0.3f), den), DegenerateInputError);
}

TEST(LossSim, CasesAndSharedImplementation) {
    auto a = map_from({2}, {0.5, 0.5}), b = map_from({2}, {1, 0});
    EXPECT_NEAR(loss_sim(a, b).item(), 0.5, 1e-7);
    EXPECT_NEAR(loss_sim(b, b).item(), 1.0, 1e-7);
    EXPECT_EQ(loss_sim(map_from({2}, {0, 1}), b).item(), 0.0f);
    EXPECT_THROW(loss_sim(a, Tensor<float>::zeros({2})), InputError);
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        auto p = random_tensor<float>({6, 6}, rng, 0, 1), q = random_tensor<float>({6, 6}, rng, 0, 1);
        EXPECT_EQ(static_cast<double>(loss_sim(p, q).item()), static_cast<double>(static_cast<float>(metric_sim(p, q))));
        EXPECT_EQ(metric_sim(p, q), metric_sim(q, p));
    }
}

TEST(LossTotal, PerfectPredictionAndWeights) {
    Rng rng(4);
    auto den = random_tensor<float>({8, 8}, rng, 0.01, 1);
    auto parts = loss_total(den, den);
    EXPECT_NEAR(parts.kl, 0.0, 1e-6);
    EXPECT_NEAR(parts.cc, 1.0, 1e-6);
    EXPECT_NEAR(parts.sim, 1.0, 1e-6);
    EXPECT_NEAR(parts.total.item(), -0.2, 1e-6);

    auto pred = random_tensor<float>({8, 8}, rng, 0.01, 1);
    LossWeights none{0.0, 0.0, false};
    EXPECT_FLOAT_EQ(loss_total(pred, den, none).total.item(), loss_kl(pred, den).item());

    LossWeights literal;
    literal.paper_literal_signs = true;
    EXPECT_NEAR(loss_total(den, den, literal).total.item(), 0.0, 1e-6);
}

TEST(LossTotal, GradientCheck) {
    Rng rng(5);
    auto pred = random_tensor<double>({6, 6}, rng, 0.05, 1);
    auto den = random_tensor<double>({6, 6}, rng, 0, 1);
    pred.set_requires_grad(true);
    for (bool literal : {false, true}) {
        LossWeights w;
        w.paper_literal_signs = literal;
        auto r = grad_check([&] { return loss_total(pred, den, w).total; }, {pred}, 1e-6);
        EXPECT_LT(r.max_rel_error, 1e-3);
    }
    auto r = grad_check([&] { return loss_sim(pred, den); }, {pred}, 1e-6);
    EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(MetricCc, IdentitiesAndAffineInvariance) {
    Rng rng(6);
    auto s = random_tensor<float>({5, 5}, rng);
    EXPECT_NEAR(metric_cc(s, s).value, 1.0, 1e-9);
    EXPECT_NEAR(metric_cc(s, add_scalar(neg(s), 2.0f)).value, -1.0, 1e-6);
    // Hand instance via the covariance formula.
    auto a = map_from({4}, {1, 2, 3, 5}), b = map_from({4}, {2, 1, 4, 4});
    const double ma = 2.75, mb = 2.75;
    double cov = 0, va = 0, vb = 0;
    for (int i = 0; i < 4; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    EXPECT_NEAR(metric_cc(a, b).value, cov / std::sqrt(va * vb), 1e-12);
    auto constant = metric_cc(Tensor<float>::full({4}, 1.0f), b);
    EXPECT_EQ(constant.value, 0.0);
    EXPECT_TRUE(constant.warning.has_value());
    for (int i = 0; i < 200; ++i) {
        auto p = random_tensor<float>({4, 4}, rng), q = random_tensor<float>({4, 4}, rng);
        const float k = static_cast<float>(rng.uniform(0.1, 5)), c = static_cast<float>(rng.uniform(-3, 3));
        EXPECT_NEAR(metric_cc(add_scalar(mul_scalar(p, k), c), q).value, metric_cc(p, q).value, 1e-5);
    }
}

TEST(MetricNss, Cases) {
    auto s = map_from({4}, {0, 0, 0, 1}), fix = map_from({4}, {0, 0, 0, 1});
    EXPECT_NEAR(metric_nss(s, fix).value, 0.75 / std::sqrt(0.1875), 1e-9);
    EXPECT_NEAR(metric_nss(s, fix).value, 1.7320508, 1e-6);
    Rng rng(7);
    auto r = random_tensor<float>({4, 4}, rng);
    EXPECT_NEAR(metric_nss(r, Tensor<float>::full({4, 4}, 1.0f)).value, 0.0, 1e-9);
    auto f = random_fixations(rng, {4, 4}, 0.3);
    EXPECT_NEAR(metric_nss(add_scalar(mul_scalar(r, 2.5f), -1.0f), f).value, metric_nss(r, f).value, 1e-5);
    auto flat = metric_nss(Tensor<float>::full({4, 4}, 0.2f), f);
    EXPECT_EQ(flat.value, 0.0);
    EXPECT_TRUE(flat.warning.has_value());
    EXPECT_THROW(metric_nss(r, Tensor<float>::zeros({4, 4})), InputError);
}

TEST(MetricAucJudd, CasesAndBruteForce) {
    auto fix = map_from({2, 2}, {1, 0, 0, 1});
    EXPECT_DOUBLE_EQ(metric_auc_judd(map_from({2, 2}, {0.9f, 0.1f, 0.2f, 0.8f}), fix), 1.0);
    EXPECT_DOUBLE_EQ(metric_auc_judd(Tensor<float>::full({2, 2}, 0.5f), fix), 0.5);
    EXPECT_THROW(metric_auc_judd(Tensor<float>::full({2, 2}, 0.5f), Tensor<float>::full({2, 2}, 1.0f)), InputError);
    EXPECT_THROW(metric_auc_judd(Tensor<float>::full({2, 2}, 0.5f), Tensor<float>::zeros({2, 2})), InputError);

    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        Buffer<float> v(64);
        const int levels = 2 + static_cast<int>(rng.below(63));
        for (auto& x : v) x = static_cast<float>(rng.below(static_cast<uint64_t>(levels))) / static_cast<float>(levels);
        Tensor<float> s({8, 8}, std::move(v));
        auto f = random_fixations(rng, {8, 8}, 0.2);
        const double auc = metric_auc_judd(s, f);
        EXPECT_EQ(auc, auc_bruteforce(s, f));
        EXPECT_GE(auc, 0.0);
        EXPECT_LE(auc, 1.0);
        // Strictly monotone transform leaves the ranking and the area unchanged.
        EXPECT_EQ(metric_auc_judd(exp(mul_scalar(s, 3.0f)), f), auc);
    }
}

TEST(Metrics, RandomPairRanges) {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        auto p = random_tensor<float>({4, 4}, rng, 0, 1), q = random_tensor<float>({4, 4}, rng, 0, 1);
        const double sim = metric_sim(p, q);
        EXPECT_GE(sim, 0.0);
        EXPECT_LE(sim, 1.0 + 1e-12);
        EXPECT_GE(metric_kl(p, q), -1e-6);
        const double cc = metric_cc(p, q).value;
        EXPECT_LE(std::abs(cc), 1.0 + 1e-12);
    }
}
