#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "casp/ops.hpp"
#include "support/testing.hpp"

using namespace casp;
using casp::testing::grad_check;
using casp::testing::naive_conv3d;
using casp::testing::random_param;
using casp::testing::random_tensor;
using casp::testing::weighted_sum;

namespace {

double normal_cdf_by_quadrature(double x) {
    // Composite Simpson on the density from -12 to x.
    const int n = 20000;
    const double a = -12.0, h = (x - a) / n;
    auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
    double s = pdf(a) + pdf(x);
    for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

TEST(Tensor, ShapeInvariant) {
    EXPECT_THROW(Tensor<float>({2, 3}, {1.0f, 2.0f}), DimensionError);
    EXPECT_THROW(Tensor<float>::zeros({2, 0}), DimensionError);
    auto t = Tensor<float>::zeros({2, 3});
    EXPECT_EQ(t.size(), 6);
    EXPECT_FALSE(t.has_grad());
}

TEST(Matmul, IdentityAndHandCase) {
    Tensor<float> eye({2, 2}, {1, 0, 0, 1});
    Tensor<float> x({2, 2}, {3, -1, 2, 5});
    auto y = matmul(eye, x);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(y[i], x[i]);

    Tensor<float> a({2, 2}, {1, 2, 3, 4});
    Tensor<float> b({2, 2}, {5, 6, 7, 8});
    auto c = matmul(a, b);
    EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()), (std::vector<float>{19, 22, 43, 50}));
}

TEST(Matmul, AssociativityOnRandomCubes) {
    Rng rng(1, "assoc");
    auto a = random_tensor<float>({8, 8}, rng), b = random_tensor<float>({8, 8}, rng),
         c = random_tensor<float>({8, 8}, rng);
    auto left = matmul(a, matmul(b, c));
    auto right = matmul(matmul(a, b), c);
    // Brute-force triple product in double.
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            double s = 0;
            for (int k = 0; k < 8; ++k)
                for (int l = 0; l < 8; ++l) s += double(a[i * 8 + k]) * b[k * 8 + l] * c[l * 8 + j];
            EXPECT_NEAR(left[i * 8 + j], s, 1e-5 * std::max(1.0, std::abs(s)));
            EXPECT_NEAR(right[i * 8 + j], s, 1e-5 * std::max(1.0, std::abs(s)));
        }
}

TEST(Matmul, BatchBroadcastAndErrors) {
    Rng rng(2);
    auto a = random_tensor<double>({3, 2, 4}, rng);
    auto b = random_tensor<double>({4, 5}, rng);
    auto c = matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{3, 2, 5}));
    auto a1 = slice(a, 0, 1, 2);
    auto c1 = matmul(reshape(a1, {2, 4}), b);
    for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(c[10 + i], c1[i]);

    try {
        matmul(random_tensor<double>({2, 3}, rng), random_tensor<double>({4, 2}, rng));
        FAIL();
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[4,2]"), std::string::npos);
    }
}

TEST(Conv3d, PointwiseIdentityAndCounting) {
    Rng rng(3);
    auto x = random_tensor<float>({1, 2, 3, 4}, rng);
    auto w = Tensor<float>::full({1, 1, 1, 1, 1}, 1.0f);
    auto y = conv3d(x, w);
    for (int64_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);

    auto ones = Tensor<float>::full({1, 3, 3, 3}, 1.0f);
    auto k = Tensor<float>::full({1, 1, 3, 3, 3}, 1.0f);
    auto s = conv3d(ones, k);
    EXPECT_EQ(s.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(s.item(), 27.0f);
}

TEST(Conv3d, DilatedMatchesNaiveLoops) {
    Rng rng(4);
    auto x = random_tensor<double>({2, 4, 6, 6}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3, 3}, rng);
    Conv3dOptions o;
    o.dilation = {1, 2, 2};
    o.padding = {1, 2, 2};
    auto fast = conv3d(x, w, o);
    auto ref = naive_conv3d(x, w, o);
    ASSERT_EQ(fast.shape(), ref.shape());
    EXPECT_LT(casp::testing::max_abs_diff(fast.data(), ref.data()), 1e-5);

    o.stride = {2, 1, 2};
    o.padding = {0, 1, 0};
    auto fast2 = conv3d(x, w, o);
    auto ref2 = naive_conv3d(x, w, o);
    ASSERT_EQ(fast2.shape(), ref2.shape());
    EXPECT_LT(casp::testing::max_abs_diff(fast2.data(), ref2.data()), 1e-5);
}

TEST(Conv3d, DilationEqualsZeroInflatedKernel) {
    Rng rng(5);
    auto x = random_tensor<double>({2, 5, 7, 7}, rng);
    auto w = random_tensor<double>({2, 2, 2, 3, 3}, rng);
    Conv3dOptions dil;
    dil.dilation = {2, 3, 2};
    // Inflated kernel extent: d*(k-1)+1 per axis.
    const int64_t kt = 3, kh = 7, kw = 5;
    Buffer<double> inflated(static_cast<std::size_t>(2 * 2 * kt * kh * kw), 0.0);
    for (int co = 0; co < 2; ++co)
        for (int ci = 0; ci < 2; ++ci)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 3; ++b)
                    for (int e = 0; e < 3; ++e)
                        inflated[(((co * 2 + ci) * kt + a * 2) * kh + b * 3) * kw + e * 2] =
                            w[(((co * 2 + ci) * 2 + a) * 3 + b) * 3 + e];
    auto wi = Tensor<double>({2, 2, kt, kh, kw}, std::move(inflated));
    auto y1 = conv3d(x, w, dil);
    auto y2 = conv3d(x, wi);
    ASSERT_EQ(y1.shape(), y2.shape());
    EXPECT_LT(casp::testing::max_abs_diff(y1.data(), y2.data()), 1e-12);
}

TEST(Conv3d, KernelLargerThanPaddedInput) {
    auto x = Tensor<float>::zeros({1, 2, 2, 2});
    auto w = Tensor<float>::zeros({1, 1, 3, 3, 3});
    EXPECT_THROW(conv3d(x, w), DimensionError);
    Conv3dOptions o;
    o.padding = {1, 1, 1};
    EXPECT_NO_THROW(conv3d(x, w, o));
    o.dilation = {0, 1, 1};
    EXPECT_THROW(conv3d(x, w, o), DimensionError);
}

TEST(ConvTranspose3d, IsAdjointOfConv3d) {
    Rng rng(6);
    Conv3dOptions o;
    o.stride = {1, 2, 2};
    o.padding = {1, 1, 1};
    auto w = random_tensor<double>({3, 2, 3, 3, 3}, rng);  // conv: 2 -> 3 channels
    auto u = random_tensor<double>({2, 3, 5, 6}, rng);
    auto y = conv3d(u, w, o);
    auto v = random_tensor<double>(y.shape(), rng);
    auto z = conv_transpose3d(v, w, Tensor<double>{}, o, {3, 5, 6});
    ASSERT_EQ(z.shape(), u.shape());
    // <conv(u), v> == <u, conv^T(v)>
    double lhs = 0, rhs = 0;
    for (int64_t i = 0; i < y.size(); ++i) lhs += y[i] * v[i];
    for (int64_t i = 0; i < u.size(); ++i) rhs += u[i] * z[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
    EXPECT_THROW(conv_transpose3d(v, w, Tensor<double>{}, o, {3, 9, 9}), DimensionError);
}

TEST(Gelu, ExactErfForm) {
    auto x = Tensor<double>({3}, {0.0, 10.0, 1.0});
    auto y = gelu(x);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_NEAR(y[1], 10.0, 1e-6);
    const double oracle = 1.0 * normal_cdf_by_quadrature(1.0);
    EXPECT_NEAR(oracle, 0.84134, 1e-4);
    EXPECT_NEAR(y[2], oracle, 1e-9);
    auto yf = gelu(Tensor<float>({1}, {1.0f}));
    EXPECT_NEAR(yf.item(), 0.84134, 1e-4);
}

TEST(Softmax, RowsAndShiftInvariance) {
    auto c = softmax(Tensor<float>({1, 4}, {2, 2, 2, 2}), 1);
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(c[i], 0.25f);

    auto two = softmax(Tensor<double>({2}, {0.0, std::log(3.0)}), 0);
    EXPECT_NEAR(two[0], 0.25, 1e-12);
    EXPECT_NEAR(two[1], 0.75, 1e-12);

    Rng rng(7);
    auto x = random_tensor<float>({5, 7}, rng, -20, 20);
    auto y = softmax(x, 1);
    auto ys = softmax(add_scalar(x, 13.5f), 1);
    for (int r = 0; r < 5; ++r) {
        double s = 0;
        for (int j = 0; j < 7; ++j) {
            EXPECT_GT(y[r * 7 + j], 0.0f);
            EXPECT_NEAR(y[r * 7 + j], ys[r * 7 + j], 1e-6);
            s += y[r * 7 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
    auto cols = softmax(x, 0);
    for (int j = 0; j < 7; ++j) {
        double s = 0;
        for (int r = 0; r < 5; ++r) s += cols[r * 7 + j];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Reduce, SumsAndMeans) {
    EXPECT_EQ(sum_all(Tensor<float>::zeros({3, 2})).item(), 0.0f);
    EXPECT_EQ(mean_all(Tensor<float>({4}, {1, 2, 3, 4})).item(), 2.5f);
    EXPECT_THROW(reduce(Tensor<float>::zeros({2}), Reduce::Sum, {}), DimensionError);

    Rng rng(8);
    auto x = random_tensor<double>({3, 4, 5}, rng);
    double brute = 0;
    for (auto v : x.data()) brute += v;
    auto seq = sum(sum(sum(x, {2}), {1}), {0});
    EXPECT_NEAR(sum_all(x).item(), brute, 1e-6);
    EXPECT_NEAR(seq.item(), brute, 1e-6);
    auto k = mean(x, {0, 2}, true);
    EXPECT_EQ(k.shape(), (Shape{1, 4, 1}));
}

TEST(Upsample, ConstantIdentityAndRamp) {
    auto c = upsample_trilinear(Tensor<float>::full({2, 2, 3, 3}, 1.5f), {4, 7, 5});
    EXPECT_EQ(c.shape(), (Shape{2, 4, 7, 5}));
    for (auto v : c.data()) EXPECT_NEAR(v, 1.5f, 1e-6);

    Rng rng(9);
    auto x = random_tensor<float>({2, 3, 4, 5}, rng);
    auto same = upsample_trilinear(x, {3, 4, 5});
    for (int64_t i = 0; i < x.size(); ++i) EXPECT_FLOAT_EQ(same[i], x[i]);

    auto ramp = upsample_trilinear(Tensor<double>({1, 1, 1, 2}, {0.0, 1.0}), {1, 1, 3});
    EXPECT_NEAR(ramp[0], 0.0, 1e-12);
    EXPECT_NEAR(ramp[1], 0.5, 1e-12);
    EXPECT_NEAR(ramp[2], 1.0, 1e-12);
}

TEST(Backward, AnalyticCases) {
    Rng rng(10);
    auto x = random_param<double>({3, 4}, rng);
    backward(sum_all(x));
    for (auto g : x.grad()) EXPECT_EQ(g, 1.0);

    x.zero_grad();
    backward(sum_all(mul(x, x)));
    for (int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.grad()[i], 2 * x[i], 1e-12);

    // Accumulation across uses and calls.
    x.zero_grad();
    auto y = add(x, x);
    backward(sum_all(y));
    backward(sum_all(x));
    for (auto g : x.grad()) EXPECT_EQ(g, 3.0);

    EXPECT_THROW(backward(mul(x, x)), ContractError);
}

TEST(Backward, LeavesForwardValuesUnchanged) {
    Rng rng(11);
    auto x = random_param<double>({2, 3}, rng);
    auto y = gelu(matmul(x, transpose2d(x)));
    const std::vector<double> before(y.data().begin(), y.data().end());
    backward(sum_all(y));
    EXPECT_EQ(before, std::vector<double>(y.data().begin(), y.data().end()));
}

TEST(Backward, TapeIsTopological) {
    Rng rng(12);
    auto x = random_param<double>({2, 2}, rng);
    auto a = exp(x);
    auto b = mul(a, x);
    auto loss = sum_all(add(a, b));
    Tape<double> tape(loss);
    const auto& order = tape.order();
    auto pos = [&](const Tensor<double>& t) {
        return std::find(order.begin(), order.end(), t.impl()) - order.begin();
    };
    EXPECT_LT(pos(x), pos(a));
    EXPECT_LT(pos(a), pos(b));
    EXPECT_EQ(order.back(), loss.impl());
}

TEST(NoGrad, SuppressesRecording) {
    Rng rng(13);
    auto x = random_param<float>({2}, rng);
    NoGradGuard ng;
    auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
}

// Finite-difference checks for every differentiable primitive.
class OpGradient : public ::testing::Test {
protected:
    Rng rng{2024, "opgrad"};
    void expect_ok(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> in) {
        auto r = grad_check(f, std::move(in));
        EXPECT_GT(r.checked, 0);
        EXPECT_LT(r.max_rel_error, 1e-3);
    }
};

TEST_F(OpGradient, Elementwise) {
    auto a = random_param<double>({4, 4}, rng);
    auto b = random_param<double>({4, 4}, rng, 0.5, 1.5);
    auto pos = random_param<double>({4, 4}, rng, 0.2, 2.0);
    expect_ok([&] { return weighted_sum(add(a, b)); }, {a, b});
    expect_ok([&] { return weighted_sum(sub(a, b)); }, {a, b});
    expect_ok([&] { return weighted_sum(mul(a, b)); }, {a, b});
    expect_ok([&] { return weighted_sum(div(a, b)); }, {a, b});
    expect_ok([&] { return weighted_sum(exp(a)); }, {a});
    expect_ok([&] { return weighted_sum(log(pos)); }, {pos});
    expect_ok([&] { return weighted_sum(sqrt(pos)); }, {pos});
    expect_ok([&] { return weighted_sum(square(a)); }, {a});
    expect_ok([&] { return weighted_sum(sigmoid(mul_scalar(a, 3.0))); }, {a});
    expect_ok([&] { return weighted_sum(gelu(mul_scalar(a, 3.0))); }, {a});
    expect_ok([&] { return weighted_sum(neg(add_scalar(a, 2.0))); }, {a});
}

TEST_F(OpGradient, Kinked) {
    // Values kept away from the kinks by more than the FD step.
    Buffer<double> v;
    for (int i = 0; i < 16; ++i) v.push_back((i % 2 ? 1 : -1) * (0.1 + 0.05 * i));
    auto x = Tensor<double>({16}, v);
    x.set_requires_grad(true);
    Buffer<double> w;
    for (int i = 0; i < 16; ++i) w.push_back(0.05 * i - 0.33);
    auto y = Tensor<double>({16}, w);
    y.set_requires_grad(true);
    expect_ok([&] { return weighted_sum(relu(x)); }, {x});
    expect_ok([&] { return weighted_sum(clamp_min(x, 0.02)); }, {x});
    expect_ok([&] { return weighted_sum(minimum(x, y)); }, {x, y});
}

TEST_F(OpGradient, ShapeOps) {
    auto a = random_param<double>({2, 3, 4}, rng);
    auto b = random_param<double>({2, 1, 4}, rng);
    expect_ok([&] { return weighted_sum(permute(a, {2, 0, 1})); }, {a});
    expect_ok([&] { return weighted_sum(reshape(a, {6, 4})); }, {a});
    expect_ok([&] { return weighted_sum(expand(b, {2, 3, 4})); }, {b});
    expect_ok([&] { return weighted_sum(concat<double>({a, b}, 1)); }, {a, b});
    expect_ok([&] { return weighted_sum(slice(a, 2, 1, 3)); }, {a});
    expect_ok([&] { return weighted_sum(sum(a, {1})); }, {a});
    expect_ok([&] { return weighted_sum(mean(a, {0, 2}, true)); }, {a});
    expect_ok([&] { return weighted_sum(softmax(a, 1)); }, {a});
    expect_ok([&] { return weighted_sum(softmax(a, 2)); }, {a});
}

TEST_F(OpGradient, Matmul) {
    auto a = random_param<double>({2, 3, 4}, rng);
    auto b = random_param<double>({4, 5}, rng);
    expect_ok([&] { return weighted_sum(matmul(a, b)); }, {a, b});
}

TEST_F(OpGradient, Convolutions) {
    auto x = random_param<double>({2, 3, 4, 4}, rng);
    auto w = random_param<double>({2, 2, 2, 3, 3}, rng);
    auto bias = random_param<double>({2}, rng);
    Conv3dOptions o;
    o.padding = {0, 2, 2};
    o.dilation = {1, 2, 2};
    o.stride = {1, 1, 2};
    expect_ok([&] { return weighted_sum(conv3d(x, w, bias, o)); }, {x, w, bias});

    auto w1 = random_param<double>({3, 2, 1, 1, 1}, rng);
    expect_ok([&] { return weighted_sum(conv3d(x, w1, Tensor<double>{})); }, {x, w1});

    Conv3dOptions s;
    s.stride = {1, 2, 2};
    s.padding = {1, 1, 1};
    auto small = random_param<double>({2, 2, 2, 2}, rng);
    auto wt = random_param<double>({2, 3, 3, 3, 3}, rng);
    auto bt = random_param<double>({3}, rng);
    expect_ok([&] { return weighted_sum(conv_transpose3d(small, wt, bt, s, {2, 4, 3})); }, {small, wt, bt});
}

TEST_F(OpGradient, Upsample) {
    auto x = random_param<double>({2, 2, 3, 2}, rng);
    expect_ok([&] { return weighted_sum(upsample_trilinear(x, {3, 5, 4})); }, {x});
}

TEST(Determinism, ForwardIsBitIdentical) {
    auto run = [] {
        Rng rng(42);
        auto x = random_tensor<float>({3, 4, 8, 8}, rng);
        auto w = random_tensor<float>({4, 3, 3, 3, 3}, rng);
        Conv3dOptions o;
        o.padding = {1, 1, 1};
        auto y = softmax(gelu(conv3d(x, w, o)), 0);
        return std::vector<float>(y.data().begin(), y.data().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Accounting, CountsMultiplyAddsAndPeak) {
    op_stats().multiply_adds = 0;
    auto a = Tensor<float>::full({4, 5}, 1.0f), b = Tensor<float>::full({5, 6}, 1.0f);
    reset_memory_peak();
    const auto before = memory_stats().live_words;
    auto c = matmul(a, b);
    EXPECT_EQ(op_stats().multiply_adds, 4 * 5 * 6);
    EXPECT_GE(memory_stats().peak_words - before, 24);
    EXPECT_EQ(memory_stats().largest_alloc, 24);
}
