// Acceptance harness: runs each numbered criterion and prints one PASS/FAIL
// line per criterion. Exit status is 0 only when every selected criterion
// passes.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "casp/avim.hpp"
#include "casp/bench.hpp"
#include "casp/config.hpp"
#include "casp/cpc.hpp"
#include "casp/decoder.hpp"
#include "casp/encoders.hpp"
#include "casp/io.hpp"
#include "casp/model.hpp"
#include "casp/objectives.hpp"
#include "casp/synth.hpp"
#include "casp/train.hpp"
#include "support/testing.hpp"
#include "support/toy.hpp"

namespace fs = std::filesystem;
using namespace casp;
using namespace casp::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Context {
    RunConfig desk;
    std::string out;  // empty: no report files
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

void save_report(const Context& ctx, const std::string& name, const std::string& text) {
    if (ctx.out.empty()) return;
    const auto path = fs::path(ctx.out) / name;
    fs::create_directories(path.parent_path());
    write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

// 1. Unnormalized linear attention against the explicit kernel matrix path.
Verdict linear_attention_equivalence(const Context&) {
    Rng rng(2024, "acceptance/associativity");
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        const auto L = static_cast<int64_t>(1 + rng.below(256));
        const auto C = static_cast<int64_t>(1 + rng.below(64));
        const auto q = random_tensor<float>({L, C}, rng), k = random_tensor<float>({L, C}, rng),
                   v = random_tensor<float>({L, C}, rng);
        NoGradGuard guard;
        const auto lin = attention_linear(q, k, v, false);
        const auto ref = attention_kernel_explicit(q, k, v);
        double diff = 0, scale = 0;
        for (int64_t j = 0; j < ref.size(); ++j) {
            diff = std::max(diff, std::abs(double(lin[j]) - double(ref[j])));
            scale = std::max(scale, std::abs(double(ref[j])));
        }
        worst = std::max(worst, diff / scale);
    }
    return {worst <= 1e-4, "50 instances, worst relative gap " + fmt(worst, 3)};
}

// 2. Multiply-add scaling and allocation accounting of the two attention paths.
Verdict attention_complexity(const Context& ctx) {
    const auto res = bench_attention({64, 128, 256, 512, 1024}, ctx.desk.bench.channels, ctx.desk.seed);
    save_report(ctx, "bench_attn.csv", res.csv());
    const bool ok = std::abs(res.slope_quadratic - 2.0) <= 0.2 && std::abs(res.slope_linear - 1.0) <= 0.1 &&
                    res.linear_avoids_square;
    return {ok, "slope quadratic " + fmt(res.slope_quadratic) + ", slope linear " + fmt(res.slope_linear) +
                    (res.linear_avoids_square ? ", no LxL allocation in linear mode"
                                              : ", linear mode allocated an LxL buffer")};
}

struct GradTally {
    int cases = 0;
    int failed = 0;
    double worst = 0;
    std::string worst_name;
    std::vector<std::string> failures;

    void add(const std::string& name, const GradCheckResult& r) {
        ++cases;
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = name;
        }
        if (!(r.max_rel_error < 1e-3) || r.checked == 0) {
            ++failed;
            failures.push_back(name + " (" + fmt(r.max_rel_error, 3) + ")");
        }
    }
};

template <class Store>
std::vector<Tensor<double>> with_params(std::vector<Tensor<double>> inputs, Store& store) {
    for (auto& [n, t] : store.items()) inputs.push_back(t);
    return inputs;
}

void check_primitives(GradTally& tally) {
    Rng rng(2024, "acceptance/opgrad");
    auto check = [&](const std::string& name, const std::function<Tensor<double>()>& f,
                     std::vector<Tensor<double>> in) { tally.add(name, grad_check(f, std::move(in))); };
    auto a = random_param<double>({4, 4}, rng), b = random_param<double>({4, 4}, rng, 0.5, 1.5);
    auto pos = random_param<double>({4, 4}, rng, 0.2, 2.0);
    check("add", [&] { return weighted_sum(add(a, b)); }, {a, b});
    check("sub", [&] { return weighted_sum(sub(a, b)); }, {a, b});
    check("mul", [&] { return weighted_sum(mul(a, b)); }, {a, b});
    check("div", [&] { return weighted_sum(div(a, b)); }, {a, b});
    check("exp", [&] { return weighted_sum(exp(a)); }, {a});
    check("log", [&] { return weighted_sum(log(pos)); }, {pos});
    check("sqrt", [&] { return weighted_sum(sqrt(pos)); }, {pos});
    check("square", [&] { return weighted_sum(square(a)); }, {a});
    check("sigmoid", [&] { return weighted_sum(sigmoid(mul_scalar(a, 3.0))); }, {a});
    check("gelu", [&] { return weighted_sum(gelu(mul_scalar(a, 3.0))); }, {a});
    check("neg/add_scalar", [&] { return weighted_sum(neg(add_scalar(a, 2.0))); }, {a});

    // Kinked ops are sampled away from their kinks by more than the step.
    Buffer<double> xv, yv;
    for (int i = 0; i < 16; ++i) {
        xv.push_back((i % 2 ? 1 : -1) * (0.1 + 0.05 * i));
        yv.push_back(0.05 * i - 0.33);
    }
    Tensor<double> x({16}, xv), y({16}, yv);
    x.set_requires_grad(true);
    y.set_requires_grad(true);
    check("relu", [&] { return weighted_sum(relu(x)); }, {x});
    check("clamp_min", [&] { return weighted_sum(clamp_min(x, 0.02)); }, {x});
    check("minimum", [&] { return weighted_sum(minimum(x, y)); }, {x, y});

    auto t3 = random_param<double>({2, 3, 4}, rng), b3 = random_param<double>({2, 1, 4}, rng);
    check("permute", [&] { return weighted_sum(permute(t3, {2, 0, 1})); }, {t3});
    check("reshape", [&] { return weighted_sum(reshape(t3, {6, 4})); }, {t3});
    check("expand", [&] { return weighted_sum(expand(b3, {2, 3, 4})); }, {b3});
    check("concat", [&] { return weighted_sum(concat<double>({t3, b3}, 1)); }, {t3, b3});
    check("slice", [&] { return weighted_sum(slice(t3, 2, 1, 3)); }, {t3});
    check("sum", [&] { return weighted_sum(sum(t3, {1})); }, {t3});
    check("mean", [&] { return weighted_sum(mean(t3, {0, 2}, true)); }, {t3});
    check("sum_all", [&] { return mul(sum_all(t3), sum_all(t3)); }, {t3});
    check("mean_all", [&] { return mul(mean_all(t3), mean_all(t3)); }, {t3});
    check("softmax", [&] { return weighted_sum(softmax(t3, 2)); }, {t3});
    auto m2 = random_param<double>({3, 5}, rng);
    check("transpose2d", [&] { return weighted_sum(transpose2d(m2)); }, {m2});
    auto mb = random_param<double>({4, 5}, rng);
    check("matmul", [&] { return weighted_sum(matmul(t3, mb)); }, {t3, mb});

    auto cx = random_param<double>({2, 3, 4, 4}, rng), cw = random_param<double>({2, 2, 2, 3, 3}, rng),
         cb = random_param<double>({2}, rng);
    Conv3dOptions o;
    o.padding = {0, 2, 2};
    o.dilation = {1, 2, 2};
    o.stride = {1, 1, 2};
    check("conv3d", [&] { return weighted_sum(conv3d(cx, cw, cb, o)); }, {cx, cw, cb});
    Conv3dOptions s;
    s.stride = {1, 2, 2};
    s.padding = {1, 1, 1};
    auto small = random_param<double>({2, 2, 2, 2}, rng), wt = random_param<double>({2, 3, 3, 3, 3}, rng),
         bt = random_param<double>({3}, rng);
    check("conv_transpose3d",
          [&] { return weighted_sum(conv_transpose3d(small, wt, bt, s, {2, 4, 3})); }, {small, wt, bt});
    auto up = random_param<double>({2, 2, 3, 2}, rng);
    check("upsample_trilinear", [&] { return weighted_sum(upsample_trilinear(up, {3, 5, 4})); }, {up});
}

void check_modules(GradTally& tally) {
    Rng rng(2024, "acceptance/modgrad");
    auto input = [&](const Shape& s, double lo = -1, double hi = 1) { return random_param<double>(s, rng, lo, hi); };
    {
        ParamStore<double> st(1);
        GroupNorm<double> gn(st, "gn", 4, 2);
        auto x = input({4, 2, 3, 3});
        tally.add("GroupNorm", grad_check([&] { return weighted_sum(gn(x)); }, with_params({x}, st), 1e-5));
    }
    {
        ParamStore<double> st(2);
        LinearLayer<double> fc(st, "fc", 5, 3);
        auto v = input({5});
        tally.add("LinearLayer", grad_check([&] { return weighted_sum(fc(v)); }, with_params({v}, st), 1e-5));
    }
    {
        ParamStore<double> st(3);
        EncoderConfig cfg = toy_model().encoder;
        VideoEncoder<double> enc(st, "video", cfg);
        auto clip = input({3, 4, 32, 32}, 0, 1);
        auto loss = [&] {
            auto f = enc(clip);
            Tensor<double> total = weighted_sum(f[0], 1);
            for (int i = 1; i < 4; ++i) total = add(total, weighted_sum(f[i], 1 + i));
            return total;
        };
        tally.add("VideoEncoder", grad_check(loss, with_params({clip}, st), 1e-4, 16));
    }
    {
        ParamStore<double> st(4);
        Aspp<double> aspp(st, "aspp", 4, 3, {1, 2});
        auto x = input({4, 2, 4, 4});
        tally.add("Aspp", grad_check([&] { return weighted_sum(aspp(x)); }, with_params({x}, st), 1e-5));
    }
    {
        ParamStore<double> st(5);
        AudioBroadcast<double> bc(st, "broadcast", 4, 3);
        auto fa = input({4});
        tally.add("AudioBroadcast",
                  grad_check([&] { return weighted_sum(bc(fa, {2, 3, 3})); }, with_params({fa}, st), 1e-5));
    }
    {
        ParamStore<double> st(6);
        audio::EmbedderConfig cfg = toy_model().embedder;
        audio::AudioEmbedder<double> emb(st, "audio", cfg);
        auto spec = input({cfg.frames, cfg.mels}, -3, 1);
        tally.add("AudioEmbedder", grad_check([&] { return weighted_sum(emb(spec)); }, with_params({spec}, st)));
    }
    {
        auto q = input({6, 3}), k = input({6, 3}), v = input({6, 3});
        tally.add("kernel_phi", grad_check([&] { return weighted_sum(kernel_phi(q)); }, {q}, 1e-5));
        tally.add("attention_quadratic",
                  grad_check([&] { return weighted_sum(attention_quadratic(q, k, v, 6.0)); }, {q, k, v}, 1e-5));
        tally.add("attention_linear",
                  grad_check([&] { return weighted_sum(attention_linear(q, k, v, false)); }, {q, k, v}, 1e-5));
        tally.add("attention_linear_normalized",
                  grad_check([&] { return weighted_sum(attention_linear(q, k, v, true)); }, {q, k, v}, 1e-5));
        tally.add("attention_kernel_explicit",
                  grad_check([&] { return weighted_sum(attention_kernel_explicit(q, k, v)); }, {q, k, v}, 1e-5));
    }
    {
        auto v = input({3, 2, 2, 2}), a = input({3, 2, 2, 2});
        for (auto mode : {AttentionMode::Quadratic, AttentionMode::Linear, AttentionMode::LinearNormalized,
                          AttentionMode::Bilinear}) {
            ParamStore<double> st(7);
            Avim<double> avim(st, "avim", 3, mode, 2);
            tally.add("Avim/" + to_string(mode),
                      grad_check([&] { return weighted_sum(avim(v, a)); }, with_params({v, a}, st), 1e-5));
        }
    }
    {
        CpcConfig cfg;
        cfg.channels = 2;
        cfg.iterations = 2;
        cfg.alpha = 5.0;
        ParamStore<double> st(8);
        Cpc<double> cpc(st, "cpc", cfg);
        auto vis = input({2, 2, 4, 3}), aud = input({2, 2, 4, 3});
        tally.add("Cpc/infer N=2",
                  grad_check([&] { return weighted_sum(cpc(vis, aud)); }, with_params({vis, aud}, st), 1e-5));
    }
    {
        DecoderConfig cfg;
        cfg.width = 3;
        cfg.growth = 2;
        cfg.dense_layers = 2;
        cfg.groups = 1;
        cfg.temporal = 2;
        ParamStore<double> st(9);
        DenseBlock<double> dense(st, "dense", 3, cfg);
        FusionBlock<double> fusion(st, "fusion", 2, 3, true);
        FeatureGeneration<double> gen(st, "gen", 4, 3, 2);
        auto x = input({3, 4, 3, 3}), prev = input({2, 2, 2, 2}), cur = input({3, 2, 4, 4}), g = input({4, 2, 3, 3});
        tally.add("DenseBlock", grad_check([&] { return weighted_sum(dense(x)); }, with_params({x}, st), 1e-5));
        tally.add("FusionBlock",
                  grad_check([&] { return weighted_sum(fusion(prev, cur)); }, with_params({prev, cur}, st), 1e-5));
        tally.add("FeatureGeneration", grad_check([&] { return weighted_sum(gen(g)); }, with_params({g}, st), 1e-5));
    }
    {
        DecoderConfig cfg;
        cfg.width = 2;
        cfg.growth = 2;
        cfg.dense_layers = 1;
        cfg.groups = 1;
        ParamStore<double> st(10);
        SalDecoder<double> dec(st, "decoder", {2, 2, 2, 2}, cfg);
        std::vector<Tensor<double>> feats;
        const int64_t t[4] = {8, 4, 4, 4};
        for (int i = 0; i < 4; ++i) feats.push_back(input({2, t[i], 32 >> (i + 2), 32 >> (i + 2)}));
        tally.add("SalDecoder",
                  grad_check([&] { return weighted_sum(dec(feats, {32, 32})); }, with_params(feats, st), 1e-5, 24));
    }
    {
        auto pred = input({6, 6}, 0.05, 1);
        auto den = random_tensor<double>({6, 6}, rng, 0, 1);
        tally.add("loss_kl", grad_check([&] { return loss_kl(pred, den); }, {pred}, 1e-6));
        tally.add("loss_cc", grad_check([&] { return loss_cc(pred, den); }, {pred}, 1e-6));
        tally.add("loss_sim", grad_check([&] { return loss_sim(pred, den); }, {pred}, 1e-6));
        for (bool literal : {false, true}) {
            LossWeights w;
            w.paper_literal_signs = literal;
            tally.add(std::string("loss_total/") + (literal ? "literal" : "consistent"),
                      grad_check([&] { return loss_total(pred, den, w).total; }, {pred}, 1e-6));
        }
    }
}

void check_composition(GradTally& tally) {
    const auto m = toy_model();
    Rng rng(12);
    auto clip = random_tensor<double>({3, m.frames, m.height, m.width_px}, rng, 0, 1);
    auto spec = random_tensor<double>({m.embedder.frames, m.embedder.mels}, rng, -4, 0);
    const auto dense = random_tensor<double>({m.height, m.width_px}, rng, 0, 1);
    clip.set_requires_grad(true);
    spec.set_requires_grad(true);
    ParamStore<double> store(13);
    CaspNet<double> net(store, m);

    auto wide_clip = cast<long double>(clip), wide_spec = cast<long double>(spec);
    const auto wide_dense = cast<long double>(dense);
    ParamStore<long double> wide_store(13);
    CaspNet<long double> wide_net(wide_store, m);
    std::vector<Tensor<double>> inputs{clip, spec};
    std::vector<Tensor<long double>> wide_inputs{wide_clip, wide_spec};
    for (auto& [n, t] : store.items()) {
        auto w = wide_store.get(n);
        auto dst = w.mutable_data();
        for (int64_t i = 0; i < t.size(); ++i) dst[i] = t[i];
        inputs.push_back(t);
        wide_inputs.push_back(w);
    }
    tally.add("encoder-AVIM-CPC-decoder-loss_total",
              grad_check_extended([&] { return loss_total(net(clip, spec), dense).total; }, inputs,
                                  [&] { return loss_total(wide_net(wide_clip, wide_spec), wide_dense).total; },
                                  wide_inputs, 1e-5L, 8));
}

// 3. Finite-difference agreement for every differentiable op, module and the
// full composition at toy size.
Verdict gradient_integrity(const Context&) {
    const auto t0 = Clock::now();
    GradTally tally;
    check_primitives(tally);
    check_modules(tally);
    check_composition(tally);
    const double secs = seconds_since(t0);
    std::string detail = std::to_string(tally.cases - tally.failed) + "/" + std::to_string(tally.cases) +
                         " checks below 1e-3, worst " + fmt(tally.worst, 3) + " (" + tally.worst_name + "), " +
                         fmt(secs, 3) + " s";
    for (const auto& f : tally.failures) detail += "; failed " + f;
    return {tally.failed == 0 && secs < 300, detail};
}

// 4. CPC inference: slow-step monotonicity, default-step descent, update direction.
Verdict cpc_behaviour(const Context& ctx) {
    SweepConfig slow;
    slow.instances = 20;
    slow.max_iterations = 10;
    slow.alpha = 0.01;
    const auto slow_res = cpc_sweep(ctx.desk.model, slow, ctx.desk.seed);
    save_report(ctx, "cpc_sweep_alpha0.01.csv", slow_res.csv());

    SweepConfig fast = slow;
    fast.max_iterations = 3;
    fast.alpha = ctx.desk.model.cpc.alpha;
    const auto fast_res = cpc_sweep(ctx.desk.model, fast, ctx.desk.seed);
    save_report(ctx, "cpc_sweep_alpha0.1.csv", fast_res.csv());
    int64_t descended = 0;
    for (const auto& t : fast_res.traces) descended += t[3] < t[0];

    // The applied update divided by the step must equal the autodiff gradient of sum(eps).
    const auto ext = pyramid_extents({ctx.desk.model.frames, ctx.desk.model.height, ctx.desk.model.width_px},
                                     ctx.desk.model.encoder)[3];
    CpcConfig cfg = ctx.desk.model.cpc;
    cfg.channels = ctx.desk.model.channels;
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        ParamStore<double> store(Rng(ctx.desk.seed, "acceptance/cpc/" + std::to_string(i)).next_u64());
        Cpc<double> cpc(store, "cpc", cfg);
        Rng rng(ctx.desk.seed, "acceptance/cpc-inputs/" + std::to_string(i));
        const Shape s{cfg.channels, ext[0], ext[1], ext[2]};
        auto state = cpc.feedforward(cpc.fuse(random_tensor<double>(s, rng), random_tensor<double>(s, rng)));
        for (auto& mu : state.mu) {
            mu = mu.detach();
            mu.set_requires_grad(true);
        }
        Tensor<double> total;
        for (const auto& e : cpc.errors(state)) {
            auto term = mean_all(square(e));
            total = total.defined() ? add(total, term) : term;
        }
        backward(total);
        CpcState<double> next;
        {
            NoGradGuard guard;
            next = cpc.iterate(state);
        }
        for (std::size_t l = 0; l + 1 < state.mu.size(); ++l) {
            const auto ad = state.mu[l].grad_tensor();
            for (int64_t k = 0; k < ad.size(); ++k) {
                const double step = (state.mu[l][k] - next.mu[l][k]) / cfg.alpha;
                worst = std::max(worst, std::abs(step - ad[k]));
            }
        }
    }
    const bool ok = slow_res.nonincreasing == 20 && descended >= 18 && worst <= 1e-5;
    return {ok, "alpha 0.01: " + std::to_string(slow_res.nonincreasing) + "/20 nonincreasing over 10 iterations; alpha " +
                    fmt(fast.alpha) + ": " + std::to_string(descended) +
                    "/20 lower after 3 iterations; update direction gap " + fmt(worst, 3)};
}

// 5. Metric oracles and invariances.
Verdict metric_oracles(const Context&) {
    std::vector<std::string> bad;
    Rng rng(2024, "acceptance/metrics");
    int auc_exact = 0;
    for (int i = 0; i < 100; ++i) {
        Buffer<float> v(64);
        const int levels = 2 + static_cast<int>(rng.below(63));
        for (auto& x : v) x = static_cast<float>(rng.below(static_cast<uint64_t>(levels))) / static_cast<float>(levels);
        Tensor<float> s({8, 8}, std::move(v));
        const auto f = random_fixations(rng, {8, 8}, 0.2);
        auc_exact += metric_auc_judd(s, f) == auc_bruteforce(s, f);
    }
    if (auc_exact != 100) bad.push_back("AUC-J exact on " + std::to_string(auc_exact) + "/100");

    int pair_failures = 0;
    for (int i = 0; i < 1000; ++i) {
        auto p = random_tensor<float>({4, 4}, rng, 0, 1), q = random_tensor<float>({4, 4}, rng, 0, 1);
        const auto f = random_fixations(rng, {4, 4}, 0.3);
        const float k = static_cast<float>(rng.uniform(0.1, 5)), c = static_cast<float>(rng.uniform(-3, 3));
        const auto affine = add_scalar(mul_scalar(p, k), c);
        bool ok = std::abs(metric_cc(affine, q).value - metric_cc(p, q).value) <= 1e-5;
        ok = ok && std::abs(metric_nss(affine, f).value - metric_nss(p, f).value) <= 1e-5;
        const double sim = metric_sim(p, q), kl = metric_kl(p, q);
        ok = ok && sim >= 0 && sim <= 1 + 1e-12 && kl >= -1e-6;
        pair_failures += !ok;
    }
    if (pair_failures) bad.push_back(std::to_string(pair_failures) + "/1000 random pairs broke an invariance");

    // Hand examples.
    auto map = [](const Shape& s, std::vector<float> v) { return Tensor<float>(s, Buffer<float>(v.begin(), v.end())); };
    const auto one_hot = map({4}, {0, 0, 0, 1});
    if (std::abs(metric_nss(one_hot, one_hot).value - 1.7320508) > 1e-6) bad.push_back("NSS hand example");
    const auto fix = map({2, 2}, {1, 0, 0, 1});
    if (metric_auc_judd(map({2, 2}, {0.9f, 0.1f, 0.2f, 0.8f}), fix) != 1.0) bad.push_back("AUC-J separable example");
    if (metric_auc_judd(Tensor<float>::full({2, 2}, 0.5f), fix) != 0.5) bad.push_back("AUC-J constant example");
    const auto a = map({4}, {1, 2, 3, 5}), b = map({4}, {2, 1, 4, 4});
    // Covariance 1.4375 over standard deviations sqrt(2.1875) and sqrt(1.6875).
    if (std::abs(metric_cc(a, b).value - 1.4375 / std::sqrt(2.1875 * 1.6875)) > 1e-6) bad.push_back("CC hand example");
    if (std::abs(metric_sim(a, a) - 1.0) > 1e-6) bad.push_back("SIM self example");
    if (std::abs(metric_kl(a, a)) > 1e-6) bad.push_back("KL self example");
    const auto two = map({2}, {1, 0}), even = map({2}, {0.5f, 0.5f});
    if (std::abs(metric_kl(even, two) - std::log(2.0)) > 1e-6) bad.push_back("KL two-cell example");
    if (std::abs(metric_sim(even, two) - 0.5) > 1e-6) bad.push_back("SIM two-cell example");

    std::string detail = "AUC-J exact on " + std::to_string(auc_exact) + "/100, " +
                         std::to_string(1000 - pair_failures) + "/1000 random pairs hold CC/NSS invariance and KL/SIM ranges";
    for (const auto& s : bad) detail += "; failed " + s;
    return {bad.empty(), detail};
}

// 6. Loss identities at a perfect prediction.
Verdict loss_identities(const Context& ctx) {
    SynthConfig cfg = ctx.desk.val_data;
    cfg.clips = 1;
    const auto sample = synth_sample(cfg, 0);
    const auto& den = sample.dense;
    const auto parts = loss_total(den, den);
    const double cc = metric_cc(den, den).value, sim = metric_sim(den, den);
    const double total = parts.total.item();
    const bool ok = std::abs(parts.kl) <= 1e-6 && std::abs(cc - 1) <= 1e-6 && std::abs(sim - 1) <= 1e-6 &&
                    std::abs(total + 0.2) <= 1e-6;
    return {ok, "KL " + fmt(parts.kl, 3) + ", CC " + fmt(cc, 9) + ", SIM " + fmt(sim, 9) + ", total " + fmt(total, 9)};
}

struct TrainedRun {
    EvalReport report;
    double seconds = 0;
};

TrainedRun train_and_evaluate(const Context& ctx, const RunConfig& rc, const std::string& tag) {
    const auto t0 = Clock::now();
    const auto train = prepare(synth_generate(rc.train_data), rc.model, rc.train_data.fps);
    const auto val = prepare(synth_generate(rc.val_data), rc.model, rc.val_data.fps);
    Trainer trainer(rc.model, rc.train);
    std::ostringstream log;
    log << "step,loss,kl,cc,sim\n";
    trainer.run(train, rc.train.steps, [&](const StepLog& l) {
        log << l.step << ',' << l.loss << ',' << l.kl << ',' << l.cc << ',' << l.sim << '\n';
        if (l.step % 100 == 0) {
            std::cout << "    [" << tag << "] step " << l.step << " loss " << fmt(l.loss) << " ("
                      << fmt(seconds_since(t0), 3) << " s)" << std::endl;
        }
    });
    TrainedRun run;
    run.report = evaluate(trainer.net(), val);
    run.seconds = seconds_since(t0);
    save_report(ctx, tag + "/train_log.csv", log.str());
    save_report(ctx, tag + "/eval.csv", run.report.csv("val"));
    return run;
}

// 7. Training on consistent clips reaches the validation thresholds.
Verdict synthetic_training(const Context& ctx) {
    RunConfig rc = ctx.desk;
    rc.train_data.mode = rc.val_data.mode = Consistency::Consistent;
    const auto run = train_and_evaluate(ctx, rc, "consistent");
    const auto m = run.report.mean();
    const bool ok = m.cc >= 0.5 && m.auc >= 0.80 && run.seconds < 1800;
    return {ok, std::to_string(rc.train.steps) + " steps on " + std::to_string(rc.train_data.clips) +
                    " clips: validation CC " + fmt(m.cc) + ", AUC-J " + fmt(m.auc) + ", " + fmt(run.seconds, 4) +
                    " s"};
}

// 8. Ablation ordering on the mixed set.
Verdict ablation_direction(const Context& ctx) {
    RunConfig base = ctx.desk;
    base.train_data.mode = base.val_data.mode = Consistency::Mixed;
    struct Variant {
        std::string tag;
        bool audio, cpc;
    };
    const Variant variants[3] = {{"visual_only", false, false}, {"avim_linear", true, false}, {"avim_cpc", true, true}};
    double cc[3], inconsistent[3], total_seconds = 0;
    for (int i = 0; i < 3; ++i) {
        RunConfig rc = base;
        rc.model.use_audio = variants[i].audio;
        rc.model.use_cpc = variants[i].cpc;
        rc.model.attention = AttentionMode::Linear;
        const auto run = train_and_evaluate(ctx, rc, "ablation_" + variants[i].tag);
        cc[i] = run.report.mean().cc;
        inconsistent[i] = run.report.mean(Consistency::Inconsistent).cc;
        total_seconds += run.seconds;
    }
    const double cpc_gain = inconsistent[2] - inconsistent[1];
    const bool ok = cc[0] <= cc[1] && cc[1] <= cc[2] && cpc_gain > 0 && total_seconds < 5400;
    return {ok, "validation CC visual-only " + fmt(cc[0]) + ", +AVIM " + fmt(cc[1]) + ", +AVIM+CPC " + fmt(cc[2]) +
                    "; inconsistent-subset CC " + fmt(inconsistent[0]) + " / " + fmt(inconsistent[1]) + " / " +
                    fmt(inconsistent[2]) + ", CPC gain " + fmt(cpc_gain, 3) + "; " + fmt(total_seconds, 4) + " s"};
}

// 9. Decoder size against a matched UNet-style stub at full widths.
Verdict decoder_parameters(const Context&) {
    const ModelConfig paper;
    const int64_t c = paper.channels;
    ParamStore<float> sal(0), unet(0);
    SalDecoder<float> dec(sal, "decoder", {c, c, c, c}, paper.decoder);
    UnetDecoderStub<float> stub(unet, "unet", {c, c, c, c}, paper.decoder.width);
    const auto ns = sal.parameter_count(), nu = unet.parameter_count();
    return {ns < nu, "SalDecoder " + std::to_string(ns) + " vs UNet stub " + std::to_string(nu) + " parameters"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria for the saliency model"};
    std::string config = CASP_DESK_CONFIG;
    std::vector<int> only;
    std::string out;
    app.add_option("--config", config, "Run configuration used by the training criteria")->check(CLI::ExistingFile);
    app.add_option("--criterion", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
    app.add_option("--out", out, "Directory for report files");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    const std::vector<std::pair<std::string, std::function<Verdict(const Context&)>>> criteria{
        {"linear attention equals explicit kernel path", linear_attention_equivalence},
        {"attention complexity", attention_complexity},
        {"gradient integrity", gradient_integrity},
        {"CPC inference behaviour", cpc_behaviour},
        {"metric oracles", metric_oracles},
        {"loss identities", loss_identities},
        {"synthetic training", synthetic_training},
        {"ablation direction", ablation_direction},
        {"decoder parameter count", decoder_parameters},
    };
    try {
        Context ctx{load_run_config(config), out};
        int failed = 0;
        for (std::size_t i = 0; i < criteria.size(); ++i) {
            const int id = static_cast<int>(i) + 1;
            if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
            const auto t0 = Clock::now();
            const auto v = criteria[i].second(ctx);
            failed += !v.pass;
            std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
                      << "): " << v.detail << " [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
        }
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance: " << e.what() << "\n";
        return 2;
    }
}
