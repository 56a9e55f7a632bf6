#include "casp/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "casp/avim.hpp"
#include "casp/cpc.hpp"
#include "casp/encoders.hpp"

namespace casp {

namespace {

Tensor<float> uniform_tensor(const Shape& s, Rng& rng) {
    Buffer<float> b(static_cast<std::size_t>(numel(s)));
    for (auto& v : b) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return Tensor<float>(s, std::move(b));
}

template <class F>
BenchRow measure(const std::string& mode, int64_t L, int64_t C, F&& run) {
    BenchRow row;
    row.mode = mode;
    row.tokens = L;
    row.channels = C;
    op_stats().multiply_adds = 0;
    reset_memory_peak();
    const auto base = memory_stats().live_words;
    const auto t0 = std::chrono::steady_clock::now();
    auto out = run();
    const auto t1 = std::chrono::steady_clock::now();
    row.multiply_adds = op_stats().multiply_adds;
    row.peak_words = memory_stats().peak_words - base;
    row.largest_alloc = memory_stats().largest_alloc;
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    return row;
}

double rel_inf(const Tensor<float>& a, const Tensor<float>& b) {
    double num = 0, den = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
        den = std::max(den, std::abs(static_cast<double>(b[i])));
    }
    return den > 0 ? num / den : num;
}

}  // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InputError("slope fit needs at least two paired points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0) throw InputError("slope fit needs at least two distinct x values");
    return sxy / sxx;
}

BenchResult bench_attention(const std::vector<int64_t>& tokens, int64_t channels, uint64_t seed) {
    NoGradGuard guard;
    BenchResult res;
    std::vector<double> xs, quad, lin;
    for (auto L : tokens) {
        if (L < 1) throw InputError("benchmark token counts must be >= 1");
        Rng rng(seed, "bench/" + std::to_string(L));
        const auto q = uniform_tensor({channels, L}, rng), k = uniform_tensor({channels, L}, rng),
                   v = uniform_tensor({channels, L}, rng);
        Tensor<float> lin_out, quad_out;
        auto rq = measure("quadratic", L, channels, [&] { return quad_out = attention_quadratic(q, k, v, double(L)); });
        auto rl = measure("linear", L, channels, [&] { return lin_out = attention_linear(q, k, v); });
        rl.rel_diff = rel_inf(lin_out, attention_kernel_explicit(q, k, v));
        res.max_rel_diff = std::max(res.max_rel_diff, rl.rel_diff);
        if (rl.largest_alloc >= L * L && L > channels) res.linear_avoids_square = false;
        xs.push_back(static_cast<double>(L));
        quad.push_back(static_cast<double>(rq.multiply_adds));
        lin.push_back(static_cast<double>(rl.multiply_adds));
        res.rows.push_back(rq);
        res.rows.push_back(rl);
    }
    if (xs.size() >= 2) {
        res.slope_quadratic = loglog_slope(xs, quad);
        res.slope_linear = loglog_slope(xs, lin);
    }
    return res;
}

std::string BenchResult::csv() const {
    std::ostringstream out;
    out << "mode,L,C,multiply_adds,peak_words,largest_alloc_words,seconds,rel_diff_vs_explicit\n";
    for (const auto& r : rows) {
        out << r.mode << ',' << r.tokens << ',' << r.channels << ',' << r.multiply_adds << ',' << r.peak_words << ','
            << r.largest_alloc << ',' << r.seconds << ',';
        if (r.mode == "linear") out << r.rel_diff;
        out << '\n';
    }
    return out.str();
}

SweepResult cpc_sweep(const ModelConfig& model, const SweepConfig& sweep, uint64_t seed) {
    const auto ext = pyramid_extents({model.frames, model.height, model.width_px}, model.encoder)[3];
    CpcConfig cfg = model.cpc;
    cfg.channels = model.channels;
    cfg.alpha = sweep.alpha;
    SweepResult res;
    for (int64_t i = 0; i < sweep.instances; ++i) {
        ParamStore<float> store(Rng(seed, "sweep/params/" + std::to_string(i)).next_u64());
        Cpc<float> cpc(store, "cpc", cfg);
        Rng rng(seed, "sweep/inputs/" + std::to_string(i));
        const Shape s{cfg.channels, ext[0], ext[1], ext[2]};
        const auto vis = uniform_tensor(s, rng), aud = uniform_tensor(s, rng);
        std::vector<double> trace;
        {
            NoGradGuard guard;
            cpc.infer(vis, aud, sweep.max_iterations, &trace);
        }
        bool mono = true;
        for (std::size_t n = 1; n < trace.size(); ++n) mono = mono && trace[n] <= trace[n - 1];
        res.nonincreasing += mono;
        res.traces.push_back(std::move(trace));
    }
    return res;
}

std::string SweepResult::csv() const {
    std::ostringstream out;
    out.precision(9);
    out << "instance,iterations,total_error\n";
    for (std::size_t i = 0; i < traces.size(); ++i)
        for (std::size_t n = 0; n < traces[i].size(); ++n) out << i << ',' << n << ',' << traces[i][n] << '\n';
    if (!traces.empty()) {
        for (std::size_t n = 0; n < traces[0].size(); ++n) {
            double m = 0;
            for (const auto& t : traces) m += t[n];
            out << "mean," << n << ',' << m / static_cast<double>(traces.size()) << '\n';
        }
    }
    return out.str();
}

}  // namespace casp
