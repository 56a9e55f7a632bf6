#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "casp/audio.hpp"
#include "support/testing.hpp"

using namespace casp;
using namespace casp::audio;

namespace {

Waveform sine(double hz, double seconds, double amp = 0.5, double rate = 16000.0) {
    Waveform w;
    w.sample_rate = rate;
    const auto n = static_cast<int64_t>(std::llround(seconds * rate));
    for (int64_t i = 0; i < n; ++i)
        w.samples.push_back(static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * double(i) / rate)));
    return w;
}

Waveform noise(int64_t n, uint64_t seed) {
    Rng rng(seed, "noise");
    Waveform w;
    for (int64_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(rng.uniform(-0.9, 0.9)));
    return w;
}

}  // namespace

TEST(CropAlign, SampleCounts) {
    auto w = noise(40000, 1);
    EXPECT_EQ(crop_align(w, 16, 16.0).samples.size(), 16000u);
    EXPECT_EQ(crop_align(w, 16, 32.0).samples.size(), 8000u);
    // Offset by k frames shifts the window by round(k * rate / fps) samples.
    const int64_t k = 3;
    const double fps = 30.0;
    auto shifted = crop_align(w, 16, fps, k);
    const auto offset = std::llround(k * 16000.0 / fps);
    ASSERT_EQ(shifted.samples.size(), static_cast<std::size_t>(std::llround(16000.0 * 16 / fps)));
    for (std::size_t i = 0; i < shifted.samples.size(); ++i) ASSERT_EQ(shifted.samples[i], w.samples[offset + i]);
}

TEST(CropAlign, TooShortReportsDurations) {
    auto w = noise(8000, 2);
    try {
        crop_align(w, 16, 16.0);
        FAIL();
    } catch (const InputError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("1.0"), std::string::npos);
        EXPECT_NE(msg.find("0.5"), std::string::npos);
    }
}

TEST(Stft, ZeroSignalAndFrameCount) {
    Waveform z;
    z.samples.assign(1000, 0.0f);
    auto m = stft_magnitude(z, 400, 160);
    EXPECT_EQ(m.shape(), (Shape{1 + (1000 - 400) / 160, 201}));
    for (auto v : m.data()) EXPECT_EQ(v, 0.0f);
    EXPECT_THROW(stft_magnitude(z, 2000, 160), InputError);
    EXPECT_THROW(stft_magnitude(z, 400, 0), InputError);
}

TEST(Stft, BinCenteredSine) {
    // Closed form for a periodic-Hann windowed sine at bin k0 (amplitude A):
    // |X[k0]| = A N / 4, |X[k0 +- 1]| = A N / 8, every other bin is zero.
    const int64_t N = 400, k0 = 25;
    const double hz = 16000.0 * k0 / N;
    auto w = sine(hz, 0.05, 0.8);
    auto m = stft_magnitude(w, N, 160);
    const int64_t bins = m.dim(1);
    for (int64_t f = 0; f < m.dim(0); ++f) {
        const float peak = m[f * bins + k0];
        EXPECT_NEAR(peak, 0.8 * N / 4, 1e-3);
        EXPECT_NEAR(m[f * bins + k0 - 1], 0.8 * N / 8, 1e-3);
        EXPECT_NEAR(m[f * bins + k0 + 1], 0.8 * N / 8, 1e-3);
        for (int64_t k = 0; k < bins; ++k) {
            if (std::abs(k - k0) <= 1) continue;
            EXPECT_LT(m[f * bins + k], 1e-3 * peak);
        }
    }
}

TEST(Stft, ParsevalPerFrame) {
    const int64_t N = 400, hop = 160;
    auto w = noise(2000, 3);
    auto m = stft_magnitude(w, N, hop);
    const int64_t bins = m.dim(1);
    for (int64_t f = 0; f < m.dim(0); ++f) {
        double spectral = 0;
        for (int64_t k = 0; k < bins; ++k) {
            const double e = double(m[f * bins + k]) * m[f * bins + k];
            spectral += (k == 0 || k == N / 2) ? e : 2 * e;
        }
        double temporal = 0;
        for (int64_t n = 0; n < N; ++n) {
            const double hann = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / N);
            const double v = hann * w.samples[f * hop + n];
            temporal += v * v;
        }
        EXPECT_NEAR(spectral / (N * temporal), 1.0, 1e-4);
    }
}

TEST(MelFilterbank, Invariants) {
    auto fb = MelFilterbank::build(64, 201, 16000.0, 125.0, 7500.0);
    EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
    EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
    double prev_peak = -1;
    for (int64_t m = 0; m < 64; ++m) {
        double support = 0, best = -1;
        int64_t argmax = 0;
        for (int64_t b = 0; b < 201; ++b) {
            EXPECT_GE(fb.at(m, b), 0.0);
            support += fb.at(m, b);
            if (fb.at(m, b) > best) {
                best = fb.at(m, b);
                argmax = b;
            }
        }
        EXPECT_GT(support, 0.0);
        EXPECT_GE(static_cast<double>(argmax), prev_peak);
        prev_peak = static_cast<double>(argmax);
    }
    auto centers = fb.centers_hz();
    for (std::size_t i = 1; i < centers.size(); ++i) EXPECT_GT(centers[i], centers[i - 1]);
}

TEST(LogMel, ZeroAndDoubling) {
    auto fb = MelFilterbank::build(64, 201, 16000.0, 125.0, 7500.0);
    auto zeros = Tensor<float>::zeros({98, 201});
    auto lm = log_mel(zeros, fb);
    EXPECT_EQ(lm.shape(), (Shape{96, 64}));
    for (auto v : lm.data()) EXPECT_FLOAT_EQ(v, std::log(0.01f));

    auto w = noise(16000, 4);
    for (auto& s : w.samples) s *= 0.5f;
    auto loud = w;
    for (auto& s : loud.samples) s *= 2.0f;
    auto a = log_mel(stft_magnitude(w, 400, 160), fb);
    auto b = log_mel(stft_magnitude(loud, 400, 160), fb);
    for (int64_t i = 0; i < a.size(); ++i) {
        if (std::exp(a[i]) > 1000 * 0.01) EXPECT_NEAR(b[i] - a[i], std::log(4.0), 1e-3);
    }
}

TEST(LogMel, SingleToneActivatesOverlappingFilters) {
    const int64_t N = 400, k0 = 40;  // 1600 Hz, bin-centered
    auto fb = MelFilterbank::build(64, 201, 16000.0, 125.0, 7500.0);
    auto w = sine(16000.0 * k0 / N, 1.0, 0.5);
    auto lm = log_mel(stft_magnitude(w, N, 160), fb);
    const float floor_v = std::log(0.01f);
    for (int64_t m = 0; m < 64; ++m) {
        // Energy reaches the filter only through bins k0-1..k0+1.
        const bool overlaps = fb.at(m, k0 - 1) + fb.at(m, k0) + fb.at(m, k0 + 1) > 0;
        const float v = lm[10 * 64 + m];
        if (overlaps) {
            EXPECT_GT(v, floor_v + 1.0f) << "filter " << m;
        } else {
            EXPECT_NEAR(v, floor_v, 1e-3) << "filter " << m;
        }
    }
}

TEST(Spectrogram, ShapeContractAndShift) {
    auto w = noise(16000 + 160, 5);
    Waveform first, second;
    first.samples.assign(w.samples.begin(), w.samples.begin() + 16000);
    second.samples.assign(w.samples.begin() + 160, w.samples.end());
    // 1 s with 25 ms / 10 ms framing gives 98 frames before trimming.
    EXPECT_GE(stft_magnitude(first, 400, 160).dim(0), 96);
    auto a = spectrogram(first);
    auto b = spectrogram(second);
    EXPECT_EQ(a.shape(), (Shape{96, 64}));
    for (int64_t r = 0; r + 1 < 96; ++r)
        for (int64_t m = 0; m < 64; ++m) EXPECT_NEAR(a[(r + 1) * 64 + m], b[r * 64 + m], 1e-5);
    auto again = spectrogram(first);
    EXPECT_EQ(std::vector<float>(a.data().begin(), a.data().end()),
              std::vector<float>(again.data().begin(), again.data().end()));

    Waveform wrong = first;
    wrong.sample_rate = 8000;
    EXPECT_THROW(spectrogram(wrong), InputError);
}

TEST(AudioEmbedder, ZeroHeadDeterminismAndShape) {
    ParamStore<float> store(7);
    AudioEmbedder<float> emb(store, "audio", {});
    auto spec = spectrogram(noise(16000, 6));
    auto f1 = emb(spec);
    auto f2 = emb(spec);
    EXPECT_EQ(f1.shape(), (Shape{128}));
    EXPECT_EQ(std::vector<float>(f1.data().begin(), f1.data().end()),
              std::vector<float>(f2.data().begin(), f2.data().end()));
    for (auto& v : emb.head().weight.mutable_data()) v = 0;
    auto z = emb(spec);
    for (auto v : z.data()) EXPECT_EQ(v, 0.0f);
    EXPECT_THROW(emb(Tensor<float>::zeros({90, 64})), DimensionError);
}

TEST(AudioEmbedder, SeparatesPitchButNotTimeShift) {
    ParamStore<float> store(10);
    AudioEmbedder<float> emb(store, "audio", {});
    auto embed = [&](double hz, int64_t shift) {
        auto w = sine(hz, 1.1);
        w.samples.erase(w.samples.begin(), w.samples.begin() + shift);
        w.samples.resize(16000);
        return emb(spectrogram(w));
    };
    auto dist = [](const Tensor<float>& a, const Tensor<float>& b) {
        double d = 0;
        for (int64_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(d);
    };
    const auto low = embed(400, 0), low_shifted = embed(400, 777), high = embed(2000, 0);
    EXPECT_GT(dist(low, high), 20 * dist(low, low_shifted));
}

TEST(AudioEmbedder, GradientCheck) {
    ParamStore<double> store(8);
    EmbedderConfig cfg;
    cfg.conv1 = 2;
    cfg.conv2 = 3;
    cfg.dim = 4;
    AudioEmbedder<double> emb(store, "audio", cfg);
    Rng rng(9);
    auto spec = casp::testing::random_tensor<double>({96, 64}, rng, -3, 1);
    std::vector<Tensor<double>> params;
    for (auto& [n, t] : store.items()) params.push_back(t);
    auto r = casp::testing::grad_check([&] { return casp::testing::weighted_sum(emb(spec)); }, params);
    EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(Wav, RoundTrip) {
    auto w = sine(440, 0.1, 0.7);
    const auto path = std::filesystem::temp_directory_path() / "casp_test.wav";
    write_wav(path, w);
    auto r = read_wav(path);
    EXPECT_EQ(r.sample_rate, 16000.0);
    ASSERT_EQ(r.samples.size(), w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32767);
    std::filesystem::remove(path);

    Waveform bad;
    bad.samples = {1.5f};
    EXPECT_THROW(bad.validate(), InputError);
}
