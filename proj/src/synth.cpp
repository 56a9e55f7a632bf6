#include "casp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "casp/objectives.hpp"

namespace casp {

using nlohmann::json;

const std::vector<PaletteEntry>& palette() {
    static const std::vector<PaletteEntry> p{
        {{1.0f, 0.2f, 0.2f}, 300.0},  {{0.2f, 1.0f, 0.2f}, 520.0},  {{0.2f, 0.3f, 1.0f}, 900.0},
        {{1.0f, 1.0f, 0.2f}, 1500.0}, {{1.0f, 0.2f, 1.0f}, 2500.0}, {{0.2f, 1.0f, 1.0f}, 4000.0},
    };
    return p;
}

double BlobTrack::speed() const { return std::hypot(vx, vy); }

std::array<double, 2> Sample::fixated_trajectory_mean(int64_t frames) const {
    return blobs[static_cast<std::size_t>(fixated)].centre(0.5 * static_cast<double>(frames - 1));
}

namespace {

std::string clip_id(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip_%04lld", static_cast<long long>(index));
    return buf;
}

std::vector<BlobTrack> place_blobs(const SynthConfig& cfg, Rng& rng, const std::vector<int64_t>& colours) {
    const double travel = cfg.max_speed * static_cast<double>(cfg.frames - 1) / 2.0;
    const double margin = 2.0 * cfg.blob_sigma + travel;
    const double min_gap = 3.0 * cfg.blob_sigma;
    std::vector<BlobTrack> blobs;
    for (auto colour : colours) {
        BlobTrack b;
        b.palette = colour;
        b.amplitude = 0.8;
        double mx = 0, my = 0;
        for (int attempt = 0; attempt < 200; ++attempt) {
            mx = rng.uniform(margin, std::max(margin, static_cast<double>(cfg.width) - margin));
            my = rng.uniform(margin, std::max(margin, static_cast<double>(cfg.height) - margin));
            bool clear = true;
            for (const auto& o : blobs) {
                const auto c = o.centre(0.5 * static_cast<double>(cfg.frames - 1));
                if (std::hypot(c[0] - mx, c[1] - my) < min_gap) clear = false;
            }
            if (clear) break;
        }
        b.vx = rng.uniform(-cfg.max_speed, cfg.max_speed);
        b.vy = rng.uniform(-cfg.max_speed, cfg.max_speed);
        b.x0 = mx - b.vx * static_cast<double>(cfg.frames - 1) / 2.0;
        b.y0 = my - b.vy * static_cast<double>(cfg.frames - 1) / 2.0;
        blobs.push_back(b);
    }
    return blobs;
}

Tensor<float> render(const SynthConfig& cfg, const std::vector<BlobTrack>& blobs, Rng& rng) {
    const int64_t T = cfg.frames, H = cfg.height, W = cfg.width, plane = H * W;
    Buffer<float> px(static_cast<std::size_t>(3 * T * plane));
    const double inv = 1.0 / (2.0 * cfg.blob_sigma * cfg.blob_sigma);
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                std::array<double, 3> v{0.1, 0.1, 0.1};
                for (const auto& b : blobs) {
                    const auto c = b.centre(static_cast<double>(t));
                    const double dx = static_cast<double>(x) - c[0], dy = static_cast<double>(y) - c[1];
                    const double g = b.amplitude * std::exp(-(dx * dx + dy * dy) * inv);
                    const auto& rgb = palette()[static_cast<std::size_t>(b.palette)].rgb;
                    for (int k = 0; k < 3; ++k) v[k] += g * rgb[k];
                }
                for (int k = 0; k < 3; ++k) {
                    const double noisy = v[k] + rng.uniform(-0.02, 0.02);
                    px[static_cast<std::size_t>((k * T + t) * plane + y * W + x)] =
                        static_cast<float>(std::clamp(noisy, 0.0, 1.0));
                }
            }
        }
    }
    return Tensor<float>({3, T, H, W}, std::move(px));
}

Waveform tone(const SynthConfig& cfg, double hz, Rng& rng) {
    Waveform w;
    w.sample_rate = 16000.0;
    const auto n = static_cast<int64_t>(std::llround(w.sample_rate * static_cast<double>(cfg.frames) / cfg.fps));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    w.samples.resize(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double s = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / w.sample_rate + phase) +
                         rng.uniform(-0.02, 0.02);
        // Store exactly what a 16-bit WAV round trip yields.
        const float q = static_cast<float>(std::lround(std::clamp(static_cast<float>(s), -1.0f, 1.0f) * 32767.0f));
        w.samples[static_cast<std::size_t>(i)] = q / 32767.0f;
    }
    return w;
}

}  // namespace

Sample synth_sample(const SynthConfig& cfg, int64_t index) {
    cfg.validate();
    Rng rng(cfg.seed, "clip/" + std::to_string(index));
    Sample s;
    s.id = clip_id(index);
    s.mode = cfg.mode;
    if (cfg.mode == Consistency::Mixed) s.mode = rng.uniform() < 0.5 ? Consistency::Consistent : Consistency::Inconsistent;

    const auto n_blobs = cfg.min_blobs + static_cast<int64_t>(rng.below(static_cast<uint64_t>(cfg.max_blobs - cfg.min_blobs + 1)));
    std::vector<int64_t> order(palette().size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    const std::vector<int64_t> colours(order.begin(), order.begin() + n_blobs);
    s.blobs = place_blobs(cfg, rng, colours);

    if (s.mode == Consistency::Consistent) {
        s.fixated = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n_blobs)));
        s.tone_palette = s.blobs[static_cast<std::size_t>(s.fixated)].palette;
    } else {
        // The soundtrack belongs to an absent source; gaze follows the fastest mover.
        s.tone_palette = order[static_cast<std::size_t>(n_blobs) +
                               rng.below(static_cast<uint64_t>(static_cast<int64_t>(order.size()) - n_blobs))];
        s.fixated = std::max_element(s.blobs.begin(), s.blobs.end(),
                                     [](const BlobTrack& a, const BlobTrack& b) { return a.speed() < b.speed(); }) -
                    s.blobs.begin();
    }

    s.clip = render(cfg, s.blobs, rng);
    s.audio = tone(cfg, palette()[static_cast<std::size_t>(s.tone_palette)].tone_hz, rng);

    Buffer<float> fix(static_cast<std::size_t>(cfg.height * cfg.width), 0.0f);
    const auto m = s.fixated_trajectory_mean(cfg.frames);
    for (int64_t k = 0; k < cfg.fixations; ++k) {
        const double x = m[0] + cfg.fixation_jitter * rng.normal();
        const double y = m[1] + cfg.fixation_jitter * rng.normal();
        const auto xi = std::clamp<int64_t>(std::llround(x), 0, cfg.width - 1);
        const auto yi = std::clamp<int64_t>(std::llround(y), 0, cfg.height - 1);
        fix[static_cast<std::size_t>(yi * cfg.width + xi)] = 1.0f;
    }
    s.fixations = Tensor<float>({cfg.height, cfg.width}, std::move(fix));
    s.dense = fixation_to_dense(s.fixations, cfg.dense_sigma);
    return s;
}

Dataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Dataset d;
    d.reserve(static_cast<std::size_t>(cfg.clips));
    for (int64_t i = 0; i < cfg.clips; ++i) d.push_back(synth_sample(cfg, i));
    return d;
}

namespace {

json blob_json(const BlobTrack& b) {
    return {{"palette", b.palette}, {"x0", b.x0}, {"y0", b.y0}, {"vx", b.vx}, {"vy", b.vy}, {"amplitude", b.amplitude}};
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const SynthConfig& cfg, const Dataset& data) {
    std::filesystem::create_directories(dir);
    json clips = json::array();
    for (const auto& s : data) {
        const auto sub = dir / s.id;
        std::filesystem::create_directories(sub);
        write_cspt(sub / "video.cspt", s.clip);
        write_wav(sub / "audio.wav", s.audio);
        write_cspt(sub / "fixations.cspt", s.fixations);
        write_cspt(sub / "dense.cspt", s.dense);
        write_pgm(sub / "dense.pgm", s.dense, true);
        json blobs = json::array();
        for (const auto& b : s.blobs) blobs.push_back(blob_json(b));
        clips.push_back({{"id", s.id},
                         {"mode", to_string(s.mode)},
                         {"tone_palette", s.tone_palette},
                         {"tone_hz", palette()[static_cast<std::size_t>(s.tone_palette)].tone_hz},
                         {"fixated", s.fixated},
                         {"blobs", blobs}});
    }
    json manifest{{"frames", cfg.frames},
                  {"height", cfg.height},
                  {"width", cfg.width},
                  {"fps", cfg.fps},
                  {"seed", cfg.seed},
                  {"mode", to_string(cfg.mode)},
                  {"clips", clips}};
    const auto text = manifest.dump(2) + "\n";
    write_file(dir / "manifest.json", std::vector<uint8_t>(text.begin(), text.end()));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto bytes = read_file(dir / "manifest.json");
    json m;
    try {
        m = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw InputError((dir / "manifest.json").string() + ": " + e.what());
    }
    Dataset d;
    try {
        for (const auto& c : m.at("clips")) {
            Sample s;
            s.id = c.at("id").get<std::string>();
            s.mode = parse_consistency(c.at("mode").get<std::string>());
            s.tone_palette = c.at("tone_palette").get<int64_t>();
            s.fixated = c.at("fixated").get<int64_t>();
            for (const auto& b : c.at("blobs")) {
                BlobTrack t;
                t.palette = b.at("palette").get<int64_t>();
                t.x0 = b.at("x0").get<double>();
                t.y0 = b.at("y0").get<double>();
                t.vx = b.at("vx").get<double>();
                t.vy = b.at("vy").get<double>();
                t.amplitude = b.at("amplitude").get<double>();
                s.blobs.push_back(t);
            }
            const auto sub = dir / s.id;
            s.clip = read_cspt(sub / "video.cspt");
            s.audio = read_wav(sub / "audio.wav");
            s.fixations = read_cspt(sub / "fixations.cspt");
            s.dense = read_cspt(sub / "dense.cspt");
            d.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw InputError((dir / "manifest.json").string() + ": malformed manifest: " + e.what());
    } catch (const ConfigError& e) {
        throw InputError((dir / "manifest.json").string() + ": " + e.what());
    }
    if (d.empty()) throw InputError("dataset at " + dir.string() + " has no clips");
    return d;
}

}  // namespace casp
