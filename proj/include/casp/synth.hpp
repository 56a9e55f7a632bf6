#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "casp/config.hpp"
#include "casp/io.hpp"

namespace casp {

// Each palette entry pairs a blob colour with its signature tone.
struct PaletteEntry {
    std::array<float, 3> rgb;
    double tone_hz;
};
const std::vector<PaletteEntry>& palette();

struct BlobTrack {
    int64_t palette = 0;
    double x0 = 0, y0 = 0;  // centre at frame 0, pixels
    double vx = 0, vy = 0;  // pixels per frame
    double amplitude = 1.0;

    std::array<double, 2> centre(double frame) const { return {x0 + vx * frame, y0 + vy * frame}; }
    double speed() const;
};

struct Sample {
    std::string id;
    Consistency mode = Consistency::Consistent;  // per clip: consistent or inconsistent
    std::vector<BlobTrack> blobs;
    int64_t tone_palette = 0;  // palette entry whose tone is on the soundtrack
    int64_t fixated = 0;       // index into `blobs`
    Tensor<float> clip;        // [3, T, H, W] in [0, 1]
    Waveform audio;            // 16-bit exact samples, frames / fps seconds
    Tensor<float> fixations;   // [H, W] binary
    Tensor<float> dense;       // [H, W], sums to 1

    // Mean centre of the fixated blob over the clip, (x, y).
    std::array<double, 2> fixated_trajectory_mean(int64_t frames) const;
};

using Dataset = std::vector<Sample>;

Sample synth_sample(const SynthConfig& cfg, int64_t index);
Dataset synth_generate(const SynthConfig& cfg);

// Layout: <dir>/manifest.json plus <dir>/<id>/{video.cspt,audio.wav,fixations.cspt,dense.cspt,dense.pgm}.
void save_dataset(const std::filesystem::path& dir, const SynthConfig& cfg, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace casp
