#pragma once

#include "casp/config.hpp"

namespace casp::testing {

// Smallest configuration that still exercises every stage: 32x32 clips of 4 frames.
inline ModelConfig toy_model() {
    ModelConfig m;
    m.frames = 4;
    m.height = 32;
    m.width_px = 32;
    m.encoder.stem_channels = 2;
    m.encoder.channels = {2, 2, 4, 4};
    m.encoder.groups = 1;
    m.channels = 2;
    m.aspp_rates = {1, 2};
    m.embedder.conv1 = 2;
    m.embedder.conv2 = 2;
    m.embedder.dim = 4;
    m.decoder.width = 2;
    m.decoder.growth = 2;
    m.decoder.dense_layers = 1;
    m.decoder.groups = 1;
    return m;
}

inline SynthConfig toy_data(int64_t clips = 4) {
    SynthConfig s;
    s.clips = clips;
    s.height = 32;
    s.width = 32;
    s.frames = 4;
    s.fps = 4.0;
    s.blob_sigma = 3.0;
    s.max_speed = 0.5;
    return s;
}

}  // namespace casp::testing
