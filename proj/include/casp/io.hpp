#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "casp/tensor.hpp"

namespace casp {

// CSPT tensor files: "CSPT", u8 version (1), u8 rank, rank x u32 LE extents,
// then product(extents) x f32 LE values.
std::vector<uint8_t> encode_cspt(const Tensor<float>& t);
Tensor<float> decode_cspt(const std::vector<uint8_t>& bytes);
void write_cspt(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_cspt(const std::filesystem::path& path);

struct Waveform {
    std::vector<float> samples;
    double sample_rate = 16000.0;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
    // Throws InputError unless sample_rate > 0 and amplitudes lie in [-1, 1].
    void validate() const;
};

// PCM 16-bit mono RIFF/WAVE.
void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

// 8-bit binary PGM; values are clamped to [0,1] (or min-max scaled when `rescale`).
void write_pgm(const std::filesystem::path& path, const Tensor<float>& map2d, bool rescale = false);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

}  // namespace casp
