#include "casp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace casp {

namespace {

static_assert(std::endian::native == std::endian::little, "CSPT/WAV writers assume a little-endian host");

template <class U>
void put(std::vector<uint8_t>& out, U v) {
    uint8_t b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    out.insert(out.end(), b, b + sizeof(U));
}

template <class U>
U get(const std::vector<uint8_t>& in, std::size_t& pos, const char* what) {
    if (pos + sizeof(U) > in.size()) throw InputError(std::string("truncated ") + what);
    U v;
    std::memcpy(&v, in.data() + pos, sizeof(U));
    pos += sizeof(U);
    return v;
}

}  // namespace

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> encode_cspt(const Tensor<float>& t) {
    std::vector<uint8_t> out{'C', 'S', 'P', 'T', 1, static_cast<uint8_t>(t.rank())};
    if (t.rank() > 255) throw DimensionError("CSPT supports rank <= 255");
    for (auto d : t.shape()) put<uint32_t>(out, static_cast<uint32_t>(d));
    out.reserve(out.size() + 4 * static_cast<std::size_t>(t.size()));
    for (float v : t.data()) put<float>(out, v);
    return out;
}

Tensor<float> decode_cspt(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 6 || std::memcmp(bytes.data(), "CSPT", 4) != 0) throw InputError("not a CSPT tensor");
    if (bytes[4] != 1) throw InputError("unsupported CSPT version " + std::to_string(bytes[4]));
    const int rank = bytes[5];
    std::size_t pos = 6;
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(get<uint32_t>(bytes, pos, "CSPT header"));
    const auto n = static_cast<std::size_t>(numel(shape));
    if (bytes.size() - pos != 4 * n) throw InputError("CSPT payload size does not match header " + shape_str(shape));
    Buffer<float> values(n);
    std::memcpy(values.data(), bytes.data() + pos, 4 * n);
    return Tensor<float>(shape, std::move(values));
}

void write_cspt(const std::filesystem::path& path, const Tensor<float>& t) { write_file(path, encode_cspt(t)); }

Tensor<float> read_cspt(const std::filesystem::path& path) { return decode_cspt(read_file(path)); }

void Waveform::validate() const {
    if (!(sample_rate > 0)) throw InputError("sample rate must be positive");
    for (float s : samples) {
        if (!(s >= -1.0f && s <= 1.0f)) throw InputError("waveform amplitude outside [-1, 1]");
    }
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
    w.validate();
    const auto n = static_cast<uint32_t>(w.samples.size());
    const auto rate = static_cast<uint32_t>(std::lround(w.sample_rate));
    std::vector<uint8_t> out{'R', 'I', 'F', 'F'};
    put<uint32_t>(out, 36 + 2 * n);
    for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<uint8_t>(c));
    put<uint32_t>(out, 16);
    put<uint16_t>(out, 1);  // PCM
    put<uint16_t>(out, 1);  // mono
    put<uint32_t>(out, rate);
    put<uint32_t>(out, rate * 2);
    put<uint16_t>(out, 2);
    put<uint16_t>(out, 16);
    for (char c : std::string("data")) out.push_back(static_cast<uint8_t>(c));
    put<uint32_t>(out, 2 * n);
    for (float s : w.samples) {
        const long q = std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f);
        put<int16_t>(out, static_cast<int16_t>(q));
    }
    write_file(path, out);
}

Waveform read_wav(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw InputError(path.string() + " is not a RIFF/WAVE file");
    }
    std::size_t pos = 12;
    Waveform w;
    bool have_fmt = false;
    while (pos + 8 <= bytes.size()) {
        const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
        pos += 4;
        const auto size = get<uint32_t>(bytes, pos, "WAV chunk");
        if (id == "fmt ") {
            std::size_t p = pos;
            const auto format = get<uint16_t>(bytes, p, "fmt");
            const auto channels = get<uint16_t>(bytes, p, "fmt");
            const auto rate = get<uint32_t>(bytes, p, "fmt");
            p += 6;
            const auto bits = get<uint16_t>(bytes, p, "fmt");
            if (format != 1 || channels != 1 || bits != 16) {
                throw InputError(path.string() + ": only PCM 16-bit mono WAV is supported");
            }
            w.sample_rate = rate;
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw InputError(path.string() + ": data chunk before fmt chunk");
            if (pos + size > bytes.size()) throw InputError(path.string() + ": truncated data chunk");
            for (std::size_t i = 0; i + 1 < size; i += 2) {
                int16_t s;
                std::memcpy(&s, bytes.data() + pos + i, 2);
                w.samples.push_back(static_cast<float>(s) / 32767.0f);
            }
            for (auto& s : w.samples) s = std::clamp(s, -1.0f, 1.0f);
            return w;
        }
        pos += size + (size & 1);
    }
    throw InputError(path.string() + ": no data chunk");
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& map2d, bool rescale) {
    if (map2d.rank() != 2) throw DimensionError("PGM export expects a 2D map, got " + shape_str(map2d.shape()));
    const auto h = map2d.dim(0), w = map2d.dim(1);
    float lo = 0.0f, hi = 1.0f;
    if (rescale) {
        const auto [mn, mx] = std::minmax_element(map2d.data().begin(), map2d.data().end());
        lo = *mn;
        hi = *mx > *mn ? *mx : *mn + 1.0f;
    }
    const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    for (float v : map2d.data()) {
        const float u = std::clamp((v - lo) / (hi - lo), 0.0f, 1.0f);
        out.push_back(static_cast<uint8_t>(std::lround(u * 255.0f)));
    }
    write_file(path, out);
}

}  // namespace casp
