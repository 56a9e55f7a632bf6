#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "casp/synth.hpp"
#include "support/toy.hpp"

using namespace casp;
namespace fs = std::filesystem;

namespace {

SynthConfig desk(Consistency mode, int64_t clips, uint64_t seed) {
    SynthConfig c;
    c.clips = clips;
    c.mode = mode;
    c.seed = seed;
    return c;
}

bool same_sample(const Sample& a, const Sample& b) {
    return a.id == b.id && a.mode == b.mode && a.tone_palette == b.tone_palette && a.fixated == b.fixated &&
           encode_cspt(a.clip) == encode_cspt(b.clip) && encode_cspt(a.fixations) == encode_cspt(b.fixations) &&
           encode_cspt(a.dense) == encode_cspt(b.dense) && a.audio.samples == b.audio.samples;
}

std::map<std::string, std::vector<uint8_t>> snapshot(const fs::path& root) {
    std::map<std::string, std::vector<uint8_t>> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
    return files;
}

}  // namespace

TEST(Synth, SeedDeterminesDatasetBytes) {
    auto a = synth_generate(desk(Consistency::Mixed, 3, 7));
    auto b = synth_generate(desk(Consistency::Mixed, 3, 7));
    auto c = synth_generate(desk(Consistency::Mixed, 3, 8));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_sample(a[i], b[i]));
    EXPECT_FALSE(same_sample(a[0], c[0]));
    // Clip i does not depend on how many clips were requested.
    EXPECT_TRUE(same_sample(a[1], synth_sample(desk(Consistency::Mixed, 1, 7), 1)));
}

TEST(Synth, ClipContents) {
    const auto cfg = desk(Consistency::Mixed, 12, 3);
    for (const auto& s : synth_generate(cfg)) {
        EXPECT_EQ(s.clip.shape(), (Shape{3, 16, 64, 96}));
        EXPECT_GE(s.blobs.size(), 1u);
        EXPECT_LE(s.blobs.size(), 3u);
        for (auto v : s.clip.data()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
        double total = 0;
        for (auto v : s.dense.data()) total += v;
        EXPECT_NEAR(total, 1.0, 1e-4);
        EXPECT_EQ(s.audio.samples.size(), 16000u);
        std::set<int64_t> colours;
        for (const auto& b : s.blobs) colours.insert(b.palette);
        EXPECT_EQ(colours.size(), s.blobs.size()) << "blob colours must be distinct";
    }
}

TEST(Synth, ConsistentFixationsFollowTheSoundingBlob) {
    const auto cfg = desk(Consistency::Consistent, 20, 11);
    for (const auto& s : synth_generate(cfg)) {
        EXPECT_EQ(s.mode, Consistency::Consistent);
        const auto& sounding = s.blobs[static_cast<std::size_t>(s.fixated)];
        EXPECT_EQ(sounding.palette, s.tone_palette);
        // Centroid of the fixation pixels against the blob's mean position over the clip.
        double sx = 0, sy = 0, n = 0;
        for (int64_t y = 0; y < cfg.height; ++y)
            for (int64_t x = 0; x < cfg.width; ++x)
                if (s.fixations[y * cfg.width + x] == 1.0f) {
                    sx += double(x);
                    sy += double(y);
                    n += 1;
                }
        double mx = 0, my = 0;
        for (int64_t t = 0; t < cfg.frames; ++t) {
            const auto c = sounding.centre(double(t));
            mx += c[0] / double(cfg.frames);
            my += c[1] / double(cfg.frames);
        }
        EXPECT_LT(std::hypot(sx / n - mx, sy / n - my), 2.0) << s.id;
    }
}

TEST(Synth, InconsistentToneIsOffScreen) {
    const auto cfg = desk(Consistency::Inconsistent, 20, 12);
    for (const auto& s : synth_generate(cfg)) {
        EXPECT_EQ(s.mode, Consistency::Inconsistent);
        const double hz = palette()[static_cast<std::size_t>(s.tone_palette)].tone_hz;
        for (const auto& b : s.blobs) EXPECT_NE(palette()[static_cast<std::size_t>(b.palette)].tone_hz, hz);
        for (const auto& b : s.blobs) EXPECT_LE(b.speed(), s.blobs[static_cast<std::size_t>(s.fixated)].speed());
    }
}

TEST(Synth, MixedModeContainsBoth) {
    int consistent = 0, inconsistent = 0;
    for (const auto& s : synth_generate(desk(Consistency::Mixed, 24, 13)))
        (s.mode == Consistency::Consistent ? consistent : inconsistent)++;
    EXPECT_GT(consistent, 0);
    EXPECT_GT(inconsistent, 0);
}

TEST(Synth, SaveLoadRoundTripAndStableFiles) {
    const auto cfg = casp::testing::toy_data(3);
    const auto data = synth_generate(cfg);
    const auto root = fs::temp_directory_path() / "casp_synth_test";
    fs::remove_all(root);
    save_dataset(root / "a", cfg, data);
    save_dataset(root / "b", cfg, synth_generate(cfg));
    const auto loaded = load_dataset(root / "a");
    ASSERT_EQ(loaded.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_TRUE(same_sample(loaded[i], data[i]));
        EXPECT_EQ(loaded[i].blobs.size(), data[i].blobs.size());
    }
    EXPECT_EQ(snapshot(root / "a"), snapshot(root / "b"));
    EXPECT_THROW(load_dataset(root / "missing"), InputError);
    fs::remove_all(root);
}

TEST(Synth, RejectsInvalidConfig) {
    auto c = desk(Consistency::Consistent, 1, 0);
    c.width = 100;
    EXPECT_THROW(synth_generate(c), ConfigError);
    c = desk(Consistency::Consistent, 0, 0);
    EXPECT_THROW(synth_generate(c), ConfigError);
    c = desk(Consistency::Consistent, 1, 0);
    c.min_blobs = 0;
    EXPECT_THROW(synth_generate(c), ConfigError);
}
