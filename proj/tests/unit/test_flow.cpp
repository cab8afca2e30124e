#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fsv/flow/farneback.hpp"
#include "fsv/flow/preprocess.hpp"
#include "texture.hpp"

using namespace fsv;
using namespace fsv::flow;

namespace {

std::vector<Frame> constant_clip(std::size_t n, float value = 0.5f) {
    return std::vector<Frame>(n, Frame(16, 16, 3, value));
}

double median_endpoint_error(const FlowField& f, double tx, double ty) {
    std::vector<double> e;
    e.reserve(f.height * f.width);
    for (std::size_t y = 0; y < f.height; ++y)
        for (std::size_t x = 0; x < f.width; ++x) e.push_back(std::hypot(f.u(y, x) - tx, f.v(y, x) - ty));
    std::nth_element(e.begin(), e.begin() + static_cast<long>(e.size() / 2), e.end());
    return e[e.size() / 2];
}

}  // namespace

TEST(SampleFrames, ThirtyFpsToOne) {
    auto out = sample_frames(constant_clip(300), 30.0, 1.0);
    EXPECT_EQ(out.size(), 10u);
    EXPECT_EQ(sample_indices(300, 30.0, 1.0), (std::vector<std::size_t>{0, 30, 60, 90, 120, 150, 180, 210, 240, 270}));
}

TEST(SampleFrames, TwoFpsDoublesCount) {
    EXPECT_EQ(sample_indices(300, 30.0, 2.0).size(), 2 * sample_indices(300, 30.0, 1.0).size());
}

TEST(SampleFrames, ThreeSurvivorsIsTooShort) {
    EXPECT_THROW(sample_frames(constant_clip(90), 30.0, 1.0), TooShortError);
    EXPECT_NO_THROW(sample_frames(constant_clip(150), 30.0, 1.0));
}

TEST(SampleFrames, TargetAboveNativeRejected) {
    EXPECT_THROW(sample_indices(10, 1.0, 2.0), ConfigError);
}

TEST(FlowPairs, AnchorPairsWithNextNativeFrame) {
    std::vector<std::size_t> anchors{0};
    auto p = flow_pairs(300, anchors);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0], (std::pair<std::size_t, std::size_t>{0, 1}));
}

TEST(FlowPairs, TenSecondClipGivesTenPairs) {
    auto anchors = sample_indices(300, 30.0, 1.0);
    EXPECT_EQ(flow_pairs(300, anchors).size(), 10u);
}

TEST(FlowPairs, FinalAnchorUsesPredecessor) {
    std::vector<std::size_t> anchors{9};
    auto p = flow_pairs(10, anchors);
    EXPECT_EQ(p[0], (std::pair<std::size_t, std::size_t>{8, 9}));
}

TEST(NormalizeFlow, EndpointsAndMidpoint) {
    FlowField f(16, 16);
    f.u(0, 0) = 25.0f;
    f.u(0, 1) = -20.0f;
    f.u(0, 2) = 0.0f;
    f.v(0, 0) = -100.0f;
    auto t = normalize_flow(f, 20.0, {0, 0, 0}, {1, 1, 1});
    ASSERT_EQ(t.shape(), (dc::Shape{3, 16, 16}));
    EXPECT_FLOAT_EQ(t.data()[0], 1.0f);
    EXPECT_FLOAT_EQ(t.data()[1], 0.0f);
    EXPECT_FLOAT_EQ(t.data()[2], 0.5f);
    EXPECT_FLOAT_EQ(t.data()[256], 0.0f);
}

TEST(NormalizeFlow, ValuesInUnitRangeBeforeStandardization) {
    FlowField f(16, 16);
    std::mt19937 rng(5);
    std::normal_distribution<float> n(0.0f, 40.0f);
    for (auto& x : f.data) x = n(rng);
    auto t = normalize_flow(f, 20.0, {0, 0, 0}, {1, 1, 1});
    for (std::size_t i = 0; i < 2 * 256; ++i) {
        EXPECT_GE(t.data()[i], 0.0f);
        EXPECT_LE(t.data()[i], 1.0f);
    }
}

TEST(NormalizeFlow, ThirdChannelIsStandardizedZero) {
    FlowField f(16, 16);
    for (auto& x : f.data) x = 3.0f;
    auto t = normalize_flow(f, 20.0, {0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f});
    for (std::size_t i = 512; i < 768; ++i) EXPECT_FLOAT_EQ(t.data()[i], -1.0f);
    EXPECT_FLOAT_EQ(t.data()[0], static_cast<float>(((3.0 + 20.0) / 40.0 - 0.5) / 0.5));
}

TEST(NormalizeFlow, ReclampingIsStable) {
    FlowField f(16, 16);
    std::mt19937 rng(9);
    std::uniform_real_distribution<float> u(-60.0f, 60.0f);
    for (auto& x : f.data) x = u(rng);
    const std::array<float, 3> mean{0.5f, 0.5f, 0.5f}, sd{0.5f, 0.5f, 0.5f};
    auto t = normalize_flow(f, 20.0, mean, sd);
    // Invert standardization and rescaling, then normalize again.
    FlowField back(16, 16);
    for (std::size_t i = 0; i < 256; ++i)
        for (std::size_t c = 0; c < 2; ++c) back.data[i * 2 + c] = (t.data()[c * 256 + i] * sd[c] + mean[c]) * 40.0f - 20.0f;
    auto t2 = normalize_flow(back, 20.0, mean, sd);
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_NEAR(t.data()[i], t2.data()[i], 1e-5);
}

TEST(NormalizeFlow, ZeroStdRejected) {
    EXPECT_THROW(normalize_flow(FlowField(16, 16), 20.0, {0, 0, 0}, {1, 0, 1}), ConfigError);
}

TEST(Resize, SameSizeIsIdentity) {
    auto c = fixture::make_canvas(32, 1);
    Frame f = fixture::crop(c, 0, 0, 32, 32);
    EXPECT_EQ(resize_bilinear(f, 32).pixels, f.pixels);
}

TEST(Resize, ConstantStaysConstant) {
    Frame f(20, 20, 3, 0.3f);
    auto r = resize_bilinear(f, 57);
    ASSERT_EQ(r.pixels.size(), 57u * 57u * 3u);
    for (float p : r.pixels) EXPECT_FLOAT_EQ(p, 0.3f);
}

TEST(Resize, CheckerboardFourToTwo) {
    // Half-pixel centres: output (y, x) samples input at (2y + 0.5, 2x + 0.5),
    // the average of one 2x2 block, which holds two black and two white cells.
    Frame f(4, 4, 1);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) f.at(0, y, x) = static_cast<float>((x + y) % 2);
    auto r = resize_bilinear(f, 2);
    for (float p : r.pixels) EXPECT_FLOAT_EQ(p, 0.5f);
}

TEST(Resize, ExactForSeparableRampInterior) {
    // A linear ramp is reproduced exactly away from the clamped border.
    Frame f(16, 16, 1);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) f.at(0, y, x) = static_cast<float>(x) / 15.0f;
    auto r = resize_bilinear(f, 16, 32);
    for (std::size_t x = 1; x < 31; ++x) {
        const double src = (x + 0.5) * 0.5 - 0.5;
        EXPECT_NEAR(r.at(0, 5, x), src / 15.0, 1e-6);
    }
}

TEST(Standardize, MeanZeroStdOneIsIdentity) {
    auto c = fixture::make_canvas(16, 2);
    Frame g = fixture::crop(c, 0, 0, 16, 16);
    Frame f(16, 16, 3);
    for (std::size_t ch = 0; ch < 3; ++ch) std::copy(g.pixels.begin(), g.pixels.end(), f.pixels.begin() + ch * 256);
    auto t = standardize_rgb(f, {0, 0, 0}, {1, 1, 1});
    for (std::size_t i = 0; i < f.pixels.size(); ++i) EXPECT_EQ(t.data()[i], f.pixels[i]);
}

TEST(Standardize, ConstantAtMeanIsZero) {
    auto t = standardize_rgb(Frame(16, 16, 3, 0.5f), {0.5f, 0.5f, 0.5f}, {0.2f, 0.3f, 0.4f});
    for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Standardize, RoundTrip) {
    Frame f(16, 16, 3);
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& p : f.pixels) p = u(rng);
    const std::array<float, 3> mean{0.485f, 0.456f, 0.406f}, sd{0.229f, 0.224f, 0.225f};
    auto back = destandardize_rgb(standardize_rgb(f, mean, sd), mean, sd);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], f.pixels[i], 1e-6);
}

TEST(Standardize, ZeroStdRejected) {
    EXPECT_THROW(standardize_rgb(Frame(16, 16, 3), {0, 0, 0}, {0, 1, 1}), ConfigError);
}

TEST(Gray, LumaWeights) {
    Frame f(16, 16, 3);
    std::fill(f.pixels.begin(), f.pixels.begin() + 256, 1.0f);
    auto g = to_gray(f);
    EXPECT_EQ(g.channels, 1u);
    EXPECT_NEAR(g.pixels[0], 0.299f, 1e-7);
}

TEST(Frame, ValidateRejectsBadInput) {
    EXPECT_THROW(Frame(8, 16, 1).validate(), DataError);
    EXPECT_THROW(Frame(16, 16, 2).validate(), DataError);
    EXPECT_THROW(Frame(16, 16, 1, 1.5f).validate(), DataError);
    EXPECT_NO_THROW(Frame(16, 16, 3, 1.0f).validate());
}

TEST(PolyExpand, RecoversExactQuadratic) {
    // f = 3 + 2x - y + 0.5x^2 + 0.25y^2 - 0.1xy around the centre pixel.
    Plane p(31, 31);
    for (int y = 0; y < 31; ++y)
        for (int x = 0; x < 31; ++x) {
            const double dx = x - 15, dy = y - 15;
            p(y, x) = static_cast<float>(3 + 2 * dx - dy + 0.5 * dx * dx + 0.25 * dy * dy - 0.1 * dx * dy);
        }
    auto r = poly_expand(p, 5, 1.1);
    EXPECT_NEAR(r.bx(15, 15), 2.0, 1e-3);
    EXPECT_NEAR(r.by(15, 15), -1.0, 1e-3);
    EXPECT_NEAR(r.axx(15, 15), 0.5, 1e-3);
    EXPECT_NEAR(r.ayy(15, 15), 0.25, 1e-3);
    EXPECT_NEAR(r.axy(15, 15), -0.1, 1e-3);
}

TEST(Farneback, IdenticalFramesGiveZeroFlow) {
    auto c = fixture::make_canvas(128, 11);
    Frame f = fixture::crop(c, 0, 0, 128, 128);
    auto flow = farneback_flow(f, f);
    ASSERT_EQ(flow.data.size(), 128u * 128u * 2u);
    float m = 0;
    for (float v : flow.data) m = std::max(m, std::abs(v));
    EXPECT_LT(m, 0.1f);
}

TEST(Farneback, OutputShape) {
    auto c = fixture::make_canvas(48, 12);
    auto flow = farneback_flow(fixture::crop(c, 0, 0, 20, 36), fixture::crop(c, 1, 1, 20, 36));
    EXPECT_EQ(flow.height, 20u);
    EXPECT_EQ(flow.width, 36u);
    EXPECT_EQ(flow.data.size(), 20u * 36u * 2u);
}

TEST(Farneback, DimsMismatchRejected) {
    EXPECT_THROW(farneback_flow(Frame(16, 16, 1), Frame(16, 20, 1)), ShapeError);
    EXPECT_THROW(farneback_flow(Frame(16, 16, 3), Frame(16, 16, 3)), ShapeError);
}

TEST(Farneback, RecoversShiftTwoZero) {
    auto c = fixture::make_canvas(128 + 8, 13);
    // Content moves right by 2: next(x) = prev(x - 2).
    Frame prev = fixture::crop(c, 4, 4, 128, 128);
    Frame next = fixture::crop(c, 4, 2, 128, 128);
    auto flow = farneback_flow(prev, next);
    EXPECT_LT(median_endpoint_error(flow, 2.0, 0.0), 0.5);
}

TEST(Farneback, RecoversIntegerShiftsUpToThree) {
    auto c = fixture::make_canvas(128 + 8, 14);
    for (int ty = -3; ty <= 3; ++ty)
        for (int tx = -3; tx <= 3; ++tx) {
            Frame prev = fixture::crop(c, 4, 4, 128, 128);
            Frame next = fixture::crop(c, static_cast<std::size_t>(4 - ty), static_cast<std::size_t>(4 - tx), 128, 128);
            auto flow = farneback_flow(prev, next);
            EXPECT_LT(median_endpoint_error(flow, tx, ty), 0.5) << "shift (" << tx << ", " << ty << ")";
        }
}

TEST(Prepare, ShapesFollowRates) {
    auto c = fixture::make_canvas(40, 21);
    std::vector<Frame> clip;
    for (std::size_t i = 0; i < 60; ++i) {
        Frame g = fixture::crop(c, 4, 4 + (i % 4), 32, 32);
        Frame f(32, 32, 3);
        for (std::size_t ch = 0; ch < 3; ++ch) std::copy(g.pixels.begin(), g.pixels.end(), f.pixels.begin() + ch * 1024);
        clip.push_back(f);
    }
    PreprocConfig cfg;
    cfg.native_fps = 10;
    cfg.resize_to = 24;
    auto v = prepare_video(clip, cfg);
    EXPECT_EQ(v.rgb.shape(), (dc::Shape{6, 3, 24, 24}));
    EXPECT_EQ(v.flow.shape(), (dc::Shape{6, 3, 24, 24}));

    cfg.rgb_fps = FpsChoice::at(2.0);
    cfg.flow_fps = FpsChoice::single();
    v = prepare_video(clip, cfg, 7);
    EXPECT_EQ(v.rgb.dim(0), 12u);
    EXPECT_EQ(v.flow.dim(0), 1u);

    cfg.min_frames = 7;
    EXPECT_THROW(prepare_video(clip, cfg), TooShortError);
}

TEST(Prepare, SingleFrameChoiceIsSeeded) {
    std::vector<Frame> clip;
    for (std::size_t i = 0; i < 50; ++i) clip.push_back(Frame(16, 16, 3, static_cast<float>(i) / 50.0f));
    PreprocConfig cfg;
    cfg.native_fps = 5;
    cfg.resize_to = 16;
    cfg.rgb_fps = FpsChoice::single();
    auto a = prepare_video(clip, cfg, 42, true, false);
    auto b = prepare_video(clip, cfg, 42, true, false);
    EXPECT_EQ(a.rgb.dim(0), 1u);
    EXPECT_EQ(std::vector<float>(a.rgb.data().begin(), a.rgb.data().end()),
              std::vector<float>(b.rgb.data().begin(), b.rgb.data().end()));
    EXPECT_FALSE(a.flow.defined());
}
