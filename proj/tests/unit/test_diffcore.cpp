#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fsv/diffcore/grad_check.hpp"
#include "fsv/diffcore/ops.hpp"
#include "fsv/diffcore/params.hpp"

using namespace fsv;
using namespace fsv::dc;

namespace {

template <class T = float>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(d(rng));
    return BasicTensor<T>(std::move(shape), std::move(v));
}

// Independent direct-summation oracles.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
    const auto m = a.dim(0), p = a.dim(1), n = b.dim(1);
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < p; ++k) c[i * n + j] += double(a[i * p + k]) * double(b[k * n + j]);
    return c;
}

std::vector<double> naive_conv2d(const Tensor& x, const Tensor& k, std::size_t s, std::size_t pad) {
    const long C = x.dim(0), H = x.dim(1), W = x.dim(2), O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const long Ho = (H + 2 * pad - kh) / s + 1, Wo = (W + 2 * pad - kw) / s + 1;
    std::vector<double> out(O * Ho * Wo, 0.0);
    for (long o = 0; o < O; ++o)
        for (long oy = 0; oy < Ho; ++oy)
            for (long ox = 0; ox < Wo; ++ox) {
                double acc = 0;
                for (long c = 0; c < C; ++c)
                    for (long i = 0; i < kh; ++i)
                        for (long j = 0; j < kw; ++j) {
                            long y = oy * long(s) + i - long(pad), xx = ox * long(s) + j - long(pad);
                            if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                            acc += double(x[(c * H + y) * W + xx]) * double(k[((o * C + c) * kh + i) * kw + j]);
                        }
                out[(o * Ho + oy) * Wo + ox] = acc;
            }
    return out;
}

std::vector<double> naive_conv3d(const Tensor& x, const Tensor& k) {
    const long C = x.dim(0), T = x.dim(1), H = x.dim(2), W = x.dim(3), O = k.dim(0);
    std::vector<double> out(O * T * H * W, 0.0);
    for (long o = 0; o < O; ++o)
        for (long t = 0; t < T; ++t)
            for (long y = 0; y < H; ++y)
                for (long xx = 0; xx < W; ++xx) {
                    double acc = 0;
                    for (long c = 0; c < C; ++c)
                        for (long a = 0; a < 3; ++a)
                            for (long b = 0; b < 3; ++b)
                                for (long d = 0; d < 3; ++d) {
                                    long tt = t + a - 1, yy = y + b - 1, x3 = xx + d - 1;
                                    if (tt < 0 || tt >= T || yy < 0 || yy >= H || x3 < 0 || x3 >= W) continue;
                                    acc += double(x[((c * T + tt) * H + yy) * W + x3]) *
                                           double(k[(((o * C + c) * 3 + a) * 3 + b) * 3 + d]);
                                }
                    out[((o * T + t) * H + y) * W + xx] = acc;
                }
    return out;
}

template <class V>
double max_abs_diff(std::span<const float> a, const V& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace

TEST(Matmul, IdentityAndScalar) {
    std::mt19937_64 rng(1);
    Tensor eye(Shape{3, 3}, std::vector<float>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto b = random_tensor(Shape{3, 4}, rng);
    auto c = matmul(eye, b);
    EXPECT_EQ(c.shape(), b.shape());
    for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(c[i], b[i]);
    auto six = matmul(Tensor(Shape{1, 1}, 2.0f), Tensor(Shape{1, 1}, 3.0f));
    EXPECT_FLOAT_EQ(six.item(), 6.0f);
}

TEST(Matmul, MatchesTripleLoop) {
    std::mt19937_64 rng(2);
    auto a = random_tensor(Shape{3, 3}, rng);
    auto b = random_tensor(Shape{3, 3}, rng);
    EXPECT_LT(max_abs_diff(matmul(a, b).data(), naive_matmul(a, b)), 1e-6);
}

TEST(Matmul, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
}

TEST(Conv2d, UnitKernelIsIdentity) {
    std::mt19937_64 rng(3);
    auto x = random_tensor(Shape{1, 5, 6}, rng);
    auto y = conv2d(x, Tensor(Shape{1, 1, 1, 1}, 1.0f), Tensor{}, {1, 1}, {0, 0});
    EXPECT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, AllOnesKernelSumsWindow) {
    Tensor x(Shape{1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    auto y = conv2d(x, Tensor(Shape{1, 1, 2, 2}, 1.0f), Tensor{});
    EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_FLOAT_EQ(y.item(), 10.0f);
}

TEST(Conv2d, MatchesNaiveOracleWithStrideAndPadding) {
    std::mt19937_64 rng(4);
    auto x = random_tensor(Shape{3, 8, 8}, rng);
    auto k = random_tensor(Shape{4, 3, 3, 3}, rng);
    for (std::size_t s : {1u, 2u}) {
        for (std::size_t p : {0u, 1u}) {
            auto y = conv2d(x, k, Tensor{}, {s, s}, {p, p});
            EXPECT_LT(max_abs_diff(y.data(), naive_conv2d(x, k, s, p)), 1e-5);
        }
    }
}

TEST(Conv2d, BatchedEqualsPerItem) {
    std::mt19937_64 rng(5);
    auto x = random_tensor(Shape{2, 3, 6, 6}, rng);
    auto k = random_tensor(Shape{2, 3, 3, 3}, rng);
    auto b = random_tensor(Shape{2}, rng);
    auto y = conv2d(x, k, b, {2, 2}, {1, 1});
    for (std::size_t i = 0; i < 2; ++i) {
        auto yi = conv2d(select0(x, i), k, b, {2, 2}, {1, 1});
        auto row = select0(y, i);
        EXPECT_LT(max_abs_diff(row.data(), yi.data()), 1e-6);
    }
}

TEST(Conv2d, OversizedKernelThrows) {
    EXPECT_THROW(conv2d(Tensor(Shape{1, 2, 2}), Tensor(Shape{1, 1, 5, 5}), Tensor{}), ShapeError);
}

TEST(Conv3d, CenterTapIsIdentityAndZeroKernelIsZero) {
    std::mt19937_64 rng(6);
    auto x = random_tensor(Shape{1, 3, 4, 4}, rng);
    Tensor center(Shape{1, 1, 3, 3, 3});
    center.mutable_data()[13] = 1.0f;
    auto y = conv3d(x, center, Tensor{});
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
    auto z = conv3d(x, Tensor(Shape{2, 1, 3, 3, 3}), Tensor{});
    for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv3d, MatchesNaiveOracle) {
    std::mt19937_64 rng(7);
    auto x = random_tensor(Shape{2, 4, 5, 5}, rng);
    auto k = random_tensor(Shape{3, 2, 3, 3, 3}, rng);
    auto y = conv3d(x, k, Tensor{});
    EXPECT_EQ(y.shape(), (Shape{3, 4, 5, 5}));
    EXPECT_LT(max_abs_diff(y.data(), naive_conv3d(x, k)), 1e-5);
}

TEST(Pooling, ConstantInputStaysConstant) {
    Tensor x(Shape{2, 7, 7}, 0.75f);
    auto pooled = avg_pool2d(x, {2, 2}, {2, 2});
    auto adaptive = adaptive_avg_pool2d(x, {3, 5});
    for (float v : pooled.data()) EXPECT_FLOAT_EQ(v, 0.75f);
    for (float v : adaptive.data()) EXPECT_FLOAT_EQ(v, 0.75f);
}

TEST(Pooling, TwoByTwoWindow) {
    Tensor x(Shape{1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    EXPECT_FLOAT_EQ(avg_pool2d(x, {2, 2}, {2, 2}).item(), 2.5f);
}

TEST(Pooling, AdaptiveToOneIsGlobalMean) {
    std::mt19937_64 rng(8);
    auto x = random_tensor(Shape{3, 5, 7}, rng);
    auto y = adaptive_avg_pool2d(x, {1, 1});
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0;
        for (std::size_t i = 0; i < 35; ++i) s += x[c * 35 + i];
        EXPECT_NEAR(y[c], s / 35.0, 1e-6);
    }
}

TEST(Pooling, AdaptiveBinsOverlapLikeReference) {
    // 8 -> 6 bins: [0,2) [1,3) [2,4) [4,6) [5,7) [6,8)
    std::vector<float> v(8);
    for (int i = 0; i < 8; ++i) v[i] = float(i);
    auto y = adaptive_avg_pool2d(Tensor(Shape{1, 8}, v), {1, 6});
    const float expected[] = {0.5f, 1.5f, 2.5f, 4.5f, 5.5f, 6.5f};
    for (int i = 0; i < 6; ++i) EXPECT_FLOAT_EQ(y[i], expected[i]);
    EXPECT_THROW(adaptive_avg_pool2d(Tensor(Shape{1, 4, 4}), {5, 5}), ShapeError);
}

TEST(Activations, PointValues) {
    Tensor x(Shape{2}, std::vector<float>{-1, 2});
    auto r = relu(x);
    EXPECT_EQ(r[0], 0.0f);
    EXPECT_EQ(r[1], 2.0f);
    EXPECT_FLOAT_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5f);
    EXPECT_FLOAT_EQ(fsv::dc::tanh(Tensor::scalar(0)).item(), 0.0f);
    EXPECT_TRUE(std::isfinite(sigmoid(Tensor::scalar(-1000)).item()));
}

TEST(SoftmaxCrossEntropy, KnownValues) {
    EXPECT_NEAR(softmax_cross_entropy(Tensor(Shape{5}, 0.0f), 2).item(), std::log(5.0), 1e-6);
    Tensor peaked(Shape{5}, std::vector<float>{100, 0, 0, 0, 0});
    EXPECT_NEAR(softmax_cross_entropy(peaked, 0).item(), 0.0, 1e-6);
    EXPECT_THROW(softmax_cross_entropy(peaked, 5), ShapeError);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
    std::mt19937_64 rng(9);
    auto logits = random_tensor(Shape{5}, rng, -3, 3);
    logits.set_requires_grad(true);
    Tape tape;
    TapeScope<float> scope(tape);
    auto loss = softmax_cross_entropy(logits, 3);
    backward(loss);
    auto p = softmax<float>(logits.data());
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(logits.grad()[i], p[i] - (i == 3 ? 1.0f : 0.0f), 1e-6);
}

TEST(Softmax, SumsToOne) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        auto l = random_tensor(Shape{7}, rng, -50, 50);
        auto p = softmax<float>(l.data());
        double s = 0;
        for (float v : p) s += v;
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Backward, SquareGradient) {
    Tensor x = Tensor::scalar(3.0f);
    x.set_requires_grad(true);
    Tape tape;
    TapeScope<float> scope(tape);
    backward(mul(x, x));
    EXPECT_FLOAT_EQ(x.grad()[0], 6.0f);
}

TEST(Backward, UnreachableParameterGetsZero) {
    Parameters params;
    auto& x = params.add("x", Tensor::scalar(2.0f));
    auto& p = params.add("p", Tensor::scalar(5.0f));
    params.zero_grad();
    Tape tape;
    TapeScope<float> scope(tape);
    backward(square(x));
    EXPECT_FLOAT_EQ(p.grad()[0], 0.0f);
    EXPECT_FLOAT_EQ(x.grad()[0], 4.0f);
}

TEST(Backward, TwiceWithoutResetThrows) {
    Tensor x = Tensor::scalar(1.0f);
    x.set_requires_grad(true);
    Tape tape;
    TapeScope<float> scope(tape);
    auto loss = square(x);
    backward(loss);
    EXPECT_THROW(backward(loss), TapeError);
    tape.reset();
    EXPECT_THROW(backward(loss), TapeError);  // loss belongs to the old generation
    auto again = square(x);
    EXPECT_NO_THROW(backward(again));
}

TEST(Backward, NonScalarLossRejected) {
    Tensor x(Shape{2}, 1.0f);
    x.set_requires_grad(true);
    Tape tape;
    TapeScope<float> scope(tape);
    EXPECT_THROW(backward(scale(x, 2.0f)), TapeError);
}

TEST(Tape, RecordsAreTopologicallyOrdered) {
    std::mt19937_64 rng(11);
    auto w = random_tensor(Shape{3, 2}, rng);
    w.set_requires_grad(true);
    Tape tape;
    TapeScope<float> scope(tape);
    auto h = relu(matmul(random_tensor(Shape{4, 3}, rng), w));
    auto loss = sum(square(h));
    ASSERT_GE(tape.records().size(), 4u);
    for (const auto& rec : tape.records()) {
        for (auto in : rec.inputs) EXPECT_LT(in, rec.output);
    }
    EXPECT_EQ(tape.records().back().output, loss.node_id());
}

TEST(Tape, NoRecordingWithoutActiveTapeOrGrad) {
    std::mt19937_64 rng(12);
    auto a = random_tensor(Shape{2, 2}, rng);
    Tape tape;
    {
        TapeScope<float> scope(tape);
        auto b = matmul(a, a);  // no input requires grad
        EXPECT_FALSE(b.requires_grad());
    }
    EXPECT_TRUE(tape.records().empty());
}

TEST(Numeric, NonFiniteForwardThrows) {
    Tensor x(Shape{2}, std::vector<float>{1.0f, std::numeric_limits<float>::infinity()});
    EXPECT_THROW(relu(x), NumericError);
    Tensor big(Shape{1}, 1e30f);
    EXPECT_THROW(mul(big, big), NumericError);
}

TEST(Determinism, ReplayIsBitwiseIdentical) {
    std::mt19937_64 rng(13);
    auto x = random_tensor(Shape{2, 3, 9, 9}, rng);
    auto k = random_tensor(Shape{4, 3, 3, 3}, rng);
    auto a = relu(conv2d(x, k, Tensor{}, {2, 2}, {1, 1}));
    auto b = relu(conv2d(x, k, Tensor{}, {2, 2}, {1, 1}));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Shapes, ConcatSliceMeanTranspose) {
    Tensor a(Shape{2}, std::vector<float>{1, 2});
    Tensor b(Shape{1}, std::vector<float>{3});
    auto c = concat<float>({a, b}, 0);
    EXPECT_EQ(c.shape(), Shape{3});
    EXPECT_EQ(c[2], 3.0f);
    Tensor frames(Shape{2, 2}, std::vector<float>{1, 3, 3, 5});
    auto m = mean(frames, 0);
    EXPECT_FLOAT_EQ(m[0], 2.0f);
    EXPECT_FLOAT_EQ(m[1], 4.0f);
    auto s = slice(frames, 1, 1, 2);
    EXPECT_EQ(s.shape(), (Shape{2, 1}));
    EXPECT_EQ(s[1], 5.0f);
    Tensor t(Shape{2, 3, 1}, std::vector<float>{0, 1, 2, 3, 4, 5});
    auto tt = transpose01(t);
    EXPECT_EQ(tt.shape(), (Shape{3, 2, 1}));
    EXPECT_EQ(tt[1], 3.0f);
    EXPECT_THROW(concat<float>({Tensor(Shape{2, 2}), Tensor(Shape{3, 3})}, 0), ShapeError);
}

TEST(Adam, ZeroGradientAndZeroLrLeaveParametersUnchanged) {
    Parameters params;
    params.add("w", Tensor(Shape{3}, std::vector<float>{1, -2, 3}));
    params.zero_grad();
    AdamState state;
    adam_step(params, state, AdamConfig{0.1});
    EXPECT_EQ(params.at("w")[1], -2.0f);
    EXPECT_EQ(state.step, 1u);

    params.at("w").mutable_grad()[0] = 0.5f;
    adam_step(params, state, AdamConfig{0.0});
    EXPECT_EQ(params.at("w")[0], 1.0f);
    EXPECT_EQ(state.step, 2u);
}

TEST(Adam, SingleStepMatchesHandEvaluatedRecurrence) {
    Parameters64 params;
    params.add("p", Tensor64::scalar(1.0));
    params.at("p").mutable_grad()[0] = 0.3;
    BasicAdamState<double> state;
    adam_step(params, state, AdamConfig{0.1});
    // m1 = 0.03, v1 = 9e-5, m_hat = 0.3, v_hat = 0.09 -> 1 - 0.1 * 0.3 / (0.3 + 1e-8)
    EXPECT_NEAR(params.at("p")[0], 0.90000000333333332, 1e-15);
    EXPECT_NEAR(state.m["p"][0], 0.03, 1e-15);
    EXPECT_NEAR(state.v["p"][0], 9e-5, 1e-18);
}

TEST(Adam, MissingGradientThrows) {
    Parameters params;
    params.add("w", Tensor(Shape{1}));
    AdamState state;
    EXPECT_THROW(adam_step(params, state, AdamConfig{}), Error);
}

TEST(Parameters, LexicographicOrderAndUniqueNames) {
    Parameters params;
    params.add("b", Tensor(Shape{1}));
    params.add("a", Tensor(Shape{1}));
    params.add("c", Tensor(Shape{1}));
    std::string order;
    for (const auto& [name, _] : params) order += name;
    EXPECT_EQ(order, "abc");
    EXPECT_THROW(params.add("a", Tensor(Shape{1})), Error);
}

// --- gradient checks -----------------------------------------------------

namespace {

Parameters64 random_params(std::initializer_list<std::pair<const char*, Shape>> specs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Parameters64 p;
    for (const auto& [name, shape] : specs) p.add(name, random_tensor<double>(shape, rng));
    return p;
}

void expect_grad_ok(const ScalarFunction& fn, Parameters64& params, double tol = 1e-4) {
    auto report = grad_check(fn, params, GradCheckOptions{tol});
    EXPECT_TRUE(report.passed) << report.summary();
}

}  // namespace

TEST(GradCheck, LinearLayerPasses) {
    auto p = random_params({{"x", {4, 3}}, {"w", {3, 2}}, {"b", {2}}}, 20);
    expect_grad_ok([](const Parameters64& q) { return sum(square(add(matmul(q.at("x"), q.at("w")), q.at("b")))); },
                   p);
}

TEST(GradCheck, ConstantFunctionPasses) {
    auto p = random_params({{"w", {3}}}, 21);
    auto report = grad_check([](const Parameters64&) { return Tensor64::scalar(4.0); }, p);
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(GradCheck, CorruptedRuleFails) {
    auto p = random_params({{"w", {4}}}, 22);
    auto bad_square = [](const Tensor64& x) {
        std::vector<double> v(x.data().begin(), x.data().end());
        for (auto& e : v) e *= e;
        // Wrong rule: d(x^2)/dx reported as x instead of 2x.
        return custom_unary<double>(x, v, "bad_square",
                                    [](std::span<const double> in, std::span<const double> g, std::span<double> gi) {
                                        for (std::size_t i = 0; i < in.size(); ++i) gi[i] += g[i] * in[i];
                                    });
    };
    auto report = grad_check([&](const Parameters64& q) { return sum(bad_square(q.at("w"))); }, p);
    EXPECT_FALSE(report.passed);
}

TEST(GradCheck, CompositeMatmulReluCrossEntropy) {
    auto p = random_params({{"x", {1, 6}}, {"w1", {6, 5}}, {"w2", {5, 4}}}, 23);
    expect_grad_ok(
        [](const Parameters64& q) {
            auto h = relu(matmul(q.at("x"), q.at("w1")));
            return softmax_cross_entropy(matmul(h, q.at("w2")), 2);
        },
        p);
}

TEST(GradCheck, ElementwiseAndShapeOps) {
    auto p = random_params({{"a", {2, 3}}, {"b", {2, 3}}, {"c", {3}}}, 24);
    expect_grad_ok(
        [](const Parameters64& q) {
            auto s = sigmoid(q.at("a"));
            auto t = fsv::dc::tanh(q.at("b"));
            auto m = mul(s, t);
            auto d = sub(m, q.at("c"));
            auto cat = concat<double>({d, scale(q.at("a"), 0.5)}, 1);
            auto sl = slice(cat, 1, 2, 5);
            auto tr = transpose01(reshape(sl, {2, 3, 1}));
            auto mn = mean(tr, 1);
            return add(sum(square(mn)), squared_distance(select0(q.at("a"), 1), q.at("c")));
        },
        p);
}

TEST(GradCheck, Conv2dWithBiasStridePadding) {
    auto p = random_params({{"x", {2, 3, 7, 7}}, {"k", {4, 3, 3, 3}}, {"b", {4}}}, 25);
    expect_grad_ok(
        [](const Parameters64& q) { return sum(square(conv2d(q.at("x"), q.at("k"), q.at("b"), {2, 2}, {1, 1}))); }, p);
}

TEST(GradCheck, Conv3d) {
    auto p = random_params({{"x", {2, 3, 4, 4}}, {"k", {2, 2, 3, 3, 3}}, {"b", {2}}}, 26);
    expect_grad_ok([](const Parameters64& q) { return sum(square(conv3d(q.at("x"), q.at("k"), q.at("b")))); }, p);
}

TEST(GradCheck, Pooling) {
    auto p = random_params({{"x", {2, 8, 8}}}, 27);
    expect_grad_ok(
        [](const Parameters64& q) {
            auto a = avg_pool2d(q.at("x"), {2, 2}, {1, 1});
            auto b = adaptive_avg_pool2d(q.at("x"), {3, 5});
            return add(sum(square(a)), sum(square(b)));
        },
        p);
}
