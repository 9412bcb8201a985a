#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "wsciss/errors.hpp"
#include "wsciss/losses.hpp"
#include "wsciss/pseudo_label.hpp"

using namespace wsciss;
using testutil::flat;

namespace {

std::set<int> as_set(const ImageLevelLabels& l) { return {l.classes().begin(), l.classes().end()}; }

ImageLevelLabels random_weak(Rng& rng, int classes) {
    std::vector<int> v;
    for (int c = 1; c < classes; ++c) {
        if (rng.bernoulli(0.5)) v.push_back(c);
    }
    return ImageLevelLabels(v);
}

// Labels where every class in [0, classes) owns at least two pixels.
HardLabelMap covering_labels(Rng& rng, int h, int w, int classes) {
    HardLabelMap m = testutil::random_labels(rng, h, w, classes);
    for (int c = 0; c < classes; ++c) {
        m[2 * c] = c;
        m[2 * c + 1] = c;
    }
    return m;
}

ContrastiveSamplingConfig take_all(double tau = 0.1) {
    ContrastiveSamplingConfig c;
    c.samples_per_class = 1000;
    c.temperature = tau;
    return c;
}

}  // namespace

// Closed forms and boundary values.

TEST(CePix, PerfectOneHotIsZero) {
    Rng rng(1);
    const HardLabelMap h = testutil::random_labels(rng, 3, 3, 4);
    EXPECT_NEAR(loss_ce_pix(one_hot(h, 4), h), 0.0, 1e-15);
}

TEST(CePix, UniformIsLogC) {
    Rng rng(2);
    const HardLabelMap h = testutil::random_labels(rng, 3, 3, 5);
    EXPECT_NEAR(loss_ce_pix({Tensor3(5, 3, 3, 0.2), ScoreKind::probabilities}, h), std::log(5.0), 1e-12);
    EXPECT_NEAR(ce_pix({Tensor3(5, 3, 3, 1.3), ScoreKind::logits}, h).value, std::log(5.0), 1e-12);
}

TEST(CePix, MixedGridMatchesHandSum) {
    Tensor3 p(2, 2, 2);
    const double v[4] = {0.9, 0.3, 0.6, 0.2};
    for (int i = 0; i < 4; ++i) {
        p.channel(0)[static_cast<std::size_t>(i)] = v[i];
        p.channel(1)[static_cast<std::size_t>(i)] = 1 - v[i];
    }
    const HardLabelMap h(2, 2, {0, 1, kIgnore, 1});
    const double expected = -(std::log(0.9) + std::log(0.7) + std::log(0.8)) / 3;
    EXPECT_NEAR(loss_ce_pix({p, ScoreKind::probabilities}, h), expected, 1e-12);
}

TEST(CePix, OutOfRangeLabelRejected) {
    const HardLabelMap h(1, 1, std::vector<int>{3});
    EXPECT_THROW(ce_pix({Tensor3(3, 1, 1), ScoreKind::logits}, h), ValidationError);
}

TEST(CePix, AllIgnoreIsDegenerate) {
    const auto v = ce_pix({Tensor3(3, 2, 2), ScoreKind::logits}, HardLabelMap(2, 2, kIgnore));
    EXPECT_TRUE(v.degenerate);
    EXPECT_EQ(v.value, 0.0);
}

TEST(BcePix, PerfectBinaryFitIsZero) {
    Rng rng(3);
    const LabelMap soft = one_hot(testutil::random_labels(rng, 3, 3, 3), 3);
    EXPECT_NEAR(loss_bce_pix(soft, soft), 0.0, 1e-15);
}

TEST(BcePix, HalfEverywhereIsCLog2) {
    Rng rng(4);
    const LabelMap soft = testutil::random_probs(rng, 4, 3, 3);
    EXPECT_NEAR(loss_bce_pix({Tensor3(4, 3, 3, 0.5), ScoreKind::probabilities}, soft), 4 * std::log(2.0), 1e-12);
    EXPECT_NEAR(bce_pix({Tensor3(4, 3, 3, 0.0), ScoreKind::logits}, soft).value, 4 * std::log(2.0), 1e-12);
}

TEST(BcePix, ShapeMismatchRejected) {
    EXPECT_THROW(bce_pix({Tensor3(3, 2, 2), ScoreKind::logits}, {Tensor3(2, 2, 2), ScoreKind::probabilities}),
                 ValidationError);
}

TEST(Contrastive, IdenticalPairWithoutNegativesIsZero) {
    Tensor3 f(3, 1, 2, 0.0);
    f(0, 0, 0) = f(0, 0, 1) = 1.0;
    f(1, 0, 0) = f(1, 0, 1) = 2.0;
    const auto v = contrastive(f, HardLabelMap(1, 2, 1), take_all());
    EXPECT_FALSE(v.degenerate);
    EXPECT_NEAR(v.value, 0.0, 1e-12);
}

TEST(Contrastive, OrthogonalClassesClosedForm) {
    Tensor3 f(2, 2, 2, 0.0);
    const HardLabelMap h(2, 2, {0, 0, 1, 1});
    for (int i = 0; i < 4; ++i) f.channel(h[i])[static_cast<std::size_t>(i)] = 3.0;
    // Each anchor: positive similarity 1, two negatives at 0: log(1 + 2/e).
    EXPECT_NEAR(contrastive(f, h, take_all(1.0)).value, 0.55144471393205108906, 1e-12);
}

TEST(Contrastive, SingleSamplePerClassIsDegenerate) {
    Rng rng(5);
    const HardLabelMap h(1, 3, {0, 1, 2});
    const auto v = contrastive(testutil::random_tensor(rng, 4, 1, 3), h, take_all());
    EXPECT_TRUE(v.degenerate);
    EXPECT_EQ(v.value, 0.0);
}

TEST(Contrastive, RotationInvariant) {
    Rng rng(6);
    const Tensor3 f = testutil::random_tensor(rng, 2, 4, 4);
    const HardLabelMap h = covering_labels(rng, 4, 4, 3);
    const double a = 0.7;
    Tensor3 g = f;
    for (int i = 0; i < 16; ++i) {
        const double x = f.channel(0)[static_cast<std::size_t>(i)];
        const double y = f.channel(1)[static_cast<std::size_t>(i)];
        g.channel(0)[static_cast<std::size_t>(i)] = std::cos(a) * x - std::sin(a) * y;
        g.channel(1)[static_cast<std::size_t>(i)] = std::sin(a) * x + std::cos(a) * y;
    }
    EXPECT_NEAR(contrastive(f, h, take_all()).value, contrastive(g, h, take_all()).value, 1e-10);
}

TEST(Contrastive, SubsamplingIsSeeded) {
    Rng rng(7);
    const Tensor3 f = testutil::random_tensor(rng, 4, 8, 8);
    const HardLabelMap h = covering_labels(rng, 8, 8, 3);
    ContrastiveSamplingConfig c;
    c.samples_per_class = 4;
    c.seed = 3;
    EXPECT_EQ(contrastive(f, h, c).value, contrastive(f, h, c).value);
    EXPECT_THROW(contrastive(f, HardLabelMap(4, 4), c), ValidationError);
}

TEST(BceImg, SaturatedMatchIsNearZero) {
    // Class 1 (present) owns the top half with a large logit, class 2
    // (absent) owns the bottom half with a large negative one, so the pooled
    // scores saturate to +inf and -inf respectively.
    Tensor3 z(3, 4, 4, -60.0);
    for (int i = 0; i < 8; ++i) z.channel(1)[static_cast<std::size_t>(i)] = 40.0;
    for (int i = 8; i < 16; ++i) z.channel(2)[static_cast<std::size_t>(i)] = -40.0;
    const std::vector<int> sup{1, 2};
    EXPECT_LT(loss_bce_img({z, ScoreKind::logits}, ImageLevelLabels({1}), sup), 1e-6);
}

TEST(BceImg, AbsentClassWithoutMassIsFloored) {
    // No softmax mass: pooled score 0 and focal term log(0.01), whose
    // sigmoid is 0.01 / 1.01, however negative the logits are.
    Tensor3 z(3, 4, 4, -40.0);
    for (double& v : z.channel(1)) v = 40.0;
    const std::vector<int> sup{2};
    EXPECT_NEAR(loss_bce_img({z, ScoreKind::logits}, ImageLevelLabels({1}), sup), std::log(1.01), 1e-9);
}

TEST(BceImg, HalfProbabilityPresentClassIsLog2) {
    // Uniform zero logits over 2 channels: m = 1/2, pooled score 0 and the
    // focal term (1/2)^3 log(0.51); choose the logit so the sum is exactly 0.
    const double mbar = 0.5;
    const double focal = std::pow(1 - mbar, 3) * std::log(0.01 + mbar);
    const int N = 4;
    // pooled = s * (N m) / (1 + N m) with constant logit s on every channel.
    const double s = -focal * (1 + N * mbar) / (N * mbar);
    Tensor3 z(2, 2, 2, s);
    const std::vector<int> sup{1};
    EXPECT_NEAR(loss_bce_img({z, ScoreKind::logits}, ImageLevelLabels({1}), sup), std::log(2.0), 1e-12);
}

TEST(BceImg, SupervisedClassOutsideChannelsRejected) {
    const std::vector<int> sup{3};
    EXPECT_THROW(bce_img({Tensor3(3, 2, 2), ScoreKind::logits}, ImageLevelLabels({1}), sup), ValidationError);
}

TEST(Kd, IdenticalIsZero) {
    Rng rng(8);
    const Tensor3 f = testutil::random_tensor(rng, 3, 4, 4);
    EXPECT_EQ(loss_kd(f, f), 0.0);
}

TEST(Kd, OnesDifferenceSumAndMean) {
    const Tensor3 a(2, 3, 3, 1.0);
    const Tensor3 b(2, 3, 3, 0.0);
    EXPECT_DOUBLE_EQ(loss_kd(a, b, KdConfig{false}), 18.0);
    EXPECT_DOUBLE_EQ(loss_kd(a, b, KdConfig{true}), 1.0);
    EXPECT_THROW(loss_kd(a, Tensor3(2, 3, 2)), ValidationError);
}

TEST(BceLoc, EqualLogitsGiveSelfEntropy) {
    Rng rng(9);
    const LabelMap prev = testutil::random_logits(rng, 3, 2, 2);
    double h = 0;
    for (double z : prev.scores().values()) {
        const double q = sigmoid(z);
        h -= q * std::log(q) + (1 - q) * std::log(1 - q);
    }
    Tensor3 loc(5, 2, 2, 0.3);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 4; ++i) loc.channel(c)[static_cast<std::size_t>(i)] = prev.scores().channel(c)[static_cast<std::size_t>(i)];
    }
    EXPECT_NEAR(loss_bce_loc(prev, {loc, ScoreKind::logits}), h / 4, 1e-12);
    EXPECT_GT(h, 0.0);
}

TEST(BceLoc, SaturatedMatchIsNearZero) {
    Tensor3 prev(2, 2, 2, -60.0);
    prev(1, 0, 0) = 60.0;
    EXPECT_LT(loss_bce_loc({prev, ScoreKind::logits}, {prev, ScoreKind::logits}), 1e-12);
}

TEST(BceLoc, MoreOldClassesThanLocalizerRejected) {
    EXPECT_THROW(bce_loc({Tensor3(4, 2, 2), ScoreKind::logits}, {Tensor3(3, 2, 2), ScoreKind::logits}), ValidationError);
}

TEST(Totals, FirstTaskWeights) {
    EXPECT_EQ(total_wsss(LossParts{}, LossWeights{}), 0.0);
    EXPECT_NEAR(total_wsss(LossParts{1, 1, 1, 1, 1, 1}, LossWeights{1.0, 0.1, 0.0, 0.0}), 3.1, 1e-12);
}

TEST(Totals, IncrementalWeights) {
    const LossParts ones{1, 1, 1, 1, 1, 1};
    // 3.01 from the first-task total plus 15 + 1.
    EXPECT_NEAR(total_ci_wsss(ones, LossWeights{1.0, 0.01, 15.0, 1.0}), 19.01, 1e-12);
    const LossParts p{0.3, 0.2, 0.5, 0.7, 9.0, 4.0};
    EXPECT_EQ(total_ci_wsss(p, LossWeights{1.0, 0.1, 0.0, 0.0}), total_wsss(p, LossWeights{1.0, 0.1, 0.0, 0.0}));
}

TEST(Totals, NegativeWeightRejected) { EXPECT_THROW((LossWeights{1.0, -0.1, 0, 0}.validate()), ValidationError); }

// Random-input oracle agreement.

TEST(LossOracle, AllSixTermsMatchScalarSums) {
    Rng rng(100);
    for (int trial = 0; trial < 25; ++trial) {
        const int C = 2 + static_cast<int>(rng.index(4));
        const int H = 2 + static_cast<int>(rng.index(4));
        const int W = 2 + static_cast<int>(rng.index(4));
        const LabelMap z = testutil::random_logits(rng, C, H, W);
        const HardLabelMap h = testutil::random_labels(rng, H, W, C, 0.1);
        EXPECT_NEAR(ce_pix(z, h).value, oracle::ce(flat(z.scores()), flat(h)), 1e-9);
        const LabelMap soft = testutil::random_probs(rng, C, H, W);
        EXPECT_NEAR(bce_pix(z, soft).value, oracle::bce_pix(flat(z.scores()), flat(soft.scores())), 1e-9);
        const Tensor3 f = testutil::random_tensor(rng, 3, H, W);
        const HardLabelMap fl = covering_labels(rng, H, W, 2);
        EXPECT_NEAR(contrastive(f, fl, take_all(0.5)).value, oracle::contrastive(flat(f), flat(fl), 0.5), 1e-9);
        const ImageLevelLabels weak = random_weak(rng, C);
        std::vector<int> sup;
        for (int c = 1; c < C; ++c) sup.push_back(c);
        EXPECT_NEAR(bce_img(z, weak, sup).value, oracle::bce_img(flat(z.scores()), as_set(weak), sup), 1e-9);
        const Tensor3 g = testutil::random_tensor(rng, 3, H, W);
        EXPECT_NEAR(kd(f, g).value, oracle::kd(f.values(), g.values(), true), 1e-9);
        const LabelMap prev = testutil::random_logits(rng, C - 1, H, W);
        EXPECT_NEAR(bce_loc(prev, z).value, oracle::bce_loc(flat(prev.scores()), flat(z.scores())), 1e-9);
    }
}

// Gradients against central differences on 4-class 6x6 inputs.

class Gradient : public ::testing::TestWithParam<int> {};

TEST_P(Gradient, CePix) {
    Rng rng(static_cast<std::uint64_t>(GetParam()));
    const LabelMap z = testutil::random_logits(rng, 4, 6, 6);
    const HardLabelMap h = testutil::random_labels(rng, 6, 6, 4, 0.1);
    auto f = [&](const Tensor3& t) { return ce_pix({t, ScoreKind::logits}, h).value; };
    EXPECT_LE(testutil::max_fd_error(z.scores(), f, ce_pix(z, h).grad), 1e-4);
}

TEST_P(Gradient, BcePix) {
    Rng rng(static_cast<std::uint64_t>(GetParam()));
    const LabelMap z = testutil::random_logits(rng, 4, 6, 6);
    const LabelMap s = testutil::random_probs(rng, 4, 6, 6);
    auto f = [&](const Tensor3& t) { return bce_pix({t, ScoreKind::logits}, s).value; };
    EXPECT_LE(testutil::max_fd_error(z.scores(), f, bce_pix(z, s).grad), 1e-4);
}

TEST_P(Gradient, Contrastive) {
    Rng rng(static_cast<std::uint64_t>(GetParam()));
    const Tensor3 x = testutil::random_tensor(rng, 4, 6, 6);
    const HardLabelMap h = covering_labels(rng, 6, 6, 4);
    ContrastiveSamplingConfig c;
    c.samples_per_class = 5;
    c.temperature = 0.5;
    c.seed = static_cast<std::uint64_t>(GetParam());
    auto f = [&](const Tensor3& t) { return contrastive(t, h, c).value; };
    EXPECT_LE(testutil::max_fd_error(x, f, contrastive(x, h, c).grad), 1e-4);
}

TEST_P(Gradient, BceImg) {
    Rng rng(static_cast<std::uint64_t>(GetParam()));
    const LabelMap z = testutil::random_logits(rng, 4, 6, 6);
    const ImageLevelLabels weak = random_weak(rng, 4);
    const std::vector<int> sup{1, 2, 3};
    auto f = [&](const Tensor3& t) { return bce_img({t, ScoreKind::logits}, weak, sup).value; };
    EXPECT_LE(testutil::max_fd_error(z.scores(), f, bce_img(z, weak, sup).grad), 1e-4);
}

TEST_P(Gradient, Kd) {
    Rng rng(static_cast<std::uint64_t>(GetParam()));
    const Tensor3 x = testutil::random_tensor(rng, 4, 6, 6);
    const Tensor3 p = testutil::random_tensor(rng, 4, 6, 6);
    auto f = [&](const Tensor3& t) { return kd(t, p).value; };
    EXPECT_LE(testutil::max_fd_error(x, f, kd(x, p).grad), 1e-4);
}

TEST_P(Gradient, BceLoc) {
    Rng rng(static_cast<std::uint64_t>(GetParam()));
    const LabelMap z = testutil::random_logits(rng, 4, 6, 6);
    const LabelMap prev = testutil::random_logits(rng, 3, 6, 6);
    auto f = [&](const Tensor3& t) { return bce_loc(prev, {t, ScoreKind::logits}).value; };
    EXPECT_LE(testutil::max_fd_error(z.scores(), f, bce_loc(prev, z).grad), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, Gradient, ::testing::Values(1, 2, 3));

TEST(ResizeNearest, IdentityAndUpsample) {
    Rng rng(11);
    const HardLabelMap m = testutil::random_labels(rng, 3, 3, 4);
    EXPECT_EQ(resize_nearest(m, 3, 3), m);
    const HardLabelMap up = resize_nearest(m, 6, 6);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) EXPECT_EQ(up(y, x), m(y / 2, x / 2));
    }
}
