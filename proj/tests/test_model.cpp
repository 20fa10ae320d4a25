#include "tddn/model.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

using namespace tddn;
using tddn::testing::check_model_gradients;
using tddn::testing::random_params;
using tddn::testing::random_tensor;
using tddn::testing::tiny_config;

namespace {

TddnConfig small_attention_config(std::size_t w, std::size_t m, std::size_t da = 0) {
    TddnConfig c;
    c.window = w;
    c.m = m;
    c.conv_channels = {1};
    c.attention_size = da;
    return c;
}

Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

} // namespace

TEST(Init, DeterministicPerSeed) {
    TddnConfig c = tiny_config(11);
    const auto a = init_params(c), b = init_params(c);
    ASSERT_EQ(a.list.size(), b.list.size());
    for (std::size_t i = 0; i < a.list.size(); ++i) EXPECT_EQ(a.list[i].value, b.list[i].value) << a.list[i].name;
    c.seed = 12;
    const auto d = init_params(c);
    EXPECT_NE(a.conv_filters(0).value, d.conv_filters(0).value);
}

TEST(Init, BiasesZeroWeightsWithinGlorotLimit) {
    const auto p = init_params(tiny_config(3));
    for (const auto& prm : p.list) {
        if (prm.name.ends_with(".bias")) {
            for (double v : prm.value.values()) EXPECT_EQ(v, 0.0) << prm.name;
        } else {
            const auto& s = prm.value.shape();
            double fin = 0, fout = 0;
            if (s.size() == 3) {
                fin = double(s[1] * s[2]);
                fout = double(s[1] * s[0]);
            } else if (s.size() == 2) {
                fin = double(s[1]);
                fout = double(s[0]);
            } else {
                fin = double(s[0]);
                fout = 1;
            }
            const double lim = std::sqrt(6.0 / (fin + fout));
            bool any_nonzero = false;
            for (double v : prm.value.values()) {
                EXPECT_LE(std::abs(v), lim) << prm.name;
                any_nonzero |= v != 0.0;
            }
            EXPECT_TRUE(any_nonzero) << prm.name;
        }
    }
}

TEST(Init, ParameterOrderAndNames) {
    const auto p = init_params(tiny_config(0));
    std::vector<std::string> names;
    for (const auto& prm : p.list) names.push_back(prm.name);
    const std::vector<std::string> expect{"conv1.filters",    "conv1.bias",        "conv2.filters",     "conv2.bias",
                                          "conv3.filters",    "conv3.bias",        "abstract.weight",   "abstract.bias",
                                          "attention.weight", "attention.bias",    "attention.context", "regressor1.weight",
                                          "regressor1.bias",  "regressor2.weight", "regressor2.bias"};
    EXPECT_EQ(names, expect);
}

TEST(Config, WindowTooSmallForDepthIsError) {
    TddnConfig c;
    c.window = 4;
    EXPECT_THROW(c.validate(), ConfigError); // three pooling stages need w >= 8
    c.window = 8;
    EXPECT_NO_THROW(c.validate());
    c.conv_channels = {32, 64};
    c.window = 4;
    EXPECT_NO_THROW(c.validate());
    c.conv_channels = {};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, DepthSweepChannels) {
    EXPECT_EQ(default_conv_channels(1), (std::vector<std::size_t>{32}));
    EXPECT_EQ(default_conv_channels(4), (std::vector<std::size_t>{32, 64, 128, 256}));
    EXPECT_THROW(default_conv_channels(0), ConfigError);
}

TEST(ParameterCount, DefaultConfiguration) {
    EXPECT_EQ(parameter_count(TddnConfig{}), 1009769u);
}

TEST(ParameterCount, ClosedFormMatchesAllocation) {
    for (std::size_t w : {8u, 16u, 30u, 64u})
        for (std::size_t m : {1u, 15u, 24u})
            for (std::size_t depth : {1u, 2u, 3u}) {
                TddnConfig c;
                c.window = w;
                c.m = m;
                c.conv_channels = default_conv_channels(depth);
                EXPECT_EQ(parameter_count(c), init_params(c).count());
            }
}

TEST(Shapes, TemporalFeaturesForDefaultWindow) {
    TddnConfig c;
    const auto p = init_params(c);
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({64, 15}, rng);
    EXPECT_EQ(conv_stack(p, x).shape(), (Shape{1, 8, 128}));
    const auto pred = forward(p, x);
    EXPECT_EQ(pred.diag.temporal.shape(), (Shape{8, 128}));
    EXPECT_EQ(pred.diag.abstract.shape(), (Shape{64, 15}));
    EXPECT_EQ(pred.diag.lambda.shape(), (Shape{64}));
    EXPECT_EQ(pred.diag.state.shape(), (Shape{15}));
}

TEST(Shapes, TemporalFeaturesForWindow16) {
    TddnConfig c;
    c.window = 16;
    const auto p = init_params(c);
    EXPECT_EQ(conv_stack(p, Tensor({16, 15})).shape(), (Shape{1, 2, 128}));
}

TEST(Shapes, WrongWindowIsShapeError) {
    const auto p = init_params(tiny_config(0));
    EXPECT_THROW(forward(p, Tensor({9, 3})), ShapeError);
    EXPECT_THROW(forward(p, Tensor({8, 4})), ShapeError);
}

TEST(Forward, AbstractFeaturesNonNegative) {
    std::mt19937_64 rng(9);
    auto p = random_params(tiny_config(9), rng);
    for (int t = 0; t < 20; ++t) {
        const auto pr = forward(p, random_tensor({8, 3}, rng));
        for (double v : pr.diag.abstract.values()) EXPECT_GE(v, 0.0);
    }
}

TEST(Forward, ZeroInputWithZeroBiasesGivesZero) {
    const auto p = init_params(tiny_config(5));
    const auto pr = forward(p, Tensor({8, 3}));
    EXPECT_EQ(pr.rul, 0.0);
    for (double v : pr.diag.temporal.values()) EXPECT_EQ(v, 0.0);
    for (double v : pr.diag.lambda.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 8);
}

TEST(Forward, BatchMatchesSingleWindow) {
    std::mt19937_64 rng(21);
    auto p = random_params(tiny_config(21), rng);
    const Tensor batch = random_tensor({5, 8, 3}, rng);
    const auto y = forward_batch(p, batch);
    ASSERT_EQ(y.size(), 5u);
    for (std::size_t b = 0; b < 5; ++b) {
        Tensor one({8, 3}, std::vector<double>(batch.data() + b * 24, batch.data() + (b + 1) * 24));
        EXPECT_NEAR(forward(p, one).rul, y[b], 1e-12); // GEMM blocking may differ by batch size
    }
}

TEST(Forward, Deterministic) {
    std::mt19937_64 rng(2);
    TddnConfig c;
    c.seed = 77;
    const auto p1 = init_params(c), p2 = init_params(c);
    const Tensor x = random_tensor({64, 15}, rng);
    EXPECT_EQ(forward(p1, x).rul, forward(p2, x).rul);
}

TEST(Attention, StackedInputLayout) {
    const Tensor H({1, 2, 2}, std::vector<double>{1, 2, 4, 8});
    const Tensor S = stack_attention_input(H);
    ASSERT_EQ(S.shape(), (Shape{2, 8}));
    const std::vector<double> row0{1, 2, 1, 2, 0, 0, 1, 4};
    const std::vector<double> row1{4, 8, 1, 2, 3, 6, 4, 16};
    for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(S.at(0, k), row0[k]);
        EXPECT_EQ(S.at(1, k), row1[k]);
    }
}

// Oracle values computed independently in double precision.
TEST(Attention, HandTraceTwoRows) {
    auto p = init_params(small_attention_config(2, 1));
    p.attention_weight().value = matrix(2, 4, {1, 0, 0, 0, 0, 0, 1, 1});
    p.attention_bias().value = Tensor::vector({0.0, 0.1});
    p.context().value = Tensor::vector({1.0, -1.0});
    const auto out = attention(p, Tensor({2, 1}, std::vector<double>{0.5, 1.5}));
    EXPECT_NEAR(out.lambda[0], 0.5429785069175918, 1e-14);
    EXPECT_NEAR(out.lambda[1], 0.45702149308240814, 1e-14);
    EXPECT_NEAR(out.state[0], 0.9570214930824081, 1e-14);
}

TEST(Attention, IdenticalRowsGiveUniformWeightsAndFirstRow) {
    std::mt19937_64 rng(8);
    const std::size_t w = 6, m = 4;
    auto p = random_params(small_attention_config(w, m), rng);
    const Tensor row = random_tensor({m}, rng, 0, 2);
    Tensor H({w, m});
    for (std::size_t i = 0; i < w; ++i)
        for (std::size_t k = 0; k < m; ++k) H.at(i, k) = row[k];
    const auto out = attention(p, H);
    for (std::size_t i = 0; i < w; ++i) EXPECT_NEAR(out.lambda[i], 1.0 / w, 1e-15);
    for (std::size_t k = 0; k < m; ++k) EXPECT_NEAR(out.state[k], row[k], 1e-14);
}

TEST(Attention, DominantScoreConcentratesWeight) {
    auto p = init_params(small_attention_config(3, 1, 1));
    p.attention_weight().value = matrix(1, 4, {1, 0, 0, 0});
    p.attention_bias().value = Tensor({1});
    const Tensor H({3, 1}, std::vector<double>{0.1, 0.1, 0.5});
    double prev = 0.0;
    for (double c = 1.0; c <= 64.0; c *= 2.0) {
        p.context().value = Tensor::vector({c});
        const auto out = attention(p, H);
        EXPECT_GT(out.lambda[2], prev);
        prev = out.lambda[2];
    }
    EXPECT_GT(prev, 0.999);
}

// Property: every row of lambda is positive and sums to one, for random
// parameters and inputs across configurations.
TEST(Attention, WeightsFormDistribution) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t w = 2 + rng() % 40, m = 1 + rng() % 10;
        auto p = random_params(small_attention_config(w, m, 1 + rng() % 12), rng);
        const auto out = attention(p, random_tensor({3, w, m}, rng, 0, 3));
        for (std::size_t b = 0; b < 3; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < w; ++i) {
                EXPECT_GT(out.lambda.at(b, i), 0.0);
                s += out.lambda.at(b, i);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Regress, HandArithmetic) {
    TddnConfig c = small_attention_config(2, 2);
    c.regressor_hidden = 2;
    auto p = init_params(c);
    p.reg1_weight().value = matrix(2, 2, {1, 0, 0, -1});
    p.reg1_bias().value = Tensor::vector({0.5, 0.0});
    p.reg2_weight().value = matrix(1, 2, {2, 3});
    p.reg2_bias().value = Tensor::vector({10});
    // hidden = relu([1+0.5, -2]) = [1.5, 0]; out = 3 + 10
    EXPECT_EQ(regress(p, Tensor::vector({1.0, 2.0}))[0], 13.0);
}

TEST(Prediction, ClampedToRange) {
    auto p = init_params(tiny_config(1));
    p.reg2_weight().value.fill(0.0);
    p.reg2_bias().value = Tensor::vector({131.7});
    EngineTrajectory e;
    e.unit_id = 1;
    e.rows.resize(5);
    SensorSelection sel;
    sel.subset = Subset::FD001;
    sel.columns = {{ColumnId::Kind::Sensor, 2}, {ColumnId::Kind::Sensor, 3}, {ColumnId::Kind::Sensor, 4}};
    const Scaler sc = fit_scaler({e}, sel);
    const LabelPolicy pol;
    const auto y = predict_engine(e, p, sc, sel, pol);
    ASSERT_EQ(y.size(), 5u);
    for (double v : y) EXPECT_EQ(v, 120.0);
    p.reg2_bias().value = Tensor::vector({-4.0});
    for (double v : predict_engine(e, p, sc, sel, pol)) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(clamp_rul(57.25, pol), 57.25);
}

TEST(Backward, RequiresForward) {
    auto p = init_params(tiny_config(0));
    ForwardTrace tr;
    std::vector<double> d{1.0};
    EXPECT_THROW(backward(tr, p, d), Error);
    forward_batch(p, Tensor({8, 3}), &tr);
    backward(tr, p, d);
    EXPECT_THROW(backward(tr, p, d), Error); // trace consumed
}

TEST(Backward, AccumulatesAcrossCalls) {
    std::mt19937_64 rng(4);
    auto p = random_params(tiny_config(4), rng);
    const Tensor x = random_tensor({2, 8, 3}, rng);
    std::vector<double> d{0.7, -1.3};
    ForwardTrace tr;
    forward_batch(p, x, &tr);
    backward(tr, p, d);
    const Tensor once = p.reg2_weight().grad;
    forward_batch(p, x, &tr);
    backward(tr, p, d);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(p.reg2_weight().grad[i], 2 * once[i], 1e-12);
}

// Full-model finite-difference check over many random draws.
TEST(GradCheck, WholeModel) {
    std::size_t checked = 0, skipped = 0, failed = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        std::mt19937_64 rng(100 + seed);
        auto p = random_params(tiny_config(seed), rng);
        const std::size_t B = 1 + seed % 3;
        const Tensor x = random_tensor({B, 8, 3}, rng);
        std::vector<double> r(B);
        for (auto& v : r) v = std::uniform_real_distribution<double>(-1, 1)(rng);
        const auto st = check_model_gradients(p, x, r);
        checked += st.checked;
        skipped += st.skipped_kinks;
        failed += st.failed;
        worst = std::max(worst, st.worst);
    }
    EXPECT_EQ(failed, 0u) << "worst relative error " << worst;
    EXPECT_GT(checked, 1000u);
    RecordProperty("skipped_kinks", static_cast<int>(skipped));
}

TEST(GradCheck, AttentionSizeDiffersFromWindow) {
    std::mt19937_64 rng(55);
    TddnConfig c = tiny_config(55);
    c.attention_size = 5;
    c.conv_channels = {3, 5};
    auto p = random_params(c, rng);
    const auto st = check_model_gradients(p, random_tensor({2, 8, 3}, rng), {1.0, -0.5});
    EXPECT_EQ(st.failed, 0u) << "worst " << st.worst;
}
