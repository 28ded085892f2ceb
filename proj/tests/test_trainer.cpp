#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>

#include <gtest/gtest.h>

#include "srim/errors.hpp"
#include "srim/imle_trainer.hpp"
#include "srim/nn_search.hpp"
#include "srim/resample.hpp"
#include "test_util.hpp"

using namespace srim;

namespace {

SubNetworkConfig tiny_net() {
    SubNetworkConfig c;
    c.conv_layers = 2;
    c.kernel = 3;
    c.hidden_channels = 4;
    c.noise_channels = 1;
    return c;
}

PairedDataset toy_set(int count, int target, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PairedDataset set;
    for (int i = 0; i < count; ++i) {
        set.pairs.push_back(make_pair("t" + std::to_string(i) + ".png", test::smooth_u8(target, target, rng), target, 4));
    }
    return set;
}

struct Fixture {
    PairedDataset data;
    FeatureExtractor features;
    std::optional<ProjectionMatrix> projection;
    std::unique_ptr<ImleProblem> problem;

    Fixture(int count, int target, int projection_dim, LowerStageMetric metric = LowerStageMetric::pixel)
        : data(toy_set(count, target, 17)), features(make_random_convnet_extractor(target, target, 3)) {
        std::vector<Image01> cal;
        for (const auto& p : data.pairs) cal.push_back(to_unit(p.target));
        features.weights = calibrate_weights(features, cal);
        if (projection_dim > 0) projection.emplace(projection_dim, features.dimension(), 5);
        problem = std::make_unique<ImleProblem>(data, features, projection ? &*projection : nullptr, metric);
    }
};

TrainConfig small_config() {
    TrainConfig c;
    c.iterations = 3;
    c.inner_steps = 2;
    c.m_lower = 3;
    c.m_upper = 3;
    c.batch_outer = 3;
    c.batch_inner = 2;
    c.learning_rate = 1e-3;
    c.seed = 21;
    return c;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

bool same_params(GeneratorParams& a, GeneratorParams& b) {
    const auto x = trainable_arrays(a), y = trainable_arrays(b);
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::equal(x[i].values.begin(), x[i].values.end(), y[i].values.begin())) return false;
    return true;
}

}  // namespace

TEST(TrainConfig, Validation) {
    TrainConfig c = small_config();
    EXPECT_NO_THROW(c.validate(5));
    EXPECT_THROW(c.validate(2), ArgumentError);  // batch_outer > n
    c.batch_inner = 4;
    EXPECT_THROW(c.validate(5), ArgumentError);
    c = small_config();
    c.m_upper = 0;
    EXPECT_THROW(c.validate(5), ArgumentError);
    c = small_config();
    c.learning_rate = -1;
    EXPECT_THROW(c.validate(5), ArgumentError);
    c.learning_rate = std::nan("");
    EXPECT_THROW(c.validate(5), ArgumentError);
}

TEST(Select, DegeneratePoolsReturnTheDrawnNoise) {
    Fixture f(2, 16, 0);
    const GeneratorParams params = init_params(tiny_net(), 1);
    Rng rng(9), replay(9);
    const SelectionRecord r = hierarchical_select(params, f.problem->space(), f.problem->target(0), 1, 1, replay);
    const Tensor zl = draw_noise_map(1, 1, 8, 8, rng);
    const Tensor zu = draw_noise_map(1, 1, 16, 16, rng);
    EXPECT_EQ(r.noise.lower, zl);
    EXPECT_EQ(r.noise.upper, zu);
    EXPECT_EQ(r.lower_index, 0u);
    EXPECT_EQ(r.upper_index, 0u);
}

TEST(Select, ChosenDistanceIsPoolMinimum) {
    Fixture f(3, 16, 64);
    const GeneratorParams params = init_params(tiny_net(), 2);
    Rng rng(10);
    for (std::size_t i = 0; i < 3; ++i) {
        const SelectionRecord r = hierarchical_select(params, f.problem->space(), f.problem->target(i), 5, 7, rng);
        ASSERT_EQ(r.lower_candidates.size(), 5u);
        ASSERT_EQ(r.upper_candidates.size(), 7u);
        for (double d : r.upper_candidates) EXPECT_LE(r.distance, d);
        for (double d : r.lower_candidates) EXPECT_LE(r.lower_distance, d);
        EXPECT_EQ(r.distance, r.upper_candidates[r.upper_index]);
    }
}

// Recomputes every candidate independently (one forward per candidate, direct
// distances) and checks the selection.
TEST(Select, MatchesExhaustiveReplay) {
    for (LowerStageMetric metric : {LowerStageMetric::pixel, LowerStageMetric::feature}) {
        Fixture f(2, 16, 32, metric);
        const GeneratorParams params = init_params(tiny_net(), 3);
        const ExampleTarget& t = f.problem->target(1);
        const int ml = 4, mu = 5;
        Rng rng(11), replay(11);
        const SelectionRecord r = hierarchical_select(params, f.problem->space(), t, ml, mu, rng);

        std::vector<Tensor> zl, zu;
        for (int j = 0; j < ml; ++j) zl.push_back(draw_noise_map(1, 1, 8, 8, replay));
        for (int j = 0; j < mu; ++j) zu.push_back(draw_noise_map(1, 1, 16, 16, replay));

        std::size_t best_lower = 0;
        double best_lower_d = INFINITY;
        std::vector<Tensor> mids;
        for (int j = 0; j < ml; ++j) {
            mids.push_back(forward_lower(params, t.x, zl[j], Mode::eval));
            const Image01 mid = tensor_to_image(mids.back());
            const std::vector<double> v = metric == LowerStageMetric::pixel
                                              ? mids.back().data
                                              : extract(*f.problem->space().mid_features, mid).data;
            const double d = sq_dist(v, t.y_mid_selection);
            if (d < best_lower_d) best_lower_d = d, best_lower = j;
        }
        std::size_t best_upper = 0;
        double best_upper_d = INFINITY;
        for (int j = 0; j < mu; ++j) {
            const Tensor out = forward_upper(params, t.x, mids[best_lower], zu[j], Mode::eval);
            const auto phi = extract(f.features, tensor_to_image(out));
            const auto v = project(*f.projection, phi);
            const double d = sq_dist(v, t.y_selection);
            if (d < best_upper_d) best_upper_d = d, best_upper = j;
        }
        EXPECT_EQ(r.lower_index, best_lower);
        EXPECT_EQ(r.upper_index, best_upper);
        EXPECT_NEAR(r.lower_distance, best_lower_d, 1e-9 * best_lower_d);
        EXPECT_NEAR(r.distance, best_upper_d, 1e-9 * best_upper_d);
        EXPECT_EQ(r.noise.lower, zl[best_lower]);
        EXPECT_EQ(r.noise.upper, zu[best_upper]);
    }
}

TEST(Target, IntermediateIsBicubicHalf) {
    Fixture f(2, 16, 0);
    const ExampleTarget& t = f.problem->target(0);
    EXPECT_EQ(t.x.h, 4);
    EXPECT_EQ(t.y.h, 16);
    EXPECT_EQ(t.y_mid.h, 8);
    const Image01 ref = resize_bicubic(to_unit(f.data.pairs[0].target), 8, 8);
    EXPECT_EQ(tensor_to_image(t.y_mid), ref);
    EXPECT_EQ(t.y_selection, t.y_features.data);
}

TEST(Loss, ZeroWhenOutputMatchesTarget) {
    Fixture f(2, 16, 0);
    const GeneratorParams params = init_params(tiny_net(), 4);
    Rng rng(12);
    const NoisePair z = draw_noise(4, 4, 1, rng);
    const Tensor& x = f.problem->target(0).x;
    const Tensor out = forward(params, x, z.lower, z.upper, Mode::train).out;
    const ExampleTarget t = make_example_target(f.problem->space(), tensor_to_image(x), tensor_to_image(out));
    const LossItem item{&t, &z};
    const LossResult r = imle_loss(params, f.features, std::span(&item, 1), 10);
    EXPECT_EQ(r.loss, 0.0);
}

TEST(Loss, ScaleIsTrainingSizeOverBatch) {
    Fixture f(3, 16, 0);
    const GeneratorParams params = init_params(tiny_net(), 5);
    Rng rng(13);
    const NoisePair z0 = draw_noise(4, 4, 1, rng), z1 = draw_noise(4, 4, 1, rng);
    const std::vector<LossItem> two{{&f.problem->target(0), &z0}, {&f.problem->target(1), &z1}};
    const LossResult r = imle_loss(params, f.features, two, 12);
    ASSERT_EQ(r.distances.size(), 2u);
    EXPECT_NEAR(r.loss, 6.0 * (r.distances[0] + r.distances[1]), 1e-9 * r.loss);
    // The same summands twice: batch doubles, scale halves, sum doubles.
    const std::vector<LossItem> four{two[0], two[1], two[0], two[1]};
    const LossResult r4 = imle_loss(params, f.features, four, 12);
    EXPECT_NEAR(r4.loss, r.loss, 1e-9 * r.loss);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    Fixture f(2, 16, 0);
    GeneratorParams params = init_params(tiny_net(), 6);
    Rng rng(14);
    const NoisePair z0 = draw_noise(4, 4, 1, rng), z1 = draw_noise(4, 4, 1, rng);
    const std::vector<LossItem> batch{{&f.problem->target(0), &z0}, {&f.problem->target(1), &z1}};
    LossResult r = imle_loss(params, f.features, batch, 2);
    auto arrays = trainable_arrays(params);
    auto grads = grad_arrays(r.grad);
    int bad = 0, total = 0;
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        for (std::size_t i = 0; i < arrays[a].values.size(); i += 3) {
            double& v = arrays[a].values[i];
            const double keep = v, h = 1e-5;
            v = keep + h;
            const double up = imle_loss(params, f.features, batch, 2).loss;
            v = keep - h;
            const double down = imle_loss(params, f.features, batch, 2).loss;
            v = keep;
            const double numeric = (up - down) / (2 * h);
            ++total;
            if (std::fabs(numeric - grads[a][i]) > 1e-4 * std::max(1e-2, std::fabs(numeric))) ++bad;
        }
    }
    EXPECT_EQ(bad, 0) << "of " << total;
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
    GeneratorParams p = init_params(tiny_net(), 7);
    GeneratorParams before = p;
    GeneratorGrad g = zero_grad(p);
    for (auto span : grad_arrays(g))
        for (std::size_t i = 0; i < span.size(); ++i) span[i] = (i % 2 ? -1.0 : 1.0) * (1.0 + i);
    OptimizerState s = init_optimizer(p);
    TrainConfig c;
    c.learning_rate = 0.01;
    apply_update(p, g, s, c);
    EXPECT_EQ(s.step, 1);
    const auto a = trainable_arrays(p), b = trainable_arrays(before);
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].values.size(); ++i) {
            const double sign = i % 2 ? -1.0 : 1.0;
            // m̂ = g, v̂ = g², step = lr·g/(|g|+ε)
            const double g_i = sign * (1.0 + i);
            EXPECT_NEAR(a[k].values[i], b[k].values[i] - 0.01 * g_i / (std::fabs(g_i) + 1e-8), 1e-15);
        }
}

TEST(Optimizer, PlainGradientStep) {
    GeneratorParams p = init_params(tiny_net(), 8);
    GeneratorParams before = p;
    GeneratorGrad g = zero_grad(p);
    for (auto span : grad_arrays(g)) std::fill(span.begin(), span.end(), 2.0);
    OptimizerState s = init_optimizer(p);
    TrainConfig c;
    c.optimizer = OptimizerKind::plain_gradient;
    c.learning_rate = 0.5;
    apply_update(p, g, s, c);
    const auto a = trainable_arrays(p), b = trainable_arrays(before);
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].values.size(); ++i) EXPECT_DOUBLE_EQ(a[k].values[i], b[k].values[i] - 1.0);
}

TEST(Outer, ZeroLearningRateLeavesParamsUntouched) {
    Fixture f(4, 16, 0);
    TrainConfig c = small_config();
    c.learning_rate = 0.0;
    TrainState s = init_train_state(tiny_net(), c);
    GeneratorParams before = s.params;
    const auto records = imle_outer_iteration(s, *f.problem, c);
    EXPECT_EQ(records.size(), 3u);
    EXPECT_TRUE(same_params(s.params, before));
    const auto x = buffer_arrays(s.params), y = buffer_arrays(before);
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_TRUE(std::equal(x[i].values.begin(), x[i].values.end(), y[i].values.begin()));
    EXPECT_EQ(s.history.iterations.back().inner_losses.size(), 2u);
}

TEST(Outer, ZeroInnerStepsStillSelects) {
    Fixture f(4, 16, 0);
    TrainConfig c = small_config();
    c.inner_steps = 0;
    TrainState s = init_train_state(tiny_net(), c);
    GeneratorParams before = s.params;
    const auto records = imle_outer_iteration(s, *f.problem, c);
    EXPECT_EQ(records.size(), 3u);
    EXPECT_TRUE(same_params(s.params, before));
    ASSERT_EQ(s.history.iterations.size(), 1u);
    EXPECT_GT(s.history.iterations[0].mean_selected_distance, 0.0);
    EXPECT_TRUE(s.history.iterations[0].inner_losses.empty());
    EXPECT_EQ(s.iteration, 1);
}

TEST(Outer, BatchHoldsDistinctExamples) {
    Fixture f(5, 16, 0);
    TrainConfig c = small_config();
    c.batch_outer = 5;
    TrainState s = init_train_state(tiny_net(), c);
    const auto records = imle_outer_iteration(s, *f.problem, c);
    std::vector<std::size_t> ex;
    for (const auto& r : records) ex.push_back(r.example);
    std::sort(ex.begin(), ex.end());
    EXPECT_EQ(ex, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Train, ZeroIterationsIsANoOp) {
    Fixture f(3, 16, 0);
    TrainConfig c = small_config();
    c.iterations = 0;
    TrainState s = init_train_state(tiny_net(), c);
    GeneratorParams before = s.params;
    train(s, *f.problem, c);
    EXPECT_EQ(s.iteration, 0);
    EXPECT_TRUE(s.history.iterations.empty());
    EXPECT_TRUE(same_params(s.params, before));
}

TEST(Train, HistoryLengthAndResumeEquivalence) {
    Fixture f(4, 16, 16);
    TrainConfig c = small_config();
    c.iterations = 6;
    TrainState full = init_train_state(tiny_net(), c);
    train(full, *f.problem, c);
    ASSERT_EQ(full.history.iterations.size(), 6u);
    EXPECT_EQ(full.history.iterations.back().iteration, 6);

    TrainState part = init_train_state(tiny_net(), c);
    TrainHooks stop;
    stop.should_stop = [](const TrainState& s) { return s.iteration >= 3; };
    train(part, *f.problem, c, stop);
    EXPECT_EQ(part.iteration, 3);
    TrainState resumed = part;  // stands in for a checkpoint round trip
    train(resumed, *f.problem, c);
    EXPECT_EQ(history_csv(resumed.history), history_csv(full.history));
    EXPECT_TRUE(same_params(resumed.params, full.params));
}

TEST(Train, ThreadCountDoesNotChangeResults) {
    Fixture f(4, 16, 0);
    TrainConfig c = small_config();
    TrainState a = init_train_state(tiny_net(), c);
    train(a, *f.problem, c);
    c.threads = 3;
    TrainState b = init_train_state(tiny_net(), c);
    train(b, *f.problem, c);
    EXPECT_EQ(history_csv(a.history), history_csv(b.history));
}

TEST(Train, DivergenceReportsIteration) {
    Fixture f(3, 16, 0);
    TrainConfig c = small_config();
    c.learning_rate = 1e300;
    c.optimizer = OptimizerKind::plain_gradient;
    TrainState s = init_train_state(tiny_net(), c);
    try {
        train(s, *f.problem, c);
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.iteration(), 1);
    }
}

TEST(History, CsvAndSmoothing) {
    TrainHistory h;
    h.iterations.push_back({1, 2.5, 1.0, {4.0, 2.0}, 0.3});
    h.iterations.push_back({2, 1.5, 0.5, {}, 0.1});
    const std::string csv = history_csv(h);
    EXPECT_EQ(csv,
              "iteration,mean_selected_distance,mean_lower_distance,mean_inner_loss,final_inner_loss\n"
              "1,2.5,1,3,2\n"
              "2,1.5,0.5,nan,nan\n");
    const std::vector<double> v{1, 2, 3, 4, 5};
    EXPECT_EQ(smooth(v, 2), (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
    EXPECT_EQ(smooth(v, 10), (std::vector<double>{1, 1.5, 2, 2.5, 3}));
    EXPECT_THROW(smooth(v, 0), ArgumentError);
}

TEST(Names, OptimizerAndMetric) {
    EXPECT_EQ(to_string(OptimizerKind::adaptive_moment), "adaptive-moment");
    EXPECT_EQ(parse_optimizer("plain-gradient"), OptimizerKind::plain_gradient);
    EXPECT_EQ(parse_lower_metric("feature"), LowerStageMetric::feature);
    EXPECT_EQ(to_string(LowerStageMetric::pixel), "pixel");
    EXPECT_ANY_THROW(parse_optimizer("sgd"));
}
