#include "srim/imle_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "srim/errors.hpp"
#include "srim/nn_search.hpp"
#include "srim/parallel.hpp"
#include "srim/resample.hpp"

namespace srim {
namespace {

Tensor repeat_sample(const Tensor& one, int count) {
    Tensor out(count, one.c, one.h, one.w);
    const auto src = one.sample(0);
    for (int b = 0; b < count; ++b) std::copy(src.begin(), src.end(), out.sample(b).begin());
    return out;
}

std::vector<double> flat(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<double> exact_distances(std::span<const double> target, const CandidatePool& pool) {
    std::vector<double> d;
    d.reserve(pool.size());
    for (const auto& v : pool.vectors) d.push_back(feature_distance(target, v));
    return d;
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return std::nan("");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::plain_gradient ? "plain-gradient" : "adaptive-moment";
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "plain-gradient") return OptimizerKind::plain_gradient;
    if (name == "adaptive-moment") return OptimizerKind::adaptive_moment;
    throw ArgumentError("unknown optimizer '" + name + "'");
}

std::string to_string(LowerStageMetric metric) { return metric == LowerStageMetric::pixel ? "pixel" : "feature"; }

LowerStageMetric parse_lower_metric(const std::string& name) {
    if (name == "pixel") return LowerStageMetric::pixel;
    if (name == "feature") return LowerStageMetric::feature;
    throw ArgumentError("unknown lower-stage metric '" + name + "'");
}

void TrainConfig::validate(std::size_t n) const {
    if (iterations < 0) throw ArgumentError("iterations must be >= 0");
    if (inner_steps < 0) throw ArgumentError("inner_steps must be >= 0");
    if (m_lower < 1 || m_upper < 1) throw ArgumentError("m_lower and m_upper must be >= 1");
    if (batch_inner < 1 || batch_inner > batch_outer) throw ArgumentError("need 1 <= batch_inner <= batch_outer");
    if (static_cast<std::size_t>(batch_outer) > n) {
        throw ArgumentError("batch_outer " + std::to_string(batch_outer) + " exceeds training-set size " +
                            std::to_string(n));
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ArgumentError("learning_rate must be >= 0");
    if (threads < 1) throw ArgumentError("threads must be >= 1");
}

std::vector<double> SelectionSpace::selection_vector(const FeatureVector& v) const {
    return projection ? project(*projection, v) : v.data;
}

ExampleTarget make_example_target(const SelectionSpace& space, const Image01& x, const Image01& y) {
    if (y.height != kTotalFactor * x.height || y.width != kTotalFactor * x.width) {
        throw ArgumentError("target must be exactly 4x the input size");
    }
    ExampleTarget t;
    t.x = image_to_tensor(x);
    t.y = image_to_tensor(y);
    t.y_mid = image_to_tensor(resize_bicubic(y, kStageFactor * x.height, kStageFactor * x.width));
    t.y_features = extract_batch(*space.features, t.y, false).features.front();
    t.y_selection = space.selection_vector(t.y_features);
    if (space.lower_metric == LowerStageMetric::pixel) {
        t.y_mid_selection = t.y_mid.data;
    } else {
        if (!space.mid_features) throw ArgumentError("feature lower metric needs an intermediate-resolution extractor");
        t.y_mid_selection = extract_batch(*space.mid_features, t.y_mid, false).features.front().data;
    }
    return t;
}

ExampleTarget make_example_target(const SelectionSpace& space, const ImagePair& pair) {
    return make_example_target(space, to_unit(pair.input), to_unit(pair.target));
}

SelectionRecord hierarchical_select(const GeneratorParams& params, const SelectionSpace& space,
                                    const ExampleTarget& target, int m_lower, int m_upper, Rng& rng) {
    if (m_lower < 1 || m_upper < 1) throw ArgumentError("candidate pools need m >= 1");
    const Tensor& x = target.x;
    if (x.n != 1 || target.y.h != kTotalFactor * x.h || target.y.w != kTotalFactor * x.w) {
        throw ArgumentError("target must be exactly 4x the input size");
    }
    const int k = params.config.noise_channels;
    const Tensor z_lower = draw_noise_map(m_lower, k, kStageFactor * x.h, kStageFactor * x.w, rng);
    const Tensor z_upper = draw_noise_map(m_upper, k, kTotalFactor * x.h, kTotalFactor * x.w, rng);

    SelectionRecord rec;
    const Tensor mids = forward_lower(params, repeat_sample(x, m_lower), z_lower, Mode::eval);
    CandidatePool lower_pool;
    if (space.lower_metric == LowerStageMetric::pixel) {
        for (int j = 0; j < m_lower; ++j) lower_pool.vectors.push_back(flat(mids.sample(j)));
    } else {
        for (auto& f : extract_batch(*space.mid_features, mids, false).features) lower_pool.vectors.push_back(std::move(f.data));
    }
    const Nearest lower = select_nearest(target.y_mid_selection, lower_pool);
    rec.lower_index = lower.index;
    rec.lower_distance = lower.distance;
    rec.lower_candidates = exact_distances(target.y_mid_selection, lower_pool);

    const Tensor mid = slice_sample(mids, static_cast<int>(lower.index));
    const Tensor outs = forward_upper(params, repeat_sample(x, m_upper), repeat_sample(mid, m_upper), z_upper, Mode::eval);
    CandidatePool upper_pool;
    for (const auto& f : extract_batch(*space.features, outs, false).features) {
        upper_pool.vectors.push_back(space.selection_vector(f));
    }
    const Nearest upper = select_nearest(target.y_selection, upper_pool);
    rec.upper_index = upper.index;
    rec.distance = upper.distance;
    rec.upper_candidates = exact_distances(target.y_selection, upper_pool);

    rec.noise.lower = slice_sample(z_lower, static_cast<int>(lower.index));
    rec.noise.upper = slice_sample(z_upper, static_cast<int>(upper.index));
    return rec;
}

LossResult imle_loss(const GeneratorParams& params, const FeatureExtractor& features, std::span<const LossItem> batch,
                     std::size_t n) {
    if (batch.empty()) throw ArgumentError("loss batch is empty");
    std::vector<Tensor> xs;
    std::vector<NoisePair> noises;
    for (const auto& item : batch) {
        if (!item.target || !item.noise) throw ArgumentError("incomplete loss item");
        noises.push_back(*item.noise);
    }
    Tensor x(static_cast<int>(batch.size()), kChannels, batch.front().target->x.h, batch.front().target->x.w);
    for (int b = 0; b < x.n; ++b) {
        const Tensor& xb = batch[static_cast<std::size_t>(b)].target->x;
        if (xb.h != x.h || xb.w != x.w) throw ArgumentError("inputs in a loss batch must share dimensions");
        std::copy(xb.data.begin(), xb.data.end(), x.sample(b).begin());
    }
    const auto [z_lower, z_upper] = stack_noise(noises);

    LossResult result;
    const ForwardResult fwd = forward(params, x, z_lower, z_upper, Mode::train, &result.cache);
    const FeatureTrace trace = extract_batch(features, fwd.out, true);

    const double scale = static_cast<double>(n) / static_cast<double>(batch.size());
    std::vector<std::vector<double>> d_features(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& phi = trace.features[i].data;
        const auto& phi_y = batch[i].target->y_features.data;
        const double dist = feature_distance(phi, phi_y);
        result.distances.push_back(dist);
        result.loss += dist;
        d_features[i].resize(phi.size());
        for (std::size_t j = 0; j < phi.size(); ++j) d_features[i][j] = 2.0 * scale * (phi[j] - phi_y[j]);
    }
    result.loss *= scale;
    if (!std::isfinite(result.loss)) throw TrainingDiverged(-1, "non-finite loss");

    const Tensor d_out = feature_backward(features, trace, d_features);
    result.grad = backward(params, result.cache, d_out);
    return result;
}

OptimizerState init_optimizer(const GeneratorParams& params) {
    OptimizerState state;
    for (const auto& a : trainable_arrays(const_cast<GeneratorParams&>(params))) {
        state.first_moment.emplace_back(a.values.size(), 0.0);
        state.second_moment.emplace_back(a.values.size(), 0.0);
    }
    return state;
}

void apply_update(GeneratorParams& params, GeneratorGrad& grad, OptimizerState& state, const TrainConfig& config) {
    auto arrays = trainable_arrays(params);
    auto grads = grad_arrays(grad);
    if (arrays.size() != grads.size() || arrays.size() != state.first_moment.size()) {
        throw ArgumentError("optimizer state does not match the parameters");
    }
    ++state.step;
    const double lr = config.learning_rate;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t a = 0; a < arrays.size(); ++a) {
        auto theta = arrays[a].values;
        auto g = grads[a];
        if (config.optimizer == OptimizerKind::plain_gradient) {
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
            continue;
        }
        auto& m = state.first_moment[a];
        auto& v = state.second_moment[a];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
    }
}

std::vector<double> TrainHistory::selected_distances() const {
    std::vector<double> out;
    out.reserve(iterations.size());
    for (const auto& r : iterations) out.push_back(r.mean_selected_distance);
    return out;
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream out;
    out << "iteration,mean_selected_distance,mean_lower_distance,mean_inner_loss,final_inner_loss\n";
    for (const auto& r : history.iterations) {
        const double last = r.inner_losses.empty() ? std::nan("") : r.inner_losses.back();
        out << r.iteration << ',' << format_double(r.mean_selected_distance) << ','
            << format_double(r.mean_lower_distance) << ',' << format_double(mean_of(r.inner_losses)) << ','
            << format_double(last) << '\n';
    }
    return out.str();
}

std::vector<double> smooth(std::span<const double> values, std::size_t window) {
    if (window == 0) throw ArgumentError("smoothing window must be >= 1");
    std::vector<double> out(values.size());
    double running = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        running += values[i];
        if (i >= window) running -= values[i - window];
        out[i] = running / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

ImleProblem::ImleProblem(const PairedDataset& train_set, const FeatureExtractor& features,
                         const ProjectionMatrix* projection, LowerStageMetric lower_metric) {
    if (train_set.empty()) throw ArgumentError("training set is empty");
    if (train_set.scale_factor != kTotalFactor) throw ArgumentError("the generator upsamples by exactly 4");
    space_.features = &features;
    space_.projection = projection;
    space_.lower_metric = lower_metric;
    if (projection && projection->source_dim() != features.dimension()) {
        throw ArgumentError("projection source dimension does not match the feature dimension");
    }
    if (lower_metric == LowerStageMetric::feature) {
        FeatureExtractor mid = features;
        mid.input_height = features.input_height / kStageFactor;
        mid.input_width = features.input_width / kStageFactor;
        if (mid.input_height % features.net.downsampling != 0 || mid.input_width % features.net.downsampling != 0) {
            throw ArgumentError("intermediate resolution is not compatible with the feature network");
        }
        mid_features_ = std::move(mid);
        space_.mid_features = &*mid_features_;
    }
    targets_.reserve(train_set.size());
    for (const auto& pair : train_set.pairs) targets_.push_back(make_example_target(space_, pair));
}

std::uint64_t iteration_seed(const TrainConfig& config, std::int64_t iteration) {
    return derive_seed(derive_seed(config.seed, "imle-iteration"), static_cast<std::uint64_t>(iteration));
}

TrainState init_train_state(const SubNetworkConfig& net, const TrainConfig& config) {
    TrainState state;
    state.params = init_params(net, derive_seed(config.seed, "init"));
    state.optimizer = init_optimizer(state.params);
    return state;
}

std::vector<SelectionRecord> imle_outer_iteration(TrainState& state, const ImleProblem& problem,
                                                  const TrainConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t n = problem.size();
    config.validate(n);
    const std::int64_t p = state.iteration + 1;
    const std::uint64_t seed = iteration_seed(config, p);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng batch_rng(derive_seed(seed, "batch"));
    std::shuffle(order.begin(), order.end(), batch_rng);
    order.resize(static_cast<std::size_t>(config.batch_outer));

    std::vector<SelectionRecord> records(order.size());
    const std::uint64_t example_seed = derive_seed(seed, "example");
    parallel_for(order.size(), config.threads, [&](std::size_t k) {
        Rng rng(derive_seed(example_seed, order[k]));
        records[k] = hierarchical_select(state.params, problem.space(), problem.target(order[k]), config.m_lower,
                                         config.m_upper, rng);
        records[k].example = order[k];
    });

    IterationRecord record;
    record.iteration = p;
    for (const auto& r : records) {
        record.mean_selected_distance += r.distance;
        record.mean_lower_distance += r.lower_distance;
    }
    record.mean_selected_distance /= static_cast<double>(records.size());
    record.mean_lower_distance /= static_cast<double>(records.size());

    Rng inner_rng(derive_seed(seed, "inner"));
    std::vector<std::size_t> positions(records.size());
    for (int q = 0; q < config.inner_steps; ++q) {
        std::iota(positions.begin(), positions.end(), 0);
        std::shuffle(positions.begin(), positions.end(), inner_rng);
        std::vector<LossItem> items;
        for (int b = 0; b < config.batch_inner; ++b) {
            const SelectionRecord& r = records[positions[static_cast<std::size_t>(b)]];
            items.push_back({&problem.target(r.example), &r.noise});
        }
        LossResult loss;
        try {
            loss = imle_loss(state.params, problem.features(), items, n);
        } catch (const TrainingDiverged&) {
            throw TrainingDiverged(p, "non-finite loss at inner step " + std::to_string(q + 1));
        }
        if (!all_finite(loss.distances)) throw TrainingDiverged(p, "non-finite sample distance");
        record.inner_losses.push_back(loss.loss);
        if (config.learning_rate > 0.0) {
            update_running_stats(state.params, loss.cache);
            apply_update(state.params, loss.grad, state.optimizer, config);
        }
        if (!params_finite(state.params)) throw TrainingDiverged(p, "non-finite parameters after step " + std::to_string(q + 1));
    }
    if (!std::isfinite(record.mean_selected_distance)) throw TrainingDiverged(p, "non-finite selection distance");

    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    state.history.iterations.push_back(std::move(record));
    state.iteration = p;
    return records;
}

void train(TrainState& state, const ImleProblem& problem, const TrainConfig& config, const TrainHooks& hooks) {
    config.validate(problem.size());
    while (state.iteration < config.iterations) {
        if (hooks.should_stop && hooks.should_stop(state)) break;
        imle_outer_iteration(state, problem, config);
        if (hooks.after_iteration) hooks.after_iteration(state);
    }
}

}  // namespace srim
