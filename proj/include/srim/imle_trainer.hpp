#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srim/dataset.hpp"
#include "srim/feature_space.hpp"
#include "srim/generator.hpp"

namespace srim {

enum class OptimizerKind { plain_gradient, adaptive_moment };
enum class LowerStageMetric { pixel, feature };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(LowerStageMetric metric);
LowerStageMetric parse_lower_metric(const std::string& name);

/// Hyperparameters of the conditional IMLE loop. The training-set size n is
/// taken from the data.
struct TrainConfig {
    std::int64_t iterations = 1000;  // N outer iterations
    int inner_steps = 50;            // M gradient steps per outer iteration
    int m_lower = 16;
    int m_upper = 16;
    int batch_outer = 16;  // |S|
    int batch_inner = 4;   // |S̃|
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adaptive_moment;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    LowerStageMetric lower_metric = LowerStageMetric::pixel;
    std::uint64_t seed = 0;
    int threads = 1;

    // Throws ArgumentError unless batch_inner <= batch_outer <= n, m >= 1,
    // learning_rate >= 0 and finite.
    void validate(std::size_t n) const;
};

/// Everything φ-related the trainer needs: the calibrated extractor at the
/// output resolution, an optional projection for selection distances, and
/// an extractor at the intermediate resolution for the feature lower metric.
struct SelectionSpace {
    const FeatureExtractor* features = nullptr;
    const ProjectionMatrix* projection = nullptr;  // null: select in raw feature space
    LowerStageMetric lower_metric = LowerStageMetric::pixel;
    const FeatureExtractor* mid_features = nullptr;  // required for LowerStageMetric::feature

    std::vector<double> selection_vector(const FeatureVector& v) const;
};

/// Per-example conditioning data, prepared once.
struct ExampleTarget {
    Tensor x;                                 // 1×3×h×w
    Tensor y;                                 // 1×3×4h×4w
    Tensor y_mid;                             // downsample(y, 2), 1×3×2h×2w
    FeatureVector y_features;                 // φ(y), unprojected
    std::vector<double> y_selection;          // φ(y) in selection space
    std::vector<double> y_mid_selection;      // lower-stage comparison target
};

ExampleTarget make_example_target(const SelectionSpace& space, const ImagePair& pair);
ExampleTarget make_example_target(const SelectionSpace& space, const Image01& x, const Image01& y);

struct SelectionRecord {
    std::size_t example = 0;
    NoisePair noise;
    double distance = 0.0;        // selected upper distance (selection space)
    double lower_distance = 0.0;  // selected lower-stage distance
    std::size_t lower_index = 0;
    std::size_t upper_index = 0;
    std::vector<double> lower_candidates;  // distances of every lower candidate
    std::vector<double> upper_candidates;  // distances of every upper candidate
};

/// Draws m_lower lower noises, keeps the one whose intermediate output is
/// nearest downsample(y,2); then, with it fixed, draws m_upper upper noises and
/// keeps the one whose output is nearest y in φ. Forward passes run in eval
/// mode. Noise is drawn from `rng` in that order: all lower maps, then all
/// upper maps.
SelectionRecord hierarchical_select(const GeneratorParams& params, const SelectionSpace& space,
                                    const ExampleTarget& target, int m_lower, int m_upper, Rng& rng);

struct LossItem {
    const ExampleTarget* target = nullptr;
    const NoisePair* noise = nullptr;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> distances;  // unscaled ‖φ(ỹ_i) − φ(y_i)‖² per item
    GeneratorGrad grad;
    ForwardCache cache;  // train-mode pass, for running statistics
};

/// (n/|S̃|)·Σ_i ‖φ(T_θ(x_i, z_i)) − φ(y_i)‖² in unprojected feature space and
/// its exact gradient. Runs the generator in train mode over the whole batch.
LossResult imle_loss(const GeneratorParams& params, const FeatureExtractor& features, std::span<const LossItem> batch,
                     std::size_t n);

struct OptimizerState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> first_moment;   // aligned with trainable_arrays
    std::vector<std::vector<double>> second_moment;
};

OptimizerState init_optimizer(const GeneratorParams& params);
void apply_update(GeneratorParams& params, GeneratorGrad& grad, OptimizerState& state, const TrainConfig& config);

struct IterationRecord {
    std::int64_t iteration = 0;  // 1-based outer iteration index
    double mean_selected_distance = 0.0;
    double mean_lower_distance = 0.0;
    std::vector<double> inner_losses;
    double wall_seconds = 0.0;
};

struct TrainHistory {
    std::vector<IterationRecord> iterations;

    std::vector<double> selected_distances() const;
};

/// Loss CSV: header plus one row per outer iteration. Values are printed with
/// 17 significant digits so identical runs produce identical bytes. Wall-clock
/// times are deliberately excluded.
std::string history_csv(const TrainHistory& history);

/// Moving average with a trailing window.
std::vector<double> smooth(std::span<const double> values, std::size_t window);

struct TrainState {
    GeneratorParams params;
    OptimizerState optimizer;
    std::int64_t iteration = 0;  // completed outer iterations
    TrainHistory history;
};

/// Prepared training problem: data, φ and selection space.
class ImleProblem {
public:
    ImleProblem(const PairedDataset& train_set, const FeatureExtractor& features, const ProjectionMatrix* projection,
                LowerStageMetric lower_metric);
    ImleProblem(const ImleProblem&) = delete;
    ImleProblem& operator=(const ImleProblem&) = delete;

    std::size_t size() const { return targets_.size(); }
    const ExampleTarget& target(std::size_t i) const { return targets_[i]; }
    const SelectionSpace& space() const { return space_; }
    const FeatureExtractor& features() const { return *space_.features; }

private:
    std::optional<FeatureExtractor> mid_features_;
    SelectionSpace space_;
    std::vector<ExampleTarget> targets_;
};

/// Selections plus the updated state for one pass of the outer loop. The
/// randomness of iteration p depends only on (config.seed, p), so runs can be
/// resumed at any iteration boundary.
std::vector<SelectionRecord> imle_outer_iteration(TrainState& state, const ImleProblem& problem,
                                                  const TrainConfig& config);

TrainState init_train_state(const SubNetworkConfig& net, const TrainConfig& config);

struct TrainHooks {
    std::function<void(const TrainState&)> after_iteration;
    std::function<bool(const TrainState&)> should_stop;
};

/// Runs outer iterations until state.iteration == config.iterations or a hook
/// asks to stop. Throws TrainingDiverged on non-finite losses or parameters.
void train(TrainState& state, const ImleProblem& problem, const TrainConfig& config, const TrainHooks& hooks = {});

std::uint64_t iteration_seed(const TrainConfig& config, std::int64_t iteration);

}  // namespace srim
