#include "srim/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "srim/archive.hpp"
#include "srim/checkpoint.hpp"
#include "srim/dataset.hpp"
#include "srim/errors.hpp"
#include "srim/image_io.hpp"
#include "srim/imle_trainer.hpp"
#include "srim/metrics.hpp"

namespace fs = std::filesystem;

namespace srim {
namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error writing " + path.string());
}

nlohmann::json config_json(const RunConfig& config) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : config.as_map()) j[k] = v;
    return j;
}

std::string checkpoint_name(std::int64_t iteration) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "checkpoint_%06lld.srim", static_cast<long long>(iteration));
    return buf;
}

std::string format_weights(const std::array<double, kFeatureComponents>& w) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g, %.17g, %.17g", w[0], w[1], w[2]);
    return buf;
}

Checkpoint load_generator_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
    return load_checkpoint(path);
}

// Runs a command body and maps exceptions to exit codes.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const TrainingDiverged& e) {
        err << "error: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ArgumentError& e) {
        err << "invalid argument: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace

FeatureExtractor make_feature_extractor(const RunConfig& config, int height, int width) {
    if (config.feature_backend == FeatureBackend::pretrained_deep_net) {
        return load_vgg19_extractor(config.feature_weights, height, width);
    }
    return make_random_convnet_extractor(height, width, feature_seed(config));
}

ImageU8 horizontal_grid(const std::vector<ImageU8>& images) {
    if (images.empty()) throw ArgumentError("grid needs at least one image");
    const int h = images.front().height;
    int total_w = 0;
    for (const auto& img : images) {
        if (img.height != h) throw ArgumentError("grid images must share a height");
        total_w += img.width;
    }
    ImageU8 grid(h, total_w);
    int x0 = 0;
    for (const auto& img : images) {
        for (int y = 0; y < h; ++y) {
            std::copy_n(&img.data[img.index(y, 0, 0)], static_cast<std::size_t>(img.width) * kChannels,
                        &grid.data[grid.index(y, x0, 0)]);
        }
        x0 += img.width;
    }
    return grid;
}

int cmd_prepare_data(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        config.validate();
        if (config.data_dir.empty()) throw ConfigError("data_dir is not set");
        DatasetOptions options;
        options.target_size = config.target_size;
        options.scale_factor = kTotalFactor;
        options.split_fraction = config.split_fraction;
        options.seed = config.seed;
        const DatasetSplit split = build_dataset(config.data_dir, options);
        write_dataset_cache(split, config.cache_dir);
        out << "prepared " << split.train.size() << " training and " << split.test.size() << " test pairs in "
            << config.cache_dir << '\n';
        return int{kExitOk};
    });
}

int cmd_train(const RunConfig& config, const TrainOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&]() -> int {
        config.validate();
        const DatasetSplit split = load_dataset_cache(config.cache_dir);
        const PairedDataset& train_set = split.train;
        if (train_set.empty()) throw DataError("training split is empty");
        const TrainConfig train_config = make_train_config(config);
        train_config.validate(train_set.size());

        const ImageU8& first = train_set.pairs.front().target;
        FeatureExtractor features = make_feature_extractor(config, first.height, first.width);
        std::vector<Image01> calibration;
        for (const auto& p : train_set.pairs) {
            if (static_cast<int>(calibration.size()) == config.calibration_images) break;
            calibration.push_back(to_unit(p.target));
        }
        features.weights = calibrate_weights(features, calibration);

        std::optional<ProjectionMatrix> projection;
        if (config.projection_dim > 0) {
            projection.emplace(config.projection_dim, features.dimension(), projection_seed(config));
        }
        const ImleProblem problem(train_set, features, projection ? &*projection : nullptr, train_config.lower_metric);

        TrainState state;
        if (options.resume) {
            Checkpoint ckpt = load_generator_checkpoint(*options.resume);
            require_matching_config(ckpt, config.generator);
            if (ckpt.feature_checksum != features.checksum) {
                throw ConfigError("checkpoint was trained with a different feature network");
            }
            state = std::move(ckpt.state);
            out << "resuming from iteration " << state.iteration << '\n';
        } else {
            state = init_train_state(config.generator, train_config);
        }

        const fs::path dir = config.output_dir;
        fs::create_directories(dir);
        std::ostringstream manifest;
        manifest << "# srim run manifest\n[config]\n" << config.echo() << "[seeds]\n"
                 << "root = " << config.seed << '\n'
                 << "init = " << derive_seed(config.seed, "init") << '\n'
                 << "selection = " << derive_seed(config.seed, "imle-iteration") << '\n'
                 << "feature_net = " << feature_seed(config) << '\n'
                 << "projection = " << projection_seed(config) << '\n'
                 << "sampling = " << sampling_seed(config) << '\n'
                 << "[features]\n"
                 << "backend = " << to_string(features.backend) << '\n'
                 << "checksum = " << features.checksum << '\n'
                 << "weights = " << format_weights(features.weights) << '\n'
                 << "dimension = " << features.dimension() << '\n'
                 << "[data]\n"
                 << "training_pairs = " << train_set.size() << '\n'
                 << "generator_parameters = " << parameter_count(state.params) << '\n'
                 << "loss_csv = loss.csv\n";
        write_text(dir / "run_manifest.txt", manifest.str());

        auto snapshot = [&](const TrainState& s) {
            Checkpoint ckpt;
            ckpt.state = s;
            ckpt.config = config_json(config);
            ckpt.feature_weights = features.weights;
            ckpt.feature_checksum = features.checksum;
            ckpt.feature_backend = to_string(features.backend);
            return ckpt;
        };
        TrainHooks hooks;
        hooks.after_iteration = [&](const TrainState& s) {
            if (s.iteration % config.checkpoint_every == 0) {
                save_checkpoint(snapshot(s), dir / checkpoint_name(s.iteration));
                write_text(dir / "loss.csv", history_csv(s.history));
            }
        };
        hooks.should_stop = [&](const TrainState& s) {
            return options.stop_after > 0 && s.iteration >= options.stop_after;
        };

        try {
            train(state, problem, train_config, hooks);
        } catch (const TrainingDiverged&) {
            save_checkpoint(snapshot(state), dir / "diverged.srim");
            write_text(dir / "loss.csv", history_csv(state.history));
            throw;
        }
        save_checkpoint(snapshot(state), dir / "latest.srim");
        write_text(dir / "loss.csv", history_csv(state.history));
        out << "trained " << state.iteration << "/" << train_config.iterations << " iterations";
        if (!state.history.iterations.empty()) {
            out << ", last mean selected distance " << state.history.iterations.back().mean_selected_distance;
        }
        out << '\n';
        return kExitOk;
    });
}

int cmd_super_resolve(const RunConfig& config, const fs::path& checkpoint, const std::vector<fs::path>& inputs,
                      const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ckpt = load_generator_checkpoint(checkpoint);
        if (inputs.empty()) throw ArgumentError("no input images");
        fs::create_directories(out_dir);
        for (const auto& input : inputs) {
            const std::string name = input.stem().string() + ".png";
            const Image01 x = to_unit(load_image(input));
            const Image01 y = sample(ckpt.state.params, x, derive_seed(sampling_seed(config), name));
            save_png(to_u8(y), out_dir / name);
            out << input.string() << " -> " << (out_dir / name).string() << '\n';
        }
        return int{kExitOk};
    });
}

int cmd_sample_multi(const RunConfig& config, const fs::path& checkpoint, const fs::path& input, int count,
                     const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ckpt = load_generator_checkpoint(checkpoint);
        if (count < 1) throw ArgumentError("count must be >= 1");
        fs::create_directories(out_dir);
        const std::string stem = input.stem().string();
        const Image01 x = to_unit(load_image(input));
        std::vector<ImageU8> samples;
        for (int k = 0; k < count; ++k) {
            const std::uint64_t seed = derive_seed(derive_seed(sampling_seed(config), stem), static_cast<std::uint64_t>(k));
            samples.push_back(to_u8(sample(ckpt.state.params, x, seed)));
            save_png(samples.back(), out_dir / (stem + "_sample" + std::to_string(k) + ".png"));
        }
        save_png(horizontal_grid(samples), out_dir / (stem + "_grid.png"));
        out << "wrote " << count << " samples and a grid to " << out_dir.string() << '\n';
        return int{kExitOk};
    });
}

int cmd_evaluate(const RunConfig& config, const fs::path& checkpoint, const fs::path& test_dir, const fs::path& report,
                 bool with_truth, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Checkpoint ckpt = load_generator_checkpoint(checkpoint);
        PairedDataset test_set = fs::exists(test_dir / "manifest.txt") ? load_dataset_cache(test_dir).test
                                                                       : load_ground_truth_dir(test_dir, kTotalFactor);
        if (test_set.empty()) throw DataError("no test images in " + test_dir.string());
        const EvalReport result = evaluate(ckpt.state.params, test_set, sampling_seed(config), with_truth);
        if (report.has_parent_path()) fs::create_directories(report.parent_path());
        write_text(report, report_csv(result));
        for (const auto& s : result.summaries) {
            out << s.method << ": mean PSNR " << s.mean_psnr_db << " dB, mean SSIM " << s.mean_ssim << " over "
                << s.images << " images\n";
        }
        return int{kExitOk};
    });
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Super-resolution by conditional implicit maximum likelihood estimation"};
    app.name(args.empty() ? "srim" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);

    struct Overrides {
        std::string config_file;
        std::map<std::string, std::string> values;
    };
    std::map<CLI::App*, Overrides> overrides;

    auto add_common = [&](CLI::App* sub) {
        Overrides& o = overrides[sub];
        sub->add_option("--config", o.config_file, "Flat key = value configuration file");
        for (const auto& key : RunConfig::keys()) {
            std::string dashed = key;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            std::string names = "--" + key;
            if (dashed != key) names += ",--" + dashed;
            sub->add_option_function<std::string>(
                names, [&o, key](const std::string& v) { o.values[key] = v; }, "Override config key " + key);
        }
    };

    auto* prepare = app.add_subcommand("prepare-data", "Build the low/high resolution pair cache");
    add_common(prepare);

    TrainOptions train_options;
    std::string resume;
    auto* train_cmd = app.add_subcommand("train", "Run conditional IMLE training");
    add_common(train_cmd);
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
    train_cmd->add_option("--stop-after", train_options.stop_after, "Stop once this many iterations are complete");

    std::string checkpoint;
    std::string out_dir = "sr_out";
    std::vector<std::string> inputs;
    auto* sr = app.add_subcommand("super-resolve", "Upscale images x4 with a trained checkpoint");
    add_common(sr);
    sr->add_option("--checkpoint", checkpoint)->required();
    sr->add_option("--out-dir", out_dir);
    sr->add_option("inputs", inputs, "Input images")->required();

    int count = 5;
    std::string single_input;
    auto* multi = app.add_subcommand("sample-multi", "Draw several samples for one input and a grid");
    add_common(multi);
    multi->add_option("--checkpoint", checkpoint)->required();
    multi->add_option("--out-dir", out_dir);
    multi->add_option("--count", count);
    multi->add_option("input", single_input)->required();

    std::string test_dir;
    std::string report = "eval.csv";
    bool with_truth = false;
    auto* eval = app.add_subcommand("evaluate", "PSNR/SSIM of SRIM and bicubic against ground truth");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--test-dir", test_dir)->required();
    eval->add_option("--report", report);
    eval->add_flag("--with-truth", with_truth, "Also score ground truth against itself");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    if (args.empty()) argv.push_back("srim");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* active = app.get_subcommands().front();
    RunConfig config;
    try {
        const Overrides& o = overrides.at(active);
        if (!o.config_file.empty()) apply_config_file(config, o.config_file);
        apply_environment(config);
        for (const auto& [k, v] : o.values) config.set(k, v);
        config.validate();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    }

    if (active == prepare) return cmd_prepare_data(config, out, err);
    if (active == train_cmd) {
        if (!resume.empty()) train_options.resume = resume;
        return cmd_train(config, train_options, out, err);
    }
    if (active == sr) {
        std::vector<fs::path> paths(inputs.begin(), inputs.end());
        return cmd_super_resolve(config, checkpoint, paths, out_dir, out, err);
    }
    if (active == multi) return cmd_sample_multi(config, checkpoint, single_input, count, out_dir, out, err);
    return cmd_evaluate(config, checkpoint, test_dir, report, with_truth, out, err);
}

}  // namespace srim
