#include "srim/checkpoint.hpp"

#include "srim/archive.hpp"
#include "srim/errors.hpp"

namespace srim {
namespace {

std::vector<std::int64_t> flat_shape(std::size_t n) { return {static_cast<std::int64_t>(n)}; }

void copy_into(std::span<double> dst, const ArchiveTensor& src) {
    std::copy(src.values.begin(), src.values.end(), dst.begin());
}

nlohmann::json history_to_json(const TrainHistory& history) {
    auto arr = nlohmann::json::array();
    for (const auto& r : history.iterations) {
        arr.push_back({{"iteration", r.iteration},
                       {"mean_selected_distance", r.mean_selected_distance},
                       {"mean_lower_distance", r.mean_lower_distance},
                       {"inner_losses", r.inner_losses}});
    }
    return arr;
}

TrainHistory history_from_json(const nlohmann::json& arr) {
    TrainHistory h;
    for (const auto& j : arr) {
        IterationRecord r;
        r.iteration = j.at("iteration").get<std::int64_t>();
        r.mean_selected_distance = j.at("mean_selected_distance").get<double>();
        r.mean_lower_distance = j.at("mean_lower_distance").get<double>();
        r.inner_losses = j.at("inner_losses").get<std::vector<double>>();
        h.iterations.push_back(std::move(r));
    }
    return h;
}

}  // namespace

nlohmann::json to_json(const SubNetworkConfig& c) {
    return {{"conv_layers", c.conv_layers},
            {"kernel", c.kernel},
            {"hidden_channels", c.hidden_channels},
            {"noise_channels", c.noise_channels},
            {"stages", kStages}};
}

SubNetworkConfig sub_network_from_json(const nlohmann::json& j) {
    SubNetworkConfig c;
    c.conv_layers = j.at("conv_layers").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.hidden_channels = j.at("hidden_channels").get<int>();
    c.noise_channels = j.at("noise_channels").get<int>();
    if (j.value("stages", kStages) != kStages) throw FormatError("checkpoint has an unsupported stage count");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    TensorArchive archive;
    auto& meta = archive.metadata;
    meta["format"] = "srim-checkpoint";
    meta["version"] = kCheckpointVersion;
    meta["generator"] = to_json(ckpt.state.params.config);
    meta["iteration"] = ckpt.state.iteration;
    meta["optimizer"] = {{"step", ckpt.state.optimizer.step}};
    meta["config"] = ckpt.config;
    meta["feature"] = {{"backend", ckpt.feature_backend},
                       {"weights", ckpt.feature_weights},
                       {"checksum", ckpt.feature_checksum}};
    meta["history"] = history_to_json(ckpt.state.history);

    auto& params = const_cast<GeneratorParams&>(ckpt.state.params);
    const auto trainable = trainable_arrays(params);
    for (const auto& a : trainable) archive.add(a.name, flat_shape(a.values.size()), a.values);
    for (const auto& a : buffer_arrays(params)) archive.add(a.name, flat_shape(a.values.size()), a.values);
    const auto& opt = ckpt.state.optimizer;
    if (opt.first_moment.size() == trainable.size()) {
        for (std::size_t i = 0; i < trainable.size(); ++i) {
            archive.add("optimizer.m." + trainable[i].name, flat_shape(opt.first_moment[i].size()), opt.first_moment[i]);
            archive.add("optimizer.v." + trainable[i].name, flat_shape(opt.second_moment[i].size()), opt.second_moment[i]);
        }
    }
    write_archive(archive, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const TensorArchive archive = read_archive(path);
    const auto& meta = archive.metadata;
    if (meta.value("format", "") != "srim-checkpoint") throw FormatError(path.string() + " is not a checkpoint");
    if (meta.value("version", 0) != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version in " + path.string());
    }
    Checkpoint ckpt;
    try {
        const SubNetworkConfig net = sub_network_from_json(meta.at("generator"));
        ckpt.state.params = init_params(net, 0);
        ckpt.state.iteration = meta.at("iteration").get<std::int64_t>();
        ckpt.state.optimizer = init_optimizer(ckpt.state.params);
        ckpt.state.optimizer.step = meta.at("optimizer").at("step").get<std::int64_t>();
        ckpt.config = meta.value("config", nlohmann::json::object());
        const auto& feature = meta.at("feature");
        ckpt.feature_weights = feature.at("weights").get<std::array<double, kFeatureComponents>>();
        ckpt.feature_checksum = feature.value("checksum", "");
        ckpt.feature_backend = feature.value("backend", "");
        ckpt.state.history = history_from_json(meta.at("history"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed checkpoint metadata in " + path.string() + ": " + e.what());
    }

    const auto trainable = trainable_arrays(ckpt.state.params);
    for (const auto& a : trainable) copy_into(a.values, archive.require(a.name, a.values.size()));
    for (const auto& a : buffer_arrays(ckpt.state.params)) copy_into(a.values, archive.require(a.name, a.values.size()));
    for (std::size_t i = 0; i < trainable.size(); ++i) {
        const auto* m = archive.find("optimizer.m." + trainable[i].name);
        const auto* v = archive.find("optimizer.v." + trainable[i].name);
        if (!m || !v) continue;
        ckpt.state.optimizer.first_moment[i] = archive.require(m->name, trainable[i].values.size()).values;
        ckpt.state.optimizer.second_moment[i] = archive.require(v->name, trainable[i].values.size()).values;
    }
    return ckpt;
}

void require_matching_config(const Checkpoint& checkpoint, const SubNetworkConfig& expected) {
    if (!(checkpoint.state.params.config == expected)) {
        throw ConfigError("checkpoint generator " + to_json(checkpoint.state.params.config).dump() +
                          " does not match the configured " + to_json(expected).dump());
    }
}

}  // namespace srim
