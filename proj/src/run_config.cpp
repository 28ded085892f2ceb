#include "srim/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "srim/errors.hpp"

namespace srim {
namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) throw ConfigError("invalid value '" + value + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("invalid boolean '" + value + "' for " + key);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>("", v); },
            [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto str = [](std::string RunConfig::*m) {
            return Field{[m](RunConfig& c, const std::string& v) { c.*m = v; }, [m](const RunConfig& c) { return c.*m; }};
        };
        auto gen_int = [](int SubNetworkConfig::*m) {
            return Field{[m](RunConfig& c, const std::string& v) { c.generator.*m = parse_number<int>("", v); },
                         [m](const RunConfig& c) { return std::to_string(c.generator.*m); }};
        };
        auto train_int = [](int TrainConfig::*m) {
            return Field{[m](RunConfig& c, const std::string& v) { c.train.*m = parse_number<int>("", v); },
                         [m](const RunConfig& c) { return std::to_string(c.train.*m); }};
        };
        t["data_dir"] = str(&RunConfig::data_dir);
        t["cache_dir"] = str(&RunConfig::cache_dir);
        t["output_dir"] = str(&RunConfig::output_dir);
        t["feature_weights"] = str(&RunConfig::feature_weights);
        t["target_size"] = number_field(&RunConfig::target_size);
        t["split_fraction"] = {[](RunConfig& c, const std::string& v) { c.split_fraction = parse_number<double>("", v); },
                               [](const RunConfig& c) { return format_double(c.split_fraction); }};
        t["conv_layers"] = gen_int(&SubNetworkConfig::conv_layers);
        t["kernel"] = gen_int(&SubNetworkConfig::kernel);
        t["hidden_channels"] = gen_int(&SubNetworkConfig::hidden_channels);
        t["noise_channels"] = gen_int(&SubNetworkConfig::noise_channels);
        t["feature_backend"] = {
            [](RunConfig& c, const std::string& v) {
                try {
                    c.feature_backend = parse_feature_backend(v);
                } catch (const ArgumentError& e) {
                    throw ConfigError(e.what());
                }
            },
            [](const RunConfig& c) { return to_string(c.feature_backend); }};
        t["projection_dim"] = number_field(&RunConfig::projection_dim);
        t["calibration_images"] = number_field(&RunConfig::calibration_images);
        t["iterations"] = {[](RunConfig& c, const std::string& v) { c.train.iterations = parse_number<std::int64_t>("", v); },
                           [](const RunConfig& c) { return std::to_string(c.train.iterations); }};
        t["inner_steps"] = train_int(&TrainConfig::inner_steps);
        t["m_lower"] = train_int(&TrainConfig::m_lower);
        t["m_upper"] = train_int(&TrainConfig::m_upper);
        t["batch_outer"] = train_int(&TrainConfig::batch_outer);
        t["batch_inner"] = train_int(&TrainConfig::batch_inner);
        t["learning_rate"] = {[](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_number<double>("", v); },
                              [](const RunConfig& c) { return format_double(c.train.learning_rate); }};
        t["optimizer"] = {
            [](RunConfig& c, const std::string& v) {
                try {
                    c.train.optimizer = parse_optimizer(v);
                } catch (const ArgumentError& e) {
                    throw ConfigError(e.what());
                }
            },
            [](const RunConfig& c) { return to_string(c.train.optimizer); }};
        t["lower_metric"] = {
            [](RunConfig& c, const std::string& v) {
                try {
                    c.train.lower_metric = parse_lower_metric(v);
                } catch (const ArgumentError& e) {
                    throw ConfigError(e.what());
                }
            },
            [](const RunConfig& c) { return to_string(c.train.lower_metric); }};
        t["checkpoint_every"] = number_field(&RunConfig::checkpoint_every);
        t["seed"] = number_field(&RunConfig::seed);
        t["threads"] = number_field(&RunConfig::threads);
        t["deterministic"] = {[](RunConfig& c, const std::string& v) { c.deterministic = parse_bool("deterministic", v); },
                              [](const RunConfig& c) { return std::string(c.deterministic ? "true" : "false"); }};
        return t;
    }();
    return table;
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : fields()) out.push_back(k);
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
        it->second.set(*this, value);
    } catch (const ConfigError&) {
        throw ConfigError("invalid value '" + value + "' for " + key);
    }
}

std::string RunConfig::get(const std::string& key) const {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second.get(*this);
}

std::map<std::string, std::string> RunConfig::as_map() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, f] : fields()) out[k] = f.get(*this);
    return out;
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    for (const auto& [k, v] : as_map()) out << k << " = " << v << '\n';
    return out.str();
}

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (target_size < kTotalFactor || target_size % kTotalFactor != 0) {
        fail("target_size must be a positive multiple of 4, got " + std::to_string(target_size));
    }
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) fail("split_fraction must lie in (0, 1)");
    if (train.m_lower < 1 || train.m_upper < 1) fail("m_lower and m_upper must be >= 1");
    if (train.batch_inner < 1) fail("batch_inner must be >= 1");
    if (train.batch_inner > train.batch_outer) fail("batch_inner must not exceed batch_outer");
    if (train.iterations < 0 || train.inner_steps < 0) fail("iterations and inner_steps must be >= 0");
    if (!(train.learning_rate >= 0.0)) fail("learning_rate must be >= 0");
    if (projection_dim < 0) fail("projection_dim must be >= 0");
    if (calibration_images < 1) fail("calibration_images must be >= 1");
    if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
    if (threads < 1) fail("threads must be >= 1");
    if (feature_backend == FeatureBackend::pretrained_deep_net && feature_weights.empty()) {
        fail("feature_backend pretrained-deep-net needs feature_weights");
    }
    try {
        generator.validate();
    } catch (const ArgumentError& e) {
        fail(e.what());
    }
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
        }
        try {
            config.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    apply_config_text(config, text.str(), path.string());
}

void apply_environment(RunConfig& config) {
    for (const auto& key : RunConfig::keys()) {
        std::string name = kEnvPrefix + key;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        if (const char* value = std::getenv(name.c_str())) config.set(key, value);
    }
}

TrainConfig make_train_config(const RunConfig& config) {
    TrainConfig t = config.train;
    t.seed = config.seed;
    t.threads = config.effective_threads();
    return t;
}

std::uint64_t feature_seed(const RunConfig& config) { return derive_seed(config.seed, "feature-net"); }
std::uint64_t projection_seed(const RunConfig& config) { return derive_seed(config.seed, "projection"); }
std::uint64_t sampling_seed(const RunConfig& config) { return derive_seed(config.seed, "sampling"); }

}  // namespace srim
