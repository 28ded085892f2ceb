#include <fstream>

#include <gtest/gtest.h>

#include "srim/archive.hpp"
#include "srim/checkpoint.hpp"
#include "srim/errors.hpp"
#include "test_util.hpp"

using namespace srim;

namespace {

SubNetworkConfig tiny_net() {
    SubNetworkConfig c;
    c.conv_layers = 3;
    c.kernel = 3;
    c.hidden_channels = 5;
    c.noise_channels = 2;
    return c;
}

}  // namespace

TEST(Archive, RoundTrip) {
    test::TempDir dir("ar");
    TensorArchive a;
    a.metadata["hello"] = "world";
    const std::vector<double> v{1.5, -2.0, 3.25, 1e-300, 7.0, 8.0};
    a.add("x", {2, 3}, v);
    a.add("empty", {0}, std::vector<double>{});
    write_archive(a, dir / "a.srim");
    const TensorArchive b = read_archive(dir / "a.srim");
    EXPECT_EQ(b.metadata["hello"], "world");
    ASSERT_NE(b.find("x"), nullptr);
    EXPECT_EQ(b.find("x")->values, v);
    EXPECT_EQ(b.find("x")->shape, (std::vector<std::int64_t>{2, 3}));
    EXPECT_EQ(b.find("nope"), nullptr);
    EXPECT_THROW(b.require("x", 5), FormatError);
    EXPECT_THROW(a.add("bad", {4}, v), ArgumentError);
}

TEST(Archive, RejectsCorruptFiles) {
    test::TempDir dir("ar");
    std::ofstream(dir / "junk.srim") << "SRIMTNSR but not really";
    EXPECT_THROW(read_archive(dir / "junk.srim"), FormatError);
    EXPECT_ANY_THROW(read_archive(dir / "missing.srim"));
    TensorArchive a;
    a.add("x", {3}, std::vector<double>{1, 2, 3});
    write_archive(a, dir / "a.srim");
    std::ifstream in(dir / "a.srim", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() - 4);
    std::ofstream(dir / "cut.srim", std::ios::binary) << bytes;
    EXPECT_THROW(read_archive(dir / "cut.srim"), FormatError);
}

TEST(Archive, Sha256KnownValue) {
    const std::string abc = "abc";
    EXPECT_EQ(sha256_hex(std::span(reinterpret_cast<const unsigned char*>(abc.data()), abc.size())),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checkpoint, RoundTripRestoresEverything) {
    test::TempDir dir("ck");
    Checkpoint ck;
    ck.state.params = init_params(tiny_net(), 4);
    ck.state.optimizer = init_optimizer(ck.state.params);
    ck.state.optimizer.step = 17;
    ck.state.optimizer.first_moment[2][1] = 0.25;
    ck.state.optimizer.second_moment[0][0] = 3.5;
    ck.state.params.stages[1].norms[1].running_var[3] = 2.75;
    ck.state.iteration = 42;
    ck.state.history.iterations.push_back({1, 0.1 + 0.2, 0.5, {1.0 / 3.0, 2.0}, 1.25});
    ck.feature_weights = {0.5, 1e-3, 7.0};
    ck.feature_checksum = "abc123";
    ck.feature_backend = "fixed-random-convnet";
    ck.config = {{"seed", "5"}};
    save_checkpoint(ck, dir / "c.srim");

    Checkpoint back = load_checkpoint(dir / "c.srim");
    EXPECT_EQ(back.state.params.config, tiny_net());
    EXPECT_EQ(back.state.iteration, 42);
    EXPECT_EQ(back.state.optimizer.step, 17);
    EXPECT_EQ(back.state.optimizer.first_moment, ck.state.optimizer.first_moment);
    EXPECT_EQ(back.state.optimizer.second_moment, ck.state.optimizer.second_moment);
    auto a = trainable_arrays(ck.state.params), b = trainable_arrays(back.state.params);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].name, b[i].name);
        EXPECT_TRUE(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin()));
    }
    EXPECT_EQ(back.state.params.stages[1].norms[1].running_var[3], 2.75);
    ASSERT_EQ(back.state.history.iterations.size(), 1u);
    EXPECT_EQ(history_csv(back.state.history), history_csv(ck.state.history));
    EXPECT_EQ(back.feature_weights, ck.feature_weights);
    EXPECT_EQ(back.feature_checksum, "abc123");
    EXPECT_EQ(back.feature_backend, "fixed-random-convnet");
    EXPECT_EQ(back.config["seed"], "5");
}

TEST(Checkpoint, SameStateSameBytes) {
    test::TempDir dir("ck");
    Checkpoint ck;
    ck.state.params = init_params(tiny_net(), 5);
    ck.state.optimizer = init_optimizer(ck.state.params);
    save_checkpoint(ck, dir / "a.srim");
    save_checkpoint(ck, dir / "b.srim");
    EXPECT_EQ(sha256_file(dir / "a.srim"), sha256_file(dir / "b.srim"));
}

TEST(Checkpoint, ConfigMismatchAndBadFiles) {
    test::TempDir dir("ck");
    Checkpoint ck;
    ck.state.params = init_params(tiny_net(), 6);
    ck.state.optimizer = init_optimizer(ck.state.params);
    save_checkpoint(ck, dir / "c.srim");
    const Checkpoint back = load_checkpoint(dir / "c.srim");
    EXPECT_NO_THROW(require_matching_config(back, tiny_net()));
    SubNetworkConfig other = tiny_net();
    other.hidden_channels = 6;
    EXPECT_THROW(require_matching_config(back, other), ConfigError);

    TensorArchive not_ck;
    not_ck.metadata["format"] = "something-else";
    write_archive(not_ck, dir / "x.srim");
    EXPECT_THROW(load_checkpoint(dir / "x.srim"), FormatError);
}

TEST(Checkpoint, ConfigJson) {
    const SubNetworkConfig c = tiny_net();
    EXPECT_EQ(sub_network_from_json(to_json(c)), c);
}
