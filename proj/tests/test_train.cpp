/*
 * Copyright 2026 The hdrforge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hdrforge/checkpoint.hpp"
#include "hdrforge/error.hpp"
#include "hdrforge/train.hpp"

using namespace hdrforge;
namespace fs = std::filesystem;

namespace {

template <typename T>
bool same_values(const std::vector<Parameter<T>>& a, const std::vector<Parameter<T>>& b)
{
    if (a.size() != b.size())
        return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].value != b[i].value)
            return false;
    return true;
}

LayerSpec layer(std::string id, LayerKind kind, std::vector<std::string> inputs, int cin, int cout, int kernel = 0,
                Stride stride = {})
{
    LayerSpec l;
    l.id = std::move(id);
    l.kind = kind;
    l.inputs = std::move(inputs);
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = kernel;
    l.stride = stride;
    return l;
}

NetworkSpec two_conv(int cin = 6, int hidden = 8)
{
    NetworkSpec s;
    s.k_inputs = 1;
    s.input_channels = cin;
    auto in = layer("in", LayerKind::Input, {}, cin, cin);
    in.branch = 0;
    s.encoder_layers = {in};
    s.merger_layers = {
        layer("conv1", LayerKind::Conv, {"in"}, cin, hidden, 3, {1, 1}),
        layer("act1", LayerKind::LeakyRelu, {"conv1"}, hidden, hidden),
        layer("conv2", LayerKind::Conv, {"act1"}, hidden, 3, 3, {1, 1}),
        layer("out", LayerKind::Sigmoid, {"conv2"}, 3, 3),
    };
    s.output = "out";
    return s;
}

template <typename T>
void fill_random(BasicTensor<T>& t, std::uint64_t seed, double lo, double hi)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values())
        v = static_cast<T>(u(rng));
}

std::vector<PatchRecord> random_records(int n, int k, int size, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<PatchRecord> out;
    for (int i = 0; i < n; ++i) {
        PatchRecord r;
        r.k = k;
        r.size = size;
        r.inputs.resize(static_cast<std::size_t>(k) * size * size * 6);
        r.target.resize(static_cast<std::size_t>(size) * size * 3);
        for (auto& v : r.inputs)
            v = u(rng);
        for (std::size_t p = 0; p < r.target.size(); ++p)
            r.target[p] = r.inputs[(p / 3) * 6 + 3 + p % 3];
        r.provenance = "rand@" + std::to_string(i);
        out.push_back(std::move(r));
    }
    return out;
}

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / "hdrforge_test_train";
    fs::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("loss trivial cases")
{
    BasicTensor<double> a({2, 2, 3});
    fill_random(a, 1, 0.0, 1.0);
    CHECK(tonemapped_loss(a, a, {}).value == 0.0);

    // single pixel with T(p)=0.6, T(t)=0.1
    BasicTensor<double> p({1, 1, 1}, std::vector<double>{mu_law_inverse(0.6, kDefaultMu)});
    BasicTensor<double> t({1, 1, 1}, std::vector<double>{mu_law_inverse(0.1, kDefaultMu)});
    CHECK(tonemapped_loss(p, t, {}).value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(tonemapped_loss(p, t, {}, LossReduction::Mean).value == doctest::Approx(0.25).epsilon(1e-12));

    CHECK_THROWS_AS(tonemapped_loss(a, BasicTensor<double>({2, 3, 3}), {}), ShapeError);
}

TEST_CASE("loss matches a scalar recomputation")
{
    // 1 x 2 pixels, one channel: each term recomputed with long double
    const std::vector<double> pv{0.013, 0.42}, tv{0.2, 0.0007};
    BasicTensor<double> p({1, 2, 1}, pv), t({1, 2, 1}, tv);
    long double ss = 0;
    for (int i = 0; i < 2; ++i) {
        const long double mu = 5000.0L;
        const long double d = std::log(1 + mu * pv[i]) / std::log(1 + mu) - std::log(1 + mu * tv[i]) / std::log(1 + mu);
        ss += d * d;
    }
    CHECK(std::abs(tonemapped_loss(p, t, {}).value - static_cast<double>(std::sqrt(ss))) < 1e-14);

    RadianceImage ip{Image(2, 1, 1, std::vector<float>{0.013f, 0.42f})};
    RadianceImage it{Image(2, 1, 1, std::vector<float>{0.2f, 0.0007f})};
    CHECK(loss(ip, it) == doctest::Approx(static_cast<double>(std::sqrt(ss))).epsilon(1e-6));
}

TEST_CASE("loss is invariant to a shared pixel permutation")
{
    BasicTensor<double> p({1, 4, 4, 3}), t({1, 4, 4, 3});
    fill_random(p, 2, 0.0, 1.0);
    fill_random(t, 3, 0.0, 1.0);
    std::vector<int> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(4));
    auto pp = p, tp = t;
    for (int i = 0; i < 16; ++i)
        for (int c = 0; c < 3; ++c) {
            pp.data()[i * 3 + c] = p.data()[perm[i] * 3 + c];
            tp.data()[i * 3 + c] = t.data()[perm[i] * 3 + c];
        }
    for (auto r : {LossReduction::SumRoot, LossReduction::Mean})
        CHECK(tonemapped_loss(pp, tp, {}, r).value == doctest::Approx(tonemapped_loss(p, t, {}, r).value).epsilon(1e-14));
}

TEST_CASE("loss gradient matches finite differences")
{
    BasicTensor<double> p({2, 3, 3, 3}), t({2, 3, 3, 3});
    fill_random(p, 5, 0.05, 0.95);
    fill_random(t, 6, 0.0, 1.0);
    for (auto r : {LossReduction::SumRoot, LossReduction::Mean}) {
        const auto res = tonemapped_loss(p, t, {}, r);
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto a = p, b = p;
            a.data()[i] += 1e-7;
            b.data()[i] -= 1e-7;
            const double fd = (tonemapped_loss(a, t, {}, r).value - tonemapped_loss(b, t, {}, r).value) / 2e-7;
            CHECK(res.gradient.data()[i] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("gradient check: one-parameter linear model is exact")
{
    NetworkSpec s;
    s.k_inputs = 1;
    s.input_channels = 3;
    auto in = layer("in", LayerKind::Input, {}, 3, 3);
    in.branch = 0;
    auto scale = layer("scale", LayerKind::Conv, {"in"}, 1, 1, 1, {1, 1});
    scale.bias = false;
    s.encoder_layers = {in};
    s.merger_layers = {scale};
    s.output = "scale";
    s.input_channels = 1;
    s.encoder_layers[0].in_channels = s.encoder_layers[0].out_channels = 1;

    Network<double> net(s, 0);
    REQUIRE(net.parameter_count() == 1);
    net.parameters()[0].value.data()[0] = 0.7;
    BasicTensor<double> x({1, 4, 4, 1}), y({4, 4, 1});
    fill_random(x, 7, 0.1, 0.9);
    fill_random(y, 8, 0.0, 0.3);
    const auto rep = gradient_check(net, x, y, {}, {.step = 1e-6});
    CHECK(rep.checked == 1);
    CHECK(rep.max_relative_error < 1e-8);
}

TEST_CASE("gradient check: two-layer conv net on 8x8")
{
    Network<double> net(two_conv(), 3);
    for (auto& p : net.parameters())
        fill_random(p.value, std::hash<std::string>{}(p.name), -0.3, 0.3);
    BasicTensor<double> x({2, 1, 8, 8, 6}), y({2, 8, 8, 3});
    fill_random(x, 9, 0.0, 1.0);
    fill_random(y, 10, 0.0, 1.0);
    REQUIRE(net.parameter_count() >= 500);
    const auto before = net.parameters();
    const auto rep = gradient_check(net, x, y, {}, {.max_coordinates = 600, .seed = 1});
    CHECK(rep.checked + rep.excluded == 600);
    CHECK(rep.checked >= 500);
    CHECK(rep.max_relative_error < 1e-3);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(net.parameters()[i].value == before[i].value);
}

TEST_CASE("gradient check: a rectifier at its kink is excluded")
{
    Network<double> net(two_conv(1, 1), 0);
    // 1x1 input, zero bias: conv1 output is exactly zero
    for (auto& p : net.parameters())
        fill_random(p.value, 1, 0.2, 0.6);

    for (auto& p : net.parameters())
        if (p.name == "conv1.bias")
            p.value.data()[0] = 0.0;
    BasicTensor<double> x({1, 1, 1, 1}, std::vector<double>{0.0});
    x.data()[0] = 0.0;
    BasicTensor<double> y({1, 1, 3});
    fill_random(y, 2, 0.0, 1.0);
    const auto rep = gradient_check(net, x, y, {});
    CHECK(rep.excluded >= 1);
    CHECK(rep.max_relative_error < 1e-6);
}

TEST_CASE("adam update and zero learning rate")
{
    std::vector<Parameter<double>> ps(1);
    ps[0].name = "w";
    ps[0].value = BasicTensor<double>({2}, std::vector<double>{1.0, -2.0});
    ps[0].grad = BasicTensor<double>({2}, std::vector<double>{0.5, -4.0});
    Adam<double> opt(0.1);
    opt.step(ps);
    // first step moves each coordinate by lr * sign(g) up to epsilon
    CHECK(ps[0].value.data()[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(ps[0].value.data()[1] == doctest::Approx(-1.9).epsilon(1e-7));
    const double w1 = ps[0].value.data()[0];
    opt.step(ps);
    const double m = 0.9 * 0.05 + 0.05, v = 0.999 * 0.00025 + 0.00025;
    const double step = 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.998001)) + 1e-8);
    CHECK(std::abs(ps[0].value.data()[0] - (w1 - step)) < 1e-15);

    Network<float> net(two_conv(), 1);
    const auto before = net.parameters();
    Adam<float> frozen(0.0);
    auto recs = random_records(2, 1, 8, 3);
    TrainConfig cfg;
    cfg.k = 1;
    train_step(net, frozen, recs, cfg);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(net.parameters()[i].value == before[i].value);
}

TEST_CASE("repeated steps on one batch descend")
{
    Network<float> net(two_conv(), 2);
    Adam<float> opt(1e-3);
    auto recs = random_records(2, 1, 8, 4);
    TrainConfig cfg;
    cfg.k = 1;
    std::vector<double> losses;
    for (int i = 0; i < 200; ++i)
        losses.push_back(train_step(net, opt, recs, cfg));
    // window means are non-increasing
    for (int w = 50; w + 50 <= 200; w += 50) {
        double prev = 0, cur = 0;
        for (int i = 0; i < 50; ++i) {
            prev += losses[static_cast<std::size_t>(w - 50 + i)];
            cur += losses[static_cast<std::size_t>(w + i)];
        }
        CHECK(cur <= prev);
    }
    CHECK(losses.back() < 0.8 * losses.front());
}

TEST_CASE("batch schedule is a per-epoch permutation")
{
    std::vector<int> seen(10, 0);
    for (std::uint64_t it = 0; it < 5; ++it)
        for (auto i : batch_indices(10, 2, it, 7))
            ++seen[i];
    for (int s : seen)
        CHECK(s == 1);
    CHECK(batch_indices(10, 4, 3, 7) == batch_indices(10, 4, 3, 7));
    CHECK(batch_indices(10, 4, 0, 7) != batch_indices(10, 4, 0, 8));
    CHECK_THROWS_AS(batch_indices(0, 4, 0, 7), DataError);
}

TEST_CASE("training config parsing")
{
    const auto c = train_config_from_json(nlohmann::json::parse(
        R"({"variant":"unet","k":2,"learning_rate":0.001,"batch_size":2,"iterations":5,"seed":18446744073709551615,"reduction":"mean"})"));
    CHECK(c.variant == Variant::Unet);
    CHECK(c.k == 2);
    CHECK(c.seed == 18446744073709551615ull);
    CHECK(c.reduction == LossReduction::Mean);
    CHECK(train_config_from_json(to_json(c)).learning_rate == 0.001);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"batch_size":0})")), ParameterError);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"learning_rate":-1})")), ParameterError);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"lr":0.1})")), ParameterError);
}

TEST_CASE("runs are deterministic and resume exactly")
{
    TrainConfig cfg;
    cfg.variant = Variant::ResNet;
    cfg.k = 2;
    cfg.width_divisor = 16;
    cfg.batch_size = 2;
    cfg.iterations = 6;
    cfg.learning_rate = 1e-3;
    cfg.seed = 11;
    cfg.checkpoint_interval = 3;
    const auto recs = random_records(5, 2, 16, 12);
    const auto src = memory_source(recs);

    TrainRunOptions a{.checkpoint = scratch("a.hdrw"), .log = scratch("a.csv")};
    const auto ra = run_training(cfg, src, a);
    TrainRunOptions b{.checkpoint = scratch("b.hdrw")};
    const auto rb = run_training(cfg, src, b);
    CHECK(same_values(ra.network.parameters(), rb.network.parameters()));
    REQUIRE(ra.history.size() == 6);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(ra.history[i].loss == rb.history[i].loss);

    // stop at 3, resume to 6
    auto half = cfg;
    half.iterations = 3;
    TrainRunOptions c{.checkpoint = scratch("c.hdrw"), .log = scratch("c.csv")};
    run_training(half, src, c);
    TrainRunOptions d{.checkpoint = scratch("c.hdrw"), .log = scratch("c.csv"), .resume_from = scratch("c.hdrw")};
    const auto rd = run_training(cfg, src, d);
    REQUIRE(rd.history.size() == 3);
    CHECK(rd.history.front().iteration == 4);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(rd.history[i].loss == ra.history[i + 3].loss);
    CHECK(same_values(rd.network.parameters(), ra.network.parameters()));
    CHECK(same_values(rd.network.buffers(), ra.network.buffers()));

    std::ifstream log(scratch("c.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line))
        ++lines;
    CHECK(lines == 7);
}

TEST_CASE("checkpoint round trip and corruption")
{
    Network<float> net(build_unet(2, 256, 32), 4);
    OptimizerState st;
    st.iteration = 12;
    st.step = 12;
    for (const auto& p : net.parameters()) {
        st.m.emplace_back(p.value.size(), 0.25f);
        st.v.emplace_back(p.value.size(), 0.5f);
    }
    const auto path = scratch("rt.hdrw");
    save_checkpoint(path, net, &st);
    const auto ck = load_checkpoint(path);
    CHECK(ck.network.spec() == net.spec());
    CHECK(same_values(ck.network.parameters(), net.parameters()));
    CHECK(same_values(ck.network.buffers(), net.buffers()));
    REQUIRE(ck.optimizer);
    CHECK(*ck.optimizer == st);

    save_checkpoint(path, net);
    CHECK_FALSE(load_checkpoint(path).optimizer);

    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 10);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "HDRX garbage";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("non-finite loss aborts with diagnostics")
{
    Network<float> net(two_conv(), 1);
    Adam<float> opt(1e-3);
    auto recs = random_records(1, 1, 8, 5);
    recs[0].target[4] = std::nanf("");
    TrainConfig cfg;
    cfg.k = 1;
    try {
        train_step(net, opt, recs, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("rand@0") != std::string::npos);
    }
}
