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

#include "hdrforge/network.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "hdrforge/error.hpp"

namespace hdrforge {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Unfolds KxK windows of a CxHxW image into a (C*K*K) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* x, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* cols)
{
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        const T* src_c = x + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                T* row = cols + (static_cast<std::size_t>(c * kernel + ky) * kernel + kx) * plane;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * out_w;
                    if (iy < 0 || iy >= height) {
                        std::fill(dst, dst + out_w, T{0});
                        continue;
                    }
                    const T* src = src_c + static_cast<std::size_t>(iy) * width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < width) ? src[ix] : T{0};
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters (accumulates) columns back into the image.
template <typename T>
void col2im(const T* cols, int channels, int height, int width, int kernel, int stride, int pad,
            int out_h, int out_w, T* x)
{
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        T* dst_c = x + static_cast<std::size_t>(c) * height * width;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const T* row = cols + (static_cast<std::size_t>(c * kernel + ky) * kernel + kx) * plane;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height)
                        continue;
                    const T* src = row + static_cast<std::size_t>(oy) * out_w;
                    T* dst = dst_c + static_cast<std::size_t>(iy) * width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < width)
                            dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

int conv_out(int in, int kernel, int stride)
{
    const int pad = (kernel - 1) / 2;
    return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
T bounded_sigmoid(T x)
{
    const T s = T{1} / (T{1} + std::exp(-x));
    return std::clamp(s, std::numeric_limits<T>::min(), std::nextafter(T{1}, T{0}));
}

void check_layer(const LayerSpec& l)
{
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Deconv) {
        if (l.kernel < 1 || l.kernel % 2 == 0)
            throw ShapeError("layer " + l.id + ": kernel must be odd and >= 1");
        const bool ok = l.kind == LayerKind::Conv ? (l.stride.den == 1 && (l.stride.num == 1 || l.stride.num == 2))
                                                   : (l.stride.num == 1 && l.stride.den == 2);
        if (!ok)
            throw ShapeError("layer " + l.id + ": unsupported stride " + std::to_string(l.stride.num) + "/" +
                             std::to_string(l.stride.den));
        if (l.in_channels < 1 || l.out_channels < 1)
            throw ShapeError("layer " + l.id + ": channel counts must be positive");
    }
}

} // namespace

std::string to_string(Variant v)
{
    switch (v) {
    case Variant::Unet:
        return "unet";
    case Variant::ResNet:
        return "resnet";
    case Variant::Custom:
        return "custom";
    }
    return "unknown";
}

Variant parse_variant(const std::string& name)
{
    if (name == "unet")
        return Variant::Unet;
    if (name == "resnet")
        return Variant::ResNet;
    throw ParameterError("unknown network variant '" + name + "' (expected unet or resnet)");
}

std::string to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv";
    case LayerKind::Deconv: return "deconv";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::LeakyRelu: return "leaky_relu";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::Concat: return "concat_skip";
    case LayerKind::Add: return "add";
    }
    return "unknown";
}

std::vector<LayerSpec> NetworkSpec::layers() const
{
    std::vector<LayerSpec> all;
    all.reserve(encoder_layers.size() + merger_layers.size() + decoder_layers.size());
    all.insert(all.end(), encoder_layers.begin(), encoder_layers.end());
    all.insert(all.end(), merger_layers.begin(), merger_layers.end());
    all.insert(all.end(), decoder_layers.begin(), decoder_layers.end());
    return all;
}

int NetworkSpec::divisibility() const
{
    std::unordered_map<std::string, int> level;
    int deepest = 0;
    for (const auto& l : layers()) {
        int lv = 0;
        for (const auto& in : l.inputs)
            lv = std::max(lv, level[in]);
        if (l.kind == LayerKind::Conv && l.stride.num == 2)
            ++lv;
        if (l.kind == LayerKind::Deconv)
            --lv;
        level[l.id] = lv;
        deepest = std::max(deepest, lv);
    }
    return 1 << deepest;
}

// ---------------------------------------------------------------------------
// Architecture builders

namespace {

class GraphBuilder {
public:
    explicit GraphBuilder(NetworkSpec& spec) : spec_(spec) {}

    void section(std::vector<LayerSpec>* s) { section_ = s; }

    std::string input(const std::string& id, int branch, int channels)
    {
        LayerSpec l{.id = id, .kind = LayerKind::Input, .in_channels = channels, .out_channels = channels};
        l.branch = branch;
        return add(std::move(l));
    }

    std::string conv(const std::string& id, const std::string& in, int cin, int cout, int kernel, int stride)
    {
        return add({.id = id, .kind = LayerKind::Conv, .inputs = {in}, .kernel = kernel, .stride = {stride, 1},
                    .in_channels = cin, .out_channels = cout});
    }

    std::string deconv(const std::string& id, const std::string& in, int cin, int cout, int kernel)
    {
        return add({.id = id, .kind = LayerKind::Deconv, .inputs = {in}, .kernel = kernel, .stride = {1, 2},
                    .in_channels = cin, .out_channels = cout});
    }

    std::string unary(LayerKind kind, const std::string& id, const std::string& in, int channels)
    {
        return add({.id = id, .kind = kind, .inputs = {in}, .in_channels = channels, .out_channels = channels});
    }

    std::string concat(const std::string& id, std::vector<std::string> ins, int channels)
    {
        if (ins.size() == 1)
            return ins.front();
        return add({.id = id, .kind = LayerKind::Concat, .inputs = std::move(ins), .out_channels = channels});
    }

    std::string sum(const std::string& id, const std::string& a, const std::string& b, int channels)
    {
        return add({.id = id, .kind = LayerKind::Add, .inputs = {a, b}, .in_channels = channels,
                    .out_channels = channels});
    }

    /// conv/deconv, optional batch norm, activation.
    std::string stage(bool up, const std::string& id, const std::string& in, int cin, int cout, bool norm,
                      LayerKind act)
    {
        std::string x = up ? deconv(id, in, cin, cout, 5) : conv(id, in, cin, cout, 5, 2);
        if (norm)
            x = unary(LayerKind::BatchNorm, id + ".bn", x, cout);
        return unary(act, id + ".act", x, cout);
    }

    /// Encoder stages 1-2 for every exposure slot; returns the concatenated
    /// outputs of stage 1 and stage 2 (used as skips and as merger input).
    std::pair<std::string, std::string> branches(int k, int c1, int c2)
    {
        std::vector<std::string> e1s, e2s;
        section(&spec_.encoder_layers);
        for (int b = 0; b < k; ++b) {
            const std::string tag = "_b" + std::to_string(b);
            const auto in = input("input" + tag, b, spec_.input_channels);
            const auto e1 = stage(false, "enc1" + tag, in, spec_.input_channels, c1, false, LayerKind::LeakyRelu);
            const auto e2 = stage(false, "enc2" + tag, e1, c1, c2, true, LayerKind::LeakyRelu);
            e1s.push_back(e1);
            e2s.push_back(e2);
        }
        section(&spec_.merger_layers);
        const auto cat2 = concat("enc2_concat", e2s, k * c2);
        section(&spec_.decoder_layers);
        const auto cat1 = concat("enc1_concat", e1s, k * c1);
        return {cat1, cat2};
    }

    std::string output_layer(const std::string& in, int cin)
    {
        const auto out = conv("output", in, cin, 3, 5, 1);
        return unary(LayerKind::Sigmoid, "output.act", out, 3);
    }

private:
    std::string add(LayerSpec l)
    {
        std::string id = l.id;
        section_->push_back(std::move(l));
        return id;
    }

    NetworkSpec& spec_;
    std::vector<LayerSpec>* section_ = nullptr;
};

int scaled(int channels, int divisor)
{
    return std::max(1, channels / divisor);
}

void check_builder_args(int k, int patch, int divisor, int divisibility)
{
    if (k < 1)
        throw ParameterError("network needs at least one input exposure");
    if (divisor < 1)
        throw ParameterError("width divisor must be >= 1");
    if (patch <= 0 || patch % divisibility != 0)
        throw ShapeError("patch size " + std::to_string(patch) + " must be a positive multiple of " +
                         std::to_string(divisibility));
}

} // namespace

NetworkSpec build_unet(int k, int patch, int width_divisor)
{
    check_builder_args(k, patch, width_divisor, 256);
    NetworkSpec spec;
    spec.variant = Variant::Unet;
    spec.k_inputs = k;
    spec.patch = patch;
    spec.width_divisor = width_divisor;
    auto ch = [&](int c) { return scaled(c, width_divisor); };

    GraphBuilder g(spec);
    // the skip from stage 1 is the decoder's concat; build it after the merger
    // so the execution order stays encoder, merger, decoder
    std::vector<std::string> e1s, e2s;
    g.section(&spec.encoder_layers);
    for (int b = 0; b < k; ++b) {
        const std::string tag = "_b" + std::to_string(b);
        const auto in = g.input("input" + tag, b, spec.input_channels);
        e1s.push_back(g.stage(false, "enc1" + tag, in, spec.input_channels, ch(64), false, LayerKind::LeakyRelu));
        e2s.push_back(g.stage(false, "enc2" + tag, e1s.back(), ch(64), ch(128), true, LayerKind::LeakyRelu));
    }

    g.section(&spec.merger_layers);
    const int enc_channels[] = {64, 128, 256, 512, 512, 512, 512, 512};
    std::vector<std::string> enc(8);
    std::vector<int> enc_c(8);
    enc[1] = g.concat("enc2_concat", e2s, k * ch(128));
    enc_c[1] = k * ch(128);
    for (int i = 2; i < 8; ++i) {
        enc[i] = g.stage(false, "enc" + std::to_string(i + 1), enc[i - 1], enc_c[i - 1], ch(enc_channels[i]), true,
                         LayerKind::LeakyRelu);
        enc_c[i] = ch(enc_channels[i]);
    }

    g.section(&spec.decoder_layers);
    enc[0] = g.concat("enc1_concat", e1s, k * ch(64));
    enc_c[0] = k * ch(64);
    const int dec_channels[] = {512, 512, 512, 512, 256, 128, 64, 64};
    std::string x = enc[7];
    int cx = enc_c[7];
    for (int j = 0; j < 8; ++j) {
        const std::string id = "dec" + std::to_string(j + 1);
        x = g.stage(true, id, x, cx, ch(dec_channels[j]), true, LayerKind::Relu);
        cx = ch(dec_channels[j]);
        const int mirror = 6 - j; // decoder j+1 output matches encoder (7 - j)
        if (mirror >= 0) {
            x = g.concat(id + ".skip", {x, enc[static_cast<std::size_t>(mirror)]}, cx + enc_c[static_cast<std::size_t>(mirror)]);
            cx += enc_c[static_cast<std::size_t>(mirror)];
        }
    }
    spec.output = g.output_layer(x, cx);
    return spec;
}

NetworkSpec build_resnet(int k, int patch, int width_divisor)
{
    check_builder_args(k, patch, width_divisor, 8);
    NetworkSpec spec;
    spec.variant = Variant::ResNet;
    spec.k_inputs = k;
    spec.patch = patch;
    spec.width_divisor = width_divisor;
    auto ch = [&](int c) { return scaled(c, width_divisor); };

    GraphBuilder g(spec);
    auto [cat1, cat2] = g.branches(k, ch(64), ch(128));
    // branches() leaves the decoder section active after emitting enc1_concat;
    // move that node so it runs after the residual trunk.
    LayerSpec skip1;
    const bool has_skip1 = k > 1;
    if (has_skip1) {
        skip1 = spec.decoder_layers.back();
        spec.decoder_layers.pop_back();
    }

    g.section(&spec.merger_layers);
    const int c3 = ch(256);
    std::string x = g.stage(false, "enc3", cat2, k * ch(128), c3, true, LayerKind::LeakyRelu);
    for (int r = 1; r <= 9; ++r) {
        const std::string id = "res" + std::to_string(r);
        auto y = g.conv(id + ".conv1", x, c3, c3, 3, 1);
        y = g.unary(LayerKind::BatchNorm, id + ".bn1", y, c3);
        y = g.unary(LayerKind::Relu, id + ".relu", y, c3);
        y = g.conv(id + ".conv2", y, c3, c3, 3, 1);
        y = g.unary(LayerKind::BatchNorm, id + ".bn2", y, c3);
        x = g.sum(id, x, y, c3);
    }

    g.section(&spec.decoder_layers);
    if (has_skip1)
        spec.decoder_layers.push_back(skip1);
    x = g.stage(true, "dec1", x, c3, ch(128), true, LayerKind::Relu);
    x = g.concat("dec1.skip", {x, cat2}, ch(128) + k * ch(128));
    x = g.stage(true, "dec2", x, ch(128) + k * ch(128), ch(64), true, LayerKind::Relu);
    x = g.concat("dec2.skip", {x, cat1}, ch(64) + k * ch(64));
    x = g.stage(true, "dec3", x, ch(64) + k * ch(64), ch(64), true, LayerKind::Relu);
    spec.output = g.output_layer(x, ch(64));
    return spec;
}

std::map<std::string, Shape> infer_shapes(const NetworkSpec& spec, int height, int width)
{
    std::map<std::string, Shape> shapes;
    for (const auto& l : spec.layers()) {
        check_layer(l);
        std::vector<const Shape*> ins;
        for (const auto& id : l.inputs) {
            auto it = shapes.find(id);
            if (it == shapes.end())
                throw ShapeError("layer " + l.id + " reads unknown or later layer " + id);
            ins.push_back(&it->second);
        }
        Shape out;
        switch (l.kind) {
        case LayerKind::Input:
            out = {l.out_channels, height, width};
            break;
        case LayerKind::Conv:
        case LayerKind::Deconv: {
            const Shape& s = *ins.at(0);
            if (s[0] != l.in_channels)
                throw ShapeError("layer " + l.id + " expects " + std::to_string(l.in_channels) + " channels, got " +
                                 std::to_string(s[0]));
            if (l.kind == LayerKind::Conv)
                out = {l.out_channels, conv_out(s[1], l.kernel, l.stride.num), conv_out(s[2], l.kernel, l.stride.num)};
            else
                out = {l.out_channels, s[1] * 2, s[2] * 2};
            break;
        }
        case LayerKind::Concat: {
            int c = 0;
            for (const Shape* s : ins) {
                if ((*s)[1] != (*ins[0])[1] || (*s)[2] != (*ins[0])[2])
                    throw ShapeError("concat " + l.id + ": spatial sizes differ (" + shape_string(*s) + " vs " +
                                     shape_string(*ins[0]) + ")");
                c += (*s)[0];
            }
            out = {c, (*ins[0])[1], (*ins[0])[2]};
            break;
        }
        case LayerKind::Add:
            if (*ins.at(0) != *ins.at(1))
                throw ShapeError("add " + l.id + ": operand shapes differ");
            out = *ins[0];
            break;
        default:
            out = *ins.at(0);
            break;
        }
        if (l.out_channels > 0 && out[0] != l.out_channels)
            throw ShapeError("layer " + l.id + " declares " + std::to_string(l.out_channels) +
                             " output channels, shape rule gives " + std::to_string(out[0]));
        if (out[1] < 1 || out[2] < 1)
            throw ShapeError("layer " + l.id + " collapses to an empty activation");
        shapes[l.id] = out;
    }
    if (!shapes.count(spec.output))
        throw ShapeError("network output '" + spec.output + "' is not a layer");
    return shapes;
}

// ---------------------------------------------------------------------------
// Runtime

template <typename T>
struct Network<T>::Node {
    LayerSpec layer;
    std::vector<int> inputs;
    int weight = -1;
    int bias = -1;
    int gamma = -1;
    int beta = -1;
    int running_mean = -1;
    int running_var = -1;
    int last_use = -1; // index of the last node consuming this output
};

template <typename T>
struct Network<T>::Context {
    Mode mode = Mode::Eval;
    int batch = 1;
    bool batched = false;
    int height = 0;
    int width = 0;
    std::vector<BasicTensor<T>> out;
    std::vector<std::vector<T>> bn_mean;
    std::vector<std::vector<T>> bn_var;
    std::vector<std::vector<T>> bn_invstd;
};

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec))
{
    compile();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, kInitStd);
    for (auto& p : params_) {
        const bool is_weight = p.name.size() > 7 && p.name.ends_with(".weight");
        if (!is_weight)
            continue;
        for (auto& v : p.value.values())
            v = static_cast<T>(normal(rng));
    }
}

template <typename T>
Network<T>::~Network() = default;

template <typename T>
Network<T>::Network(const Network& other)
    : spec_(other.spec_), nodes_(other.nodes_), params_(other.params_), buffers_(other.buffers_)
{
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other)
{
    if (this != &other) {
        spec_ = other.spec_;
        nodes_ = other.nodes_;
        params_ = other.params_;
        buffers_ = other.buffers_;
        cache_.reset();
        input_grad_ = {};
    }
    return *this;
}

template <typename T>
Network<T>::Network(Network&&) noexcept = default;
template <typename T>
Network<T>& Network<T>::operator=(Network&&) noexcept = default;

template <typename T>
void Network<T>::compile()
{
    infer_shapes(spec_, spec_.divisibility(), spec_.divisibility());
    std::unordered_map<std::string, int> index;
    auto add_param = [&](const std::string& name, Shape shape, T fill) {
        params_.push_back({name, BasicTensor<T>(shape, fill), BasicTensor<T>(shape)});
        return static_cast<int>(params_.size()) - 1;
    };
    auto add_buffer = [&](const std::string& name, int c, T fill) {
        buffers_.push_back({name, BasicTensor<T>({c}, fill), {}});
        return static_cast<int>(buffers_.size()) - 1;
    };
    for (const auto& l : spec_.layers()) {
        if (index.count(l.id))
            throw ShapeError("duplicate layer id " + l.id);
        Node n;
        n.layer = l;
        for (const auto& in : l.inputs)
            n.inputs.push_back(index.at(in));
        const int k = l.kernel;
        switch (l.kind) {
        case LayerKind::Conv:
            n.weight = add_param(l.id + ".weight", {l.out_channels, l.in_channels, k, k}, T{0});
            if (l.bias)
                n.bias = add_param(l.id + ".bias", {l.out_channels}, T{0});
            break;
        case LayerKind::Deconv:
            n.weight = add_param(l.id + ".weight", {l.in_channels, l.out_channels, k, k}, T{0});
            if (l.bias)
                n.bias = add_param(l.id + ".bias", {l.out_channels}, T{0});
            break;
        case LayerKind::BatchNorm:
            n.gamma = add_param(l.id + ".gamma", {l.out_channels}, T{1});
            n.beta = add_param(l.id + ".beta", {l.out_channels}, T{0});
            n.running_mean = add_buffer(l.id + ".running_mean", l.out_channels, T{0});
            n.running_var = add_buffer(l.id + ".running_var", l.out_channels, T{1});
            break;
        default:
            break;
        }
        const int self = static_cast<int>(nodes_.size());
        for (int in : n.inputs)
            nodes_[static_cast<std::size_t>(in)].last_use = self;
        index[l.id] = self;
        nodes_.push_back(std::move(n));
    }
    // the output must survive until the end of a pass
    nodes_[static_cast<std::size_t>(index.at(spec_.output))].last_use = std::numeric_limits<int>::max();
}

template <typename T>
std::size_t Network<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_)
        n += p.value.size();
    return n;
}

template <typename T>
void Network<T>::run(const BasicTensor<T>& input, Mode mode, Context& ctx) const
{
    const bool keep = &ctx == cache_.get();
    const auto& s = input.shape();
    if (s.size() != 4 && s.size() != 5)
        throw ShapeError("network input must be k x H x W x C or B x k x H x W x C, got " + shape_string(s));
    ctx.batched = s.size() == 5;
    const std::size_t o = ctx.batched ? 1 : 0;
    ctx.batch = ctx.batched ? s[0] : 1;
    const int k = s[o], h = s[o + 1], w = s[o + 2], c_in = s[o + 3];
    if (k != spec_.k_inputs || c_in != spec_.input_channels)
        throw ShapeError("network expects " + std::to_string(spec_.k_inputs) + " exposures of " +
                         std::to_string(spec_.input_channels) + " channels, got " + shape_string(s));
    const int div = spec_.divisibility();
    if (h % div != 0 || w % div != 0 || h == 0 || w == 0)
        throw ShapeError("input " + std::to_string(h) + "x" + std::to_string(w) + " is not a multiple of " +
                         std::to_string(div));
    ctx.mode = mode;
    ctx.height = h;
    ctx.width = w;
    const int B = ctx.batch;
    const std::size_t n_nodes = nodes_.size();
    ctx.out.assign(n_nodes, {});
    ctx.bn_mean.assign(n_nodes, {});
    ctx.bn_var.assign(n_nodes, {});
    ctx.bn_invstd.assign(n_nodes, {});

    AlignedVector<T> cols;
    for (std::size_t ni = 0; ni < n_nodes; ++ni) {
        const Node& node = nodes_[ni];
        const LayerSpec& l = node.layer;
        BasicTensor<T>& y = ctx.out[ni];
        auto in = [&](std::size_t i) -> const BasicTensor<T>& {
            return ctx.out[static_cast<std::size_t>(node.inputs.at(i))];
        };
        switch (l.kind) {
        case LayerKind::Input: {
            y = BasicTensor<T>({B, c_in, h, w});
            const std::size_t hw = static_cast<std::size_t>(h) * w;
            for (int b = 0; b < B; ++b) {
                const T* src = input.data() + (static_cast<std::size_t>(b) * k + l.branch) * hw * c_in;
                T* dst = y.data() + static_cast<std::size_t>(b) * c_in * hw;
                for (std::size_t p = 0; p < hw; ++p)
                    for (int c = 0; c < c_in; ++c)
                        dst[static_cast<std::size_t>(c) * hw + p] = src[p * c_in + c];
            }
            break;
        }
        case LayerKind::Conv: {
            const auto& x = in(0);
            const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int K = l.kernel, S = l.stride.num, P = (K - 1) / 2;
            const int Ho = conv_out(H, K, S), Wo = conv_out(W, K, S);
            const int Co = l.out_channels;
            const std::size_t rows = static_cast<std::size_t>(C) * K * K, hw = static_cast<std::size_t>(Ho) * Wo;
            y = BasicTensor<T>({B, Co, Ho, Wo});
            cols.resize(rows * hw);
            ConstMatrixMap<T> wm(params_[static_cast<std::size_t>(node.weight)].value.data(), Co,
                                 static_cast<Eigen::Index>(rows));
            const T* bias = node.bias >= 0 ? params_[static_cast<std::size_t>(node.bias)].value.data() : nullptr;
            for (int b = 0; b < B; ++b) {
                im2col(x.data() + static_cast<std::size_t>(b) * C * H * W, C, H, W, K, S, P, Ho, Wo, cols.data());
                MatrixMap<T> ym(y.data() + static_cast<std::size_t>(b) * Co * hw, Co, static_cast<Eigen::Index>(hw));
                ConstMatrixMap<T> cm(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
                ym.noalias() = wm * cm;
                if (bias)
                    for (int c = 0; c < Co; ++c)
                        ym.row(c).array() += bias[c];
            }
            break;
        }
        case LayerKind::Deconv: {
            const auto& x = in(0);
            const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int K = l.kernel, P = (K - 1) / 2;
            const int Ho = 2 * H, Wo = 2 * W, Co = l.out_channels;
            const std::size_t rows = static_cast<std::size_t>(Co) * K * K, hw = static_cast<std::size_t>(H) * W;
            y = BasicTensor<T>({B, Co, Ho, Wo});
            cols.resize(rows * hw);
            ConstMatrixMap<T> wm(params_[static_cast<std::size_t>(node.weight)].value.data(), C,
                                 static_cast<Eigen::Index>(rows));
            const T* bias = node.bias >= 0 ? params_[static_cast<std::size_t>(node.bias)].value.data() : nullptr;
            const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
            for (int b = 0; b < B; ++b) {
                ConstMatrixMap<T> xm(x.data() + static_cast<std::size_t>(b) * C * hw, C, static_cast<Eigen::Index>(hw));
                MatrixMap<T> cm(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
                cm.noalias() = wm.transpose() * xm;
                T* yb = y.data() + static_cast<std::size_t>(b) * Co * out_plane;
                col2im(cols.data(), Co, Ho, Wo, K, 2, P, H, W, yb);
                for (int c = 0; bias && c < Co; ++c)
                    for (std::size_t p = 0; p < out_plane; ++p)
                        yb[static_cast<std::size_t>(c) * out_plane + p] += bias[c];
            }
            break;
        }
        case LayerKind::BatchNorm: {
            const auto& x = in(0);
            const int C = x.dim(1);
            const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
            const T* gamma = params_[static_cast<std::size_t>(node.gamma)].value.data();
            const T* beta = params_[static_cast<std::size_t>(node.beta)].value.data();
            std::vector<T> mean(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C)),
                invstd(static_cast<std::size_t>(C));
            if (mode == Mode::Train) {
                const double n = static_cast<double>(B) * static_cast<double>(hw);
                for (int c = 0; c < C; ++c) {
                    double sum = 0.0, sq = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const T* p = x.data() + (static_cast<std::size_t>(b) * C + c) * hw;
                        for (std::size_t i = 0; i < hw; ++i)
                            sum += static_cast<double>(p[i]);
                    }
                    const double m = sum / n;
                    for (int b = 0; b < B; ++b) {
                        const T* p = x.data() + (static_cast<std::size_t>(b) * C + c) * hw;
                        for (std::size_t i = 0; i < hw; ++i) {
                            const double d = static_cast<double>(p[i]) - m;
                            sq += d * d;
                        }
                    }
                    mean[static_cast<std::size_t>(c)] = static_cast<T>(m);
                    var[static_cast<std::size_t>(c)] = static_cast<T>(sq / n);
                    invstd[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(sq / n + kBatchNormEpsilon));
                }
            } else {
                const T* rm = buffers_[static_cast<std::size_t>(node.running_mean)].value.data();
                const T* rv = buffers_[static_cast<std::size_t>(node.running_var)].value.data();
                for (int c = 0; c < C; ++c) {
                    mean[static_cast<std::size_t>(c)] = rm[c];
                    var[static_cast<std::size_t>(c)] = rv[c];
                    invstd[static_cast<std::size_t>(c)] =
                        static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + kBatchNormEpsilon));
                }
            }
            y = BasicTensor<T>(x.shape());
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const std::size_t off = (static_cast<std::size_t>(b) * C + c) * hw;
                    const T m = mean[static_cast<std::size_t>(c)];
                    const T scale = gamma[c] * invstd[static_cast<std::size_t>(c)];
                    for (std::size_t i = 0; i < hw; ++i)
                        y[off + i] = (x[off + i] - m) * scale + beta[c];
                }
            ctx.bn_mean[ni] = std::move(mean);
            ctx.bn_var[ni] = std::move(var);
            ctx.bn_invstd[ni] = std::move(invstd);
            break;
        }
        case LayerKind::LeakyRelu:
        case LayerKind::Relu: {
            const auto& x = in(0);
            const T slope = l.kind == LayerKind::Relu ? T{0} : static_cast<T>(l.slope);
            y = BasicTensor<T>(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = x[i] > T{0} ? x[i] : slope * x[i];
            break;
        }
        case LayerKind::Sigmoid: {
            const auto& x = in(0);
            y = BasicTensor<T>(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i)
                y[i] = bounded_sigmoid(x[i]);
            break;
        }
        case LayerKind::Concat: {
            int C = 0;
            for (std::size_t i = 0; i < node.inputs.size(); ++i)
                C += in(i).dim(1);
            const int H = in(0).dim(2), W = in(0).dim(3);
            const std::size_t hw = static_cast<std::size_t>(H) * W;
            y = BasicTensor<T>({B, C, H, W});
            for (int b = 0; b < B; ++b) {
                T* dst = y.data() + static_cast<std::size_t>(b) * C * hw;
                for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                    const auto& x = in(i);
                    if (x.dim(2) != H || x.dim(3) != W)
                        throw ShapeError("concat " + l.id + ": spatial sizes differ");
                    const std::size_t n = static_cast<std::size_t>(x.dim(1)) * hw;
                    std::copy_n(x.data() + static_cast<std::size_t>(b) * n, n, dst);
                    dst += n;
                }
            }
            break;
        }
        case LayerKind::Add: {
            const auto& a = in(0);
            const auto& bt = in(1);
            if (a.shape() != bt.shape())
                throw ShapeError("add " + l.id + ": operand shapes differ");
            y = a;
            for (std::size_t i = 0; i < y.size(); ++i)
                y[i] += bt[i];
            break;
        }
        }
        if (!y.all_finite())
            throw NumericError("non-finite activation in layer " + l.id);
        if (!keep) {
            // inference keeps only what later layers still read
            for (int i : node.inputs)
                if (nodes_[static_cast<std::size_t>(i)].last_use == static_cast<int>(ni))
                    ctx.out[static_cast<std::size_t>(i)] = {};
        }
    }
}

namespace {

template <typename T>
BasicTensor<T> to_output_layout(const BasicTensor<T>& nchw, bool batched)
{
    const int B = nchw.dim(0), C = nchw.dim(1), H = nchw.dim(2), W = nchw.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    BasicTensor<T> out(batched ? Shape{B, H, W, C} : Shape{H, W, C});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (std::size_t p = 0; p < hw; ++p)
                out[(static_cast<std::size_t>(b) * hw + p) * C + c] = nchw[(static_cast<std::size_t>(b) * C + c) * hw + p];
    return out;
}

} // namespace

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& input, Mode mode)
{
    auto ctx = std::make_unique<Context>();
    cache_ = std::move(ctx);
    run(input, mode, *cache_);
    if (mode == Mode::Train) {
        const T m = static_cast<T>(kBatchNormMomentum);
        for (std::size_t ni = 0; ni < nodes_.size(); ++ni) {
            const Node& node = nodes_[ni];
            if (node.layer.kind != LayerKind::BatchNorm)
                continue;
            T* rm = buffers_[static_cast<std::size_t>(node.running_mean)].value.data();
            T* rv = buffers_[static_cast<std::size_t>(node.running_var)].value.data();
            for (std::size_t c = 0; c < cache_->bn_mean[ni].size(); ++c) {
                rm[c] = m * rm[c] + (T{1} - m) * cache_->bn_mean[ni][c];
                rv[c] = m * rv[c] + (T{1} - m) * cache_->bn_var[ni][c];
            }
        }
    }
    const std::size_t out_index = static_cast<std::size_t>(
        std::find_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.layer.id == spec_.output; }) -
        nodes_.begin());
    return to_output_layout(cache_->out[out_index], cache_->batched);
}

template <typename T>
BasicTensor<T> Network<T>::infer(const BasicTensor<T>& input) const
{
    Context ctx;
    run(input, Mode::Eval, ctx);
    const std::size_t out_index = static_cast<std::size_t>(
        std::find_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.layer.id == spec_.output; }) -
        nodes_.begin());
    return to_output_layout(ctx.out[out_index], ctx.batched);
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& p : params_)
        p.grad.fill(T{0});
}

template <typename T>
void Network<T>::backward(const BasicTensor<T>& output_grad)
{
    if (!cache_ || cache_->out.empty())
        throw StateError("backward() called without a cached forward pass");
    Context& ctx = *cache_;
    const std::size_t n_nodes = nodes_.size();
    const std::size_t out_index = static_cast<std::size_t>(
        std::find_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.layer.id == spec_.output; }) -
        nodes_.begin());
    const auto& out = ctx.out[out_index];
    const int B = out.dim(0), Cout = out.dim(1), Hout = out.dim(2), Wout = out.dim(3);
    const Shape expected = ctx.batched ? Shape{B, Hout, Wout, Cout} : Shape{Hout, Wout, Cout};
    if (output_grad.shape() != expected)
        throw ShapeError("output gradient shape " + shape_string(output_grad.shape()) + " does not match output " +
                         shape_string(expected));

    std::vector<BasicTensor<T>> grads(n_nodes);
    {
        BasicTensor<T> g({B, Cout, Hout, Wout});
        const std::size_t hw = static_cast<std::size_t>(Hout) * Wout;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < Cout; ++c)
                for (std::size_t p = 0; p < hw; ++p)
                    g[(static_cast<std::size_t>(b) * Cout + c) * hw + p] =
                        output_grad[(static_cast<std::size_t>(b) * hw + p) * Cout + c];
        grads[out_index] = std::move(g);
    }
    auto accumulate = [&](int target, BasicTensor<T>&& g) {
        auto& slot = grads[static_cast<std::size_t>(target)];
        if (slot.empty()) {
            slot = std::move(g);
            return;
        }
        for (std::size_t i = 0; i < slot.size(); ++i)
            slot[i] += g[i];
    };

    AlignedVector<T> cols;
    AlignedVector<T> dcols;
    input_grad_ = BasicTensor<T>(ctx.batched ? Shape{B, spec_.k_inputs, ctx.height, ctx.width, spec_.input_channels}
                                             : Shape{spec_.k_inputs, ctx.height, ctx.width, spec_.input_channels});

    for (std::size_t r = n_nodes; r-- > 0;) {
        if (grads[r].empty())
            continue;
        const Node& node = nodes_[r];
        const LayerSpec& l = node.layer;
        const BasicTensor<T>& gy = grads[r];
        auto in = [&](std::size_t i) -> const BasicTensor<T>& {
            return ctx.out[static_cast<std::size_t>(node.inputs.at(i))];
        };
        switch (l.kind) {
        case LayerKind::Input: {
            const int C = gy.dim(1);
            const std::size_t hw = static_cast<std::size_t>(ctx.height) * ctx.width;
            for (int b = 0; b < B; ++b) {
                T* dst = input_grad_.data() + (static_cast<std::size_t>(b) * spec_.k_inputs + l.branch) * hw * C;
                const T* src = gy.data() + static_cast<std::size_t>(b) * C * hw;
                for (std::size_t p = 0; p < hw; ++p)
                    for (int c = 0; c < C; ++c)
                        dst[p * C + c] += src[static_cast<std::size_t>(c) * hw + p];
            }
            break;
        }
        case LayerKind::Conv: {
            const auto& x = in(0);
            const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int K = l.kernel, S = l.stride.num, P = (K - 1) / 2;
            const int Ho = gy.dim(2), Wo = gy.dim(3), Co = l.out_channels;
            const std::size_t rows = static_cast<std::size_t>(C) * K * K, hw = static_cast<std::size_t>(Ho) * Wo;
            auto& wp = params_[static_cast<std::size_t>(node.weight)];
            auto* bp = node.bias >= 0 ? &params_[static_cast<std::size_t>(node.bias)] : nullptr;
            ConstMatrixMap<T> wm(wp.value.data(), Co, static_cast<Eigen::Index>(rows));
            MatrixMap<T> dw(wp.grad.data(), Co, static_cast<Eigen::Index>(rows));
            BasicTensor<T> gx(x.shape());
            cols.resize(rows * hw);
            dcols.resize(rows * hw);
            for (int b = 0; b < B; ++b) {
                im2col(x.data() + static_cast<std::size_t>(b) * C * H * W, C, H, W, K, S, P, Ho, Wo, cols.data());
                ConstMatrixMap<T> cm(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
                ConstMatrixMap<T> gm(gy.data() + static_cast<std::size_t>(b) * Co * hw, Co, static_cast<Eigen::Index>(hw));
                dw.noalias() += gm * cm.transpose();
                for (int c = 0; bp && c < Co; ++c)
                    bp->grad[static_cast<std::size_t>(c)] += gm.row(c).sum();
                MatrixMap<T> dcm(dcols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
                dcm.noalias() = wm.transpose() * gm;
                col2im(dcols.data(), C, H, W, K, S, P, Ho, Wo, gx.data() + static_cast<std::size_t>(b) * C * H * W);
            }
            accumulate(node.inputs[0], std::move(gx));
            break;
        }
        case LayerKind::Deconv: {
            const auto& x = in(0);
            const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int K = l.kernel, P = (K - 1) / 2;
            const int Ho = gy.dim(2), Wo = gy.dim(3), Co = l.out_channels;
            const std::size_t rows = static_cast<std::size_t>(Co) * K * K, hw = static_cast<std::size_t>(H) * W;
            const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
            auto& wp = params_[static_cast<std::size_t>(node.weight)];
            auto* bp = node.bias >= 0 ? &params_[static_cast<std::size_t>(node.bias)] : nullptr;
            ConstMatrixMap<T> wm(wp.value.data(), C, static_cast<Eigen::Index>(rows));
            MatrixMap<T> dw(wp.grad.data(), C, static_cast<Eigen::Index>(rows));
            BasicTensor<T> gx(x.shape());
            dcols.resize(rows * hw);
            for (int b = 0; b < B; ++b) {
                const T* gyb = gy.data() + static_cast<std::size_t>(b) * Co * out_plane;
                im2col(gyb, Co, Ho, Wo, K, 2, P, H, W, dcols.data());
                ConstMatrixMap<T> dcm(dcols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(hw));
                ConstMatrixMap<T> xm(x.data() + static_cast<std::size_t>(b) * C * hw, C, static_cast<Eigen::Index>(hw));
                dw.noalias() += xm * dcm.transpose();
                MatrixMap<T> gxm(gx.data() + static_cast<std::size_t>(b) * C * hw, C, static_cast<Eigen::Index>(hw));
                gxm.noalias() = wm * dcm;
                for (int c = 0; bp && c < Co; ++c) {
                    T s{0};
                    const T* p = gyb + static_cast<std::size_t>(c) * out_plane;
                    for (std::size_t i = 0; i < out_plane; ++i)
                        s += p[i];
                    bp->grad[static_cast<std::size_t>(c)] += s;
                }
            }
            accumulate(node.inputs[0], std::move(gx));
            break;
        }
        case LayerKind::BatchNorm: {
            const auto& x = in(0);
            const int C = x.dim(1);
            const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
            auto& gp = params_[static_cast<std::size_t>(node.gamma)];
            auto& bp = params_[static_cast<std::size_t>(node.beta)];
            const auto& mean = ctx.bn_mean[r];
            const auto& invstd = ctx.bn_invstd[r];
            BasicTensor<T> gx(x.shape());
            const double n = static_cast<double>(B) * static_cast<double>(hw);
            for (int c = 0; c < C; ++c) {
                const T m = mean[static_cast<std::size_t>(c)];
                const T is = invstd[static_cast<std::size_t>(c)];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int b = 0; b < B; ++b) {
                    const std::size_t off = (static_cast<std::size_t>(b) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double dy = static_cast<double>(gy[off + i]);
                        sum_dy += dy;
                        sum_dy_xhat += dy * static_cast<double>((x[off + i] - m) * is);
                    }
                }
                gp.grad[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy_xhat);
                bp.grad[static_cast<std::size_t>(c)] += static_cast<T>(sum_dy);
                const double g = static_cast<double>(gp.value[static_cast<std::size_t>(c)]);
                for (int b = 0; b < B; ++b) {
                    const std::size_t off = (static_cast<std::size_t>(b) * C + c) * hw;
                    for (std::size_t i = 0; i < hw; ++i) {
                        const double dy = static_cast<double>(gy[off + i]);
                        if (ctx.mode == Mode::Train) {
                            const double xhat = static_cast<double>((x[off + i] - m) * is);
                            gx[off + i] = static_cast<T>(g * is / n * (n * dy - sum_dy - xhat * sum_dy_xhat));
                        } else {
                            gx[off + i] = static_cast<T>(g * is * dy);
                        }
                    }
                }
            }
            accumulate(node.inputs[0], std::move(gx));
            break;
        }
        case LayerKind::LeakyRelu:
        case LayerKind::Relu: {
            const auto& x = in(0);
            const T slope = l.kind == LayerKind::Relu ? T{0} : static_cast<T>(l.slope);
            BasicTensor<T> gx(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i)
                gx[i] = x[i] > T{0} ? gy[i] : slope * gy[i];
            accumulate(node.inputs[0], std::move(gx));
            break;
        }
        case LayerKind::Sigmoid: {
            const auto& y = ctx.out[r];
            BasicTensor<T> gx(y.shape());
            for (std::size_t i = 0; i < y.size(); ++i)
                gx[i] = gy[i] * y[i] * (T{1} - y[i]);
            accumulate(node.inputs[0], std::move(gx));
            break;
        }
        case LayerKind::Concat: {
            const int C = gy.dim(1);
            const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
            int offset = 0;
            for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                const auto& x = in(i);
                const int Ci = x.dim(1);
                BasicTensor<T> gx(x.shape());
                for (int b = 0; b < B; ++b)
                    std::copy_n(gy.data() + (static_cast<std::size_t>(b) * C + offset) * hw,
                                static_cast<std::size_t>(Ci) * hw,
                                gx.data() + static_cast<std::size_t>(b) * Ci * hw);
                offset += Ci;
                accumulate(node.inputs[i], std::move(gx));
            }
            break;
        }
        case LayerKind::Add:
            accumulate(node.inputs[0], BasicTensor<T>(gy));
            accumulate(node.inputs[1], BasicTensor<T>(gy));
            break;
        }
        grads[r] = {};
    }
}

template <typename T>
std::map<std::string, Shape> Network<T>::observed_shapes() const
{
    std::map<std::string, Shape> shapes;
    if (!cache_)
        return shapes;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& s = cache_->out[i].shape();
        if (s.size() == 4)
            shapes[nodes_[i].layer.id] = {s[1], s[2], s[3]};
    }
    return shapes;
}

template <typename T>
std::vector<std::uint8_t> Network<T>::rectifier_pattern() const
{
    std::vector<std::uint8_t> pattern;
    if (!cache_)
        return pattern;
    for (const auto& node : nodes_) {
        if (node.layer.kind != LayerKind::Relu && node.layer.kind != LayerKind::LeakyRelu)
            continue;
        const auto& x = cache_->out[static_cast<std::size_t>(node.inputs[0])];
        for (std::size_t i = 0; i < x.size(); ++i)
            pattern.push_back(x[i] > T{0} ? 1 : 0);
    }
    return pattern;
}

template class Network<float>;
template class Network<double>;

} // namespace hdrforge
