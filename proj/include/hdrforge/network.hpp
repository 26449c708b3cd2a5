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

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hdrforge/tensor.hpp"

namespace hdrforge {

enum class Variant : std::uint8_t { Unet = 0, ResNet = 1, Custom = 2 };

enum class LayerKind : std::uint8_t {
    Input = 0,
    Conv = 1,
    Deconv = 2,
    BatchNorm = 3,
    LeakyRelu = 4,
    Relu = 5,
    Sigmoid = 6,
    Concat = 7,
    Add = 8,
};

enum class Mode { Train, Eval };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
std::string to_string(LayerKind kind);

/// Spatial stride as a ratio: {2,1} downsamples, {1,2} upsamples, {1,1} keeps size.
struct Stride {
    int num = 1;
    int den = 1;
    friend bool operator==(const Stride&, const Stride&) = default;
};

/// One node of the layer graph. Inputs name earlier nodes by id.
struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::Input;
    std::vector<std::string> inputs;
    int kernel = 0;
    Stride stride;
    int in_channels = 0;
    int out_channels = 0;
    int branch = -1;     // Input: which exposure slot feeds this node
    float slope = 0.2f;  // LeakyRelu negative slope
    bool bias = true;    // Conv/Deconv additive bias

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Declarative encoder / merger / decoder graph.
///
/// Execution order is encoder_layers, merger_layers, decoder_layers. Each
/// exposure slot gets its own encoder branch with separate weights; the
/// merger starts with the channel-wise concatenation of the branches.
struct NetworkSpec {
    Variant variant = Variant::Custom;
    int k_inputs = 3;
    int patch = 256;
    int width_divisor = 1;
    int input_channels = 6;
    std::vector<LayerSpec> encoder_layers;
    std::vector<LayerSpec> merger_layers;
    std::vector<LayerSpec> decoder_layers;
    std::string output;

    std::vector<LayerSpec> layers() const;
    /// Input height and width must be multiples of this.
    int divisibility() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Eight stride-2 encoders down to a 1x1x512 bottleneck (for 256 inputs),
/// eight mirrored decoders with skip connections, sigmoid output layer.
/// `width_divisor` scales every channel count down for cheap experiments.
NetworkSpec build_unet(int k, int patch = 256, int width_divisor = 1);

/// Three stride-2 encoders to a 32x32x256 block (for 256 inputs), nine
/// 3x3 residual blocks, three decoders and the output layer.
NetworkSpec build_resnet(int k, int patch = 256, int width_divisor = 1);

/// Output shape {C, H, W} of every layer for a single H x W sample.
/// Throws ShapeError on channel or spatial mismatches.
std::map<std::string, Shape> infer_shapes(const NetworkSpec& spec, int height, int width);

template <typename T>
struct Parameter {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;
};

/// Runtime for a NetworkSpec: parameters, running statistics, forward and
/// reverse-mode differentiation over the layer graph.
///
/// Inputs are shaped {B, k, H, W, 6} or {k, H, W, 6}; outputs {B, H, W, 3}
/// or {H, W, 3} respectively. forward() caches activations for backward();
/// infer() is const and safe to call from several threads.
template <typename T>
class Network {
public:
    explicit Network(NetworkSpec spec, std::uint64_t seed = 0);
    ~Network();
    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept;
    Network& operator=(Network&&) noexcept;

    const NetworkSpec& spec() const { return spec_; }

    BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode);
    BasicTensor<T> infer(const BasicTensor<T>& input) const;

    /// Accumulates parameter gradients from d(loss)/d(output). Throws
    /// StateError when no forward pass is cached.
    void backward(const BasicTensor<T>& output_grad);

    /// d(loss)/d(input) from the last backward(), shaped like the input.
    const BasicTensor<T>& input_gradient() const { return input_grad_; }

    void zero_grad();

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }

    /// Batch-norm running means and variances, named "<layer>.running_mean|var".
    std::vector<Parameter<T>>& buffers() { return buffers_; }
    const std::vector<Parameter<T>>& buffers() const { return buffers_; }

    std::size_t parameter_count() const;

    /// Per-sample {C, H, W} activation shapes observed in the last forward().
    std::map<std::string, Shape> observed_shapes() const;

    /// Sign bit of every rectifier input in the last forward(). Two passes
    /// with equal patterns lie on the same linear piece of the network.
    std::vector<std::uint8_t> rectifier_pattern() const;

    template <typename U>
    Network<U> cast() const
    {
        Network<U> out(spec_);
        for (std::size_t i = 0; i < params_.size(); ++i)
            out.parameters()[i].value = params_[i].value.template cast<U>();
        for (std::size_t i = 0; i < buffers_.size(); ++i)
            out.buffers()[i].value = buffers_[i].value.template cast<U>();
        return out;
    }

    static constexpr double kBatchNormMomentum = 0.99;
    static constexpr double kBatchNormEpsilon = 1e-5;
    static constexpr double kInitStd = 0.02;

private:
    struct Node;
    struct Context;

    void compile();
    void run(const BasicTensor<T>& input, Mode mode, Context& ctx) const;

    NetworkSpec spec_;
    std::vector<Node> nodes_;
    std::vector<Parameter<T>> params_;
    std::vector<Parameter<T>> buffers_;
    std::unique_ptr<Context> cache_;
    BasicTensor<T> input_grad_;
};

extern template class Network<float>;
extern template class Network<double>;

} // namespace hdrforge
