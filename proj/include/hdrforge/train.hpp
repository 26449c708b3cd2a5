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
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdrforge/checkpoint.hpp"
#include "hdrforge/dataset.hpp"
#include "hdrforge/image.hpp"
#include "hdrforge/network.hpp"
#include "hdrforge/radiance.hpp"

namespace hdrforge {

/// SumRoot is the plain L2 norm of the tonemapped difference per sample
/// (averaged over a batch). Mean is the mean squared tonemapped difference
/// over every element of the batch.
enum class LossReduction { SumRoot, Mean };

std::string to_string(LossReduction r);
LossReduction parse_loss_reduction(const std::string& name);

struct TrainConfig {
    Variant variant = Variant::ResNet;
    int k = 3;
    int width_divisor = 1;
    double learning_rate = 1e-4;
    int batch_size = 4;
    std::uint64_t iterations = 1000;
    std::uint64_t seed = 0;
    double mu = kDefaultMu;
    double gamma = kDefaultGamma;
    double motion_threshold = kDefaultMotionThreshold;
    int oversample_factor = kDefaultOversampleFactor;
    std::uint64_t checkpoint_interval = 1000;
    LossReduction reduction = LossReduction::SumRoot;

    /// Throws ParameterError.
    void validate() const;
};

/// Unknown keys are rejected so a typo cannot silently fall back to a default.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig read_train_config(const std::filesystem::path& path);

template <typename T>
struct LossResult {
    double value = 0.0;
    /// d(value)/d(predicted), same shape as predicted.
    BasicTensor<T> gradient;
};

/// Loss on μ-law tonemapped tensors. The leading dimension is the batch
/// when the rank is 4 ({B,H,W,C}); rank 3 is a single sample.
template <typename T>
LossResult<T> tonemapped_loss(const BasicTensor<T>& predicted, const BasicTensor<T>& target,
                              const TonemapParams& params, LossReduction reduction = LossReduction::SumRoot);

double loss(const RadianceImage& predicted, const RadianceImage& target, const TonemapParams& params = {},
            LossReduction reduction = LossReduction::SumRoot);

template <typename T>
class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

    void step(std::vector<Parameter<T>>& params);

    std::uint64_t steps() const { return t_; }
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

    OptimizerState state() const;
    void restore(const OptimizerState& state);

private:
    double lr_, b1_, b2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};
extern template class Adam<float>;
extern template class Adam<double>;

/// {B,k,S,S,6} network inputs and {B,S,S,3} targets.
Tensor batch_inputs(std::span<const PatchRecord> batch);
Tensor batch_targets(std::span<const PatchRecord> batch);

/// One optimizer update. Returns the loss before the update; throws
/// NumericError with diagnostics on a non-finite loss.
double train_step(Network<float>& net, Adam<float>& optimizer, std::span<const PatchRecord> batch,
                  const TrainConfig& config);

/// Record indices for the given iteration: a fresh permutation of the data
/// per epoch, seeded from (seed, epoch).
std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch_size, std::uint64_t iteration,
                                       std::uint64_t seed);

struct GradientCheckOptions {
    double step = 1e-4;
    /// 0 checks every parameter coordinate.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
    Mode mode = Mode::Train;
    LossReduction reduction = LossReduction::SumRoot;
    /// Denominator floor for the relative error.
    double floor = 1e-8;
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose finite-difference probe crossed a rectifier kink.
    std::size_t excluded = 0;
    std::string worst_parameter;
};

/// Analytic gradient of the tonemapped loss against central differences.
/// Parameters and batch-norm buffers are restored before returning.
GradientCheckReport gradient_check(Network<double>& net, const BasicTensor<double>& input,
                                   const BasicTensor<double>& target, const TonemapParams& params,
                                   const GradientCheckOptions& options = {});

struct TrainProgress {
    std::uint64_t iteration = 0;
    double loss = 0.0;
    double seconds = 0.0;
};

struct TrainRunOptions {
    /// Checkpoint path, written every checkpoint_interval iterations and at the end.
    std::filesystem::path checkpoint;
    /// CSV log (iteration,loss,seconds); appended on resume.
    std::filesystem::path log;
    std::optional<std::filesystem::path> resume_from;
    /// Network used when not resuming. Defaults to a fresh network for the config.
    std::optional<NetworkSpec> spec;
    std::function<void(const TrainProgress&)> on_step;
};

/// Random-access view over training records.
struct RecordSource {
    std::size_t size = 0;
    std::function<PatchRecord(std::size_t)> fetch;
};

RecordSource memory_source(const std::vector<PatchRecord>& records);

struct TrainResult {
    Network<float> network;
    std::vector<TrainProgress> history;
};

/// Runs iterations [start, config.iterations) where start is 0 or the
/// resumed checkpoint's iteration.
TrainResult run_training(const TrainConfig& config, const RecordSource& source, const TrainRunOptions& options);

NetworkSpec network_for(const TrainConfig& config, int patch);

} // namespace hdrforge
