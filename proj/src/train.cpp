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

#include "hdrforge/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "hdrforge/error.hpp"
#include "hdrforge/log.hpp"

namespace hdrforge {

std::string to_string(LossReduction r)
{
    return r == LossReduction::SumRoot ? "sum_root" : "mean";
}

LossReduction parse_loss_reduction(const std::string& name)
{
    if (name == "sum_root")
        return LossReduction::SumRoot;
    if (name == "mean")
        return LossReduction::Mean;
    throw ParameterError("unknown loss reduction '" + name + "' (expected sum_root or mean)");
}

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ParameterError("learning_rate must be a finite non-negative number");
    if (batch_size < 1)
        throw ParameterError("batch_size must be at least 1");
    if (k < 2)
        throw ParameterError("k must be at least 2");
    if (width_divisor < 1)
        throw ParameterError("width_divisor must be at least 1");
    if (!(mu > 0.0))
        throw ParameterError("mu must be positive");
    if (!(gamma > 1.0))
        throw ParameterError("gamma must exceed 1");
    if (oversample_factor < 1)
        throw ParameterError("oversample_factor must be at least 1");
    if (checkpoint_interval < 1)
        throw ParameterError("checkpoint_interval must be at least 1");
    if (variant == Variant::Custom)
        throw ParameterError("training requires the unet or resnet variant");
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ParameterError("training config must be a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "variant")
                c.variant = parse_variant(value.get<std::string>());
            else if (key == "k")
                c.k = value.get<int>();
            else if (key == "width_divisor")
                c.width_divisor = value.get<int>();
            else if (key == "learning_rate")
                c.learning_rate = value.get<double>();
            else if (key == "batch_size")
                c.batch_size = value.get<int>();
            else if (key == "iterations")
                c.iterations = value.get<std::uint64_t>();
            else if (key == "seed")
                c.seed = value.get<std::uint64_t>();
            else if (key == "mu")
                c.mu = value.get<double>();
            else if (key == "gamma")
                c.gamma = value.get<double>();
            else if (key == "motion_threshold")
                c.motion_threshold = value.get<double>();
            else if (key == "oversample_factor")
                c.oversample_factor = value.get<int>();
            else if (key == "checkpoint_interval")
                c.checkpoint_interval = value.get<std::uint64_t>();
            else if (key == "reduction")
                c.reduction = parse_loss_reduction(value.get<std::string>());
            else
                throw ParameterError("unknown training config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("bad training config value: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const TrainConfig& c)
{
    return {
        {"variant", to_string(c.variant)},
        {"k", c.k},
        {"width_divisor", c.width_divisor},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"iterations", c.iterations},
        {"seed", c.seed},
        {"mu", c.mu},
        {"gamma", c.gamma},
        {"motion_threshold", c.motion_threshold},
        {"oversample_factor", c.oversample_factor},
        {"checkpoint_interval", c.checkpoint_interval},
        {"reduction", to_string(c.reduction)},
    };
}

TrainConfig read_train_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open training config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return train_config_from_json(j);
}

template <typename T>
LossResult<T> tonemapped_loss(const BasicTensor<T>& predicted, const BasicTensor<T>& target,
                              const TonemapParams& params, LossReduction reduction)
{
    if (predicted.shape() != target.shape())
        throw ShapeError("loss: predicted " + shape_string(predicted.shape()) + " vs target " +
                         shape_string(target.shape()));
    if (predicted.rank() != 3 && predicted.rank() != 4)
        throw ShapeError("loss expects {H,W,C} or {B,H,W,C}, got " + shape_string(predicted.shape()));
    const std::size_t batch = predicted.rank() == 4 ? static_cast<std::size_t>(predicted.shape()[0]) : 1;
    const std::size_t per = batch ? predicted.size() / batch : 0;
    const double mu = params.mu;

    LossResult<T> out{0.0, BasicTensor<T>(predicted.shape())};
    const T* p = predicted.data();
    const T* t = target.data();
    T* g = out.gradient.data();

    std::vector<double> diff(per);
    for (std::size_t b = 0; b < batch; ++b) {
        double ss = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const std::size_t idx = b * per + i;
            diff[i] = mu_law<double>(p[idx], mu) - mu_law<double>(t[idx], mu);
            ss += diff[i] * diff[i];
        }
        if (reduction == LossReduction::SumRoot) {
            const double norm = std::sqrt(ss);
            out.value += norm / static_cast<double>(batch);
            if (norm > 0.0)
                for (std::size_t i = 0; i < per; ++i) {
                    const std::size_t idx = b * per + i;
                    g[idx] = static_cast<T>(diff[i] / (norm * static_cast<double>(batch)) *
                                            mu_law_derivative<double>(p[idx], mu));
                }
        } else {
            const double n = static_cast<double>(predicted.size());
            out.value += ss / n;
            for (std::size_t i = 0; i < per; ++i) {
                const std::size_t idx = b * per + i;
                g[idx] = static_cast<T>(2.0 * diff[i] / n * mu_law_derivative<double>(p[idx], mu));
            }
        }
    }
    return out;
}

template LossResult<float> tonemapped_loss(const BasicTensor<float>&, const BasicTensor<float>&,
                                           const TonemapParams&, LossReduction);
template LossResult<double> tonemapped_loss(const BasicTensor<double>&, const BasicTensor<double>&,
                                            const TonemapParams&, LossReduction);

double loss(const RadianceImage& predicted, const RadianceImage& target, const TonemapParams& params,
            LossReduction reduction)
{
    const auto& a = predicted.pixels;
    const auto& b = target.pixels;
    if (!a.same_shape(b))
        throw ShapeError("loss: images differ in shape");
    const Shape shape{a.height(), a.width(), a.channels()};
    const BasicTensor<float> pa(shape, std::vector<float>(a.data().begin(), a.data().end()));
    const BasicTensor<float> pb(shape, std::vector<float>(b.data().begin(), b.data().end()));
    return tonemapped_loss(pa, pb, params, reduction).value;
}

template <typename T>
Adam<T>::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon)
{
    if (!(learning_rate >= 0.0))
        throw ParameterError("learning rate must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ParameterError("Adam betas must lie in [0, 1)");
}

template <typename T>
void Adam<T>::step(std::vector<Parameter<T>>& params)
{
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.value.size(), T{0});
            v_.emplace_back(p.value.size(), T{0});
        }
    }
    if (m_.size() != params.size())
        throw StateError("optimizer was built for a different parameter set");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (p.grad.size() != p.value.size() || m_[k].size() != p.value.size())
            throw StateError("gradient missing for parameter '" + p.name + "'");
        T* w = p.value.data();
        const T* g = p.grad.data();
        T* m = m_[k].data();
        T* v = v_[k].data();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = g[i];
            const double mi = b1_ * m[i] + (1.0 - b1_) * gi;
            const double vi = b2_ * v[i] + (1.0 - b2_) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            w[i] = static_cast<T>(w[i] - lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
        }
    }
}

template <typename T>
OptimizerState Adam<T>::state() const
{
    OptimizerState s;
    s.step = t_;
    for (std::size_t k = 0; k < m_.size(); ++k) {
        s.m.emplace_back(m_[k].begin(), m_[k].end());
        s.v.emplace_back(v_[k].begin(), v_[k].end());
    }
    return s;
}

template <typename T>
void Adam<T>::restore(const OptimizerState& s)
{
    if (s.m.size() != s.v.size())
        throw StateError("optimizer state has mismatched moment lists");
    t_ = s.step;
    m_.clear();
    v_.clear();
    for (std::size_t k = 0; k < s.m.size(); ++k) {
        m_.emplace_back(s.m[k].begin(), s.m[k].end());
        v_.emplace_back(s.v[k].begin(), s.v[k].end());
    }
}

template class Adam<float>;
template class Adam<double>;

Tensor batch_inputs(std::span<const PatchRecord> batch)
{
    if (batch.empty())
        throw ParameterError("empty batch");
    const int k = batch.front().k;
    const int s = batch.front().size;
    Tensor t({static_cast<int>(batch.size()), k, s, s, 6});
    const std::size_t per = static_cast<std::size_t>(k) * s * s * 6;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].k != k || batch[b].size != s || batch[b].inputs.size() != per)
            throw ShapeError("batch mixes patch shapes (" + batch[b].provenance + ")");
        std::copy(batch[b].inputs.begin(), batch[b].inputs.end(), t.data() + b * per);
    }
    return t;
}

Tensor batch_targets(std::span<const PatchRecord> batch)
{
    if (batch.empty())
        throw ParameterError("empty batch");
    const int s = batch.front().size;
    Tensor t({static_cast<int>(batch.size()), s, s, 3});
    const std::size_t per = static_cast<std::size_t>(s) * s * 3;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].size != s || batch[b].target.size() != per)
            throw ShapeError("batch mixes patch shapes (" + batch[b].provenance + ")");
        std::copy(batch[b].target.begin(), batch[b].target.end(), t.data() + b * per);
    }
    return t;
}

double train_step(Network<float>& net, Adam<float>& optimizer, std::span<const PatchRecord> batch,
                  const TrainConfig& config)
{
    const Tensor input = batch_inputs(batch);
    const Tensor target = batch_targets(batch);
    const Tensor output = net.forward(input, Mode::Train);
    auto result = tonemapped_loss(output, target, TonemapParams{config.mu}, config.reduction);
    if (!std::isfinite(result.value)) {
        std::ostringstream msg;
        msg << "non-finite loss " << result.value << " at optimizer step " << optimizer.steps() + 1
            << "; output finite: " << (output.all_finite() ? "yes" : "no") << "; batch:";
        for (const auto& r : batch)
            msg << ' ' << r.provenance;
        throw NumericError(msg.str());
    }
    net.zero_grad();
    net.backward(result.gradient);
    optimizer.step(net.parameters());
    return result.value;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch_size, std::uint64_t iteration,
                                       std::uint64_t seed)
{
    if (dataset_size == 0)
        throw DataError("no training records");
    if (batch_size < 1)
        throw ParameterError("batch_size must be at least 1");
    std::vector<std::size_t> out;
    std::uint64_t cached_epoch = ~std::uint64_t{0};
    std::vector<std::size_t> perm(dataset_size);
    for (int j = 0; j < batch_size; ++j) {
        const std::uint64_t pos = iteration * static_cast<std::uint64_t>(batch_size) + static_cast<std::uint64_t>(j);
        const std::uint64_t epoch = pos / dataset_size;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
            std::mt19937_64 rng(seq);
            std::shuffle(perm.begin(), perm.end(), rng);
            cached_epoch = epoch;
        }
        out.push_back(perm[pos % dataset_size]);
    }
    return out;
}

namespace {

struct Coordinate {
    std::size_t param;
    std::size_t index;
};

} // namespace

GradientCheckReport gradient_check(Network<double>& net, const BasicTensor<double>& input,
                                   const BasicTensor<double>& target, const TonemapParams& params,
                                   const GradientCheckOptions& options)
{
    if (!(options.step > 0.0))
        throw ParameterError("gradient check step must be positive");
    auto& ps = net.parameters();
    std::vector<BasicTensor<double>> saved_values, saved_buffers;
    for (const auto& p : ps)
        saved_values.push_back(p.value);
    for (const auto& b : net.buffers())
        saved_buffers.push_back(b.value);

    auto evaluate = [&](std::vector<std::uint8_t>* pattern) {
        const auto out = net.forward(input, options.mode);
        if (pattern)
            *pattern = net.rectifier_pattern();
        return tonemapped_loss(out, target, params, options.reduction);
    };

    std::vector<std::uint8_t> base_pattern;
    const auto base = evaluate(&base_pattern);
    net.zero_grad();
    net.backward(base.gradient);
    std::vector<BasicTensor<double>> analytic;
    for (const auto& p : ps)
        analytic.push_back(p.grad);

    std::vector<Coordinate> coords;
    for (std::size_t k = 0; k < ps.size(); ++k)
        for (std::size_t i = 0; i < ps[k].value.size(); ++i)
            coords.push_back({k, i});
    if (options.max_coordinates && options.max_coordinates < coords.size()) {
        std::mt19937_64 rng(options.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(options.max_coordinates);
    }

    GradientCheckReport report;
    std::vector<std::uint8_t> pattern_plus, pattern_minus;
    for (const auto& c : coords) {
        double& w = ps[c.param].value.data()[c.index];
        const double w0 = w;
        w = w0 + options.step;
        const double lp = evaluate(&pattern_plus).value;
        w = w0 - options.step;
        const double lm = evaluate(&pattern_minus).value;
        w = w0;
        if (pattern_plus != base_pattern || pattern_minus != base_pattern) {
            ++report.excluded;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * options.step);
        const double a = analytic[c.param].data()[c.index];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
        const double rel = std::abs(a - numeric) / denom;
        ++report.checked;
        if (rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_parameter = ps[c.param].name + "[" + std::to_string(c.index) + "]";
        }
    }

    for (std::size_t k = 0; k < ps.size(); ++k) {
        ps[k].value = saved_values[k];
        ps[k].grad = analytic[k];
    }
    for (std::size_t k = 0; k < saved_buffers.size(); ++k)
        net.buffers()[k].value = saved_buffers[k];
    return report;
}

RecordSource memory_source(const std::vector<PatchRecord>& records)
{
    return {records.size(), [&records](std::size_t i) { return records.at(i); }};
}

NetworkSpec network_for(const TrainConfig& config, int patch)
{
    switch (config.variant) {
    case Variant::Unet:
        return build_unet(config.k, patch, config.width_divisor);
    case Variant::ResNet:
        return build_resnet(config.k, patch, config.width_divisor);
    case Variant::Custom:
        break;
    }
    throw ParameterError("training requires the unet or resnet variant");
}

TrainResult run_training(const TrainConfig& config, const RecordSource& source, const TrainRunOptions& options)
{
    config.validate();
    if (source.size == 0)
        throw DataError("no training records");
    const PatchRecord first = source.fetch(0);
    if (first.k != config.k)
        throw ShapeError("records hold " + std::to_string(first.k) + " frames, config expects k=" +
                         std::to_string(config.k));

    std::optional<Network<float>> net;
    Adam<float> optimizer(config.learning_rate);
    std::uint64_t start = 0;
    if (options.resume_from) {
        auto ckpt = load_checkpoint(*options.resume_from);
        net.emplace(std::move(ckpt.network));
        if (ckpt.optimizer) {
            optimizer.restore(*ckpt.optimizer);
            start = ckpt.optimizer->iteration;
        } else {
            log_warning("checkpoint " + options.resume_from->string() +
                        " has no optimizer state; starting the schedule from iteration 0");
        }
    } else {
        net.emplace(options.spec ? *options.spec : network_for(config, first.size), config.seed);
    }
    if (net->spec().k_inputs != first.k)
        throw ShapeError("network expects k=" + std::to_string(net->spec().k_inputs) + " inputs, records hold " +
                         std::to_string(first.k));

    std::ofstream log;
    if (!options.log.empty()) {
        const bool append = options.resume_from && std::filesystem::exists(options.log);
        log.open(options.log, append ? std::ios::app : std::ios::trunc);
        if (!log)
            throw DataError("cannot write training log " + options.log.string());
        if (!append)
            log << "iteration,loss,seconds\n";
        log << std::setprecision(9);
    }

    auto save = [&](std::uint64_t iteration) {
        if (options.checkpoint.empty())
            return;
        auto st = optimizer.state();
        st.iteration = iteration;
        if (st.m.empty()) {
            for (const auto& p : net->parameters()) {
                st.m.emplace_back(p.value.size(), 0.0f);
                st.v.emplace_back(p.value.size(), 0.0f);
            }
        }
        save_checkpoint(options.checkpoint, *net, &st);
    };

    TrainResult result{*net, {}};
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<PatchRecord> batch;
    for (std::uint64_t it = start; it < config.iterations; ++it) {
        batch.clear();
        for (auto idx : batch_indices(source.size, config.batch_size, it, config.seed))
            batch.push_back(source.fetch(idx));
        const double value = train_step(*net, optimizer, batch, config);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        TrainProgress progress{it + 1, value, secs};
        result.history.push_back(progress);
        if (log.is_open())
            log << progress.iteration << ',' << progress.loss << ',' << progress.seconds << '\n';
        if (options.on_step)
            options.on_step(progress);
        if ((it + 1) % config.checkpoint_interval == 0 && it + 1 < config.iterations)
            save(it + 1);
    }
    save(std::max(start, config.iterations));
    result.network = std::move(*net);
    return result;
}

} // namespace hdrforge
