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

#include "hdrforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "hdrforge/error.hpp"

namespace hdrforge {

static_assert(std::endian::native == std::endian::little, "checkpoints are written on little-endian hosts");

namespace {

constexpr char kMagic[4] = {'H', 'D', 'R', 'W'};

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    template <typename T>
    void pod(T v)
    {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void str(const std::string& s)
    {
        if (s.size() > 65535)
            throw ParameterError("checkpoint string too long");
        pod<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void floats(const float* data, std::size_t n)
    {
        pod<std::uint64_t>(n);
        out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, std::string name) : in_(in), name_(std::move(name)) {}

    template <typename T>
    T pod()
    {
        T v{};
        if (!in_.read(reinterpret_cast<char*>(&v), sizeof(T)))
            fail("unexpected end of file");
        return v;
    }

    std::string str()
    {
        const auto n = pod<std::uint16_t>();
        std::string s(n, '\0');
        if (!in_.read(s.data(), n))
            fail("truncated string");
        return s;
    }

    std::vector<float> floats()
    {
        const auto n = pod<std::uint64_t>();
        if (n > (1ull << 34))
            fail("implausible blob length");
        std::vector<float> v(n);
        if (!in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float))))
            fail("truncated blob");
        return v;
    }

    [[noreturn]] void fail(const std::string& what)
    {
        in_.clear();
        throw DataError(name_ + ": " + what + " near offset " + std::to_string(static_cast<long long>(in_.tellg())));
    }

private:
    std::ifstream& in_;
    std::string name_;
};

void write_layers(Writer& w, const std::vector<LayerSpec>& layers)
{
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
    for (const auto& l : layers) {
        w.str(l.id);
        w.pod<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(l.inputs.size()));
        for (const auto& in : l.inputs)
            w.str(in);
        w.pod<std::int32_t>(l.kernel);
        w.pod<std::int32_t>(l.stride.num);
        w.pod<std::int32_t>(l.stride.den);
        w.pod<std::int32_t>(l.in_channels);
        w.pod<std::int32_t>(l.out_channels);
        w.pod<std::int32_t>(l.branch);
        w.pod<float>(l.slope);
        w.pod<std::uint8_t>(l.bias ? 1 : 0);
    }
}

std::vector<LayerSpec> read_layers(Reader& r)
{
    const auto n = r.pod<std::uint32_t>();
    std::vector<LayerSpec> layers;
    for (std::uint32_t i = 0; i < n; ++i) {
        LayerSpec l;
        l.id = r.str();
        const auto kind = r.pod<std::uint8_t>();
        if (kind > static_cast<std::uint8_t>(LayerKind::Add))
            r.fail("unknown layer kind");
        l.kind = static_cast<LayerKind>(kind);
        const auto n_in = r.pod<std::uint32_t>();
        for (std::uint32_t j = 0; j < n_in; ++j)
            l.inputs.push_back(r.str());
        l.kernel = r.pod<std::int32_t>();
        l.stride.num = r.pod<std::int32_t>();
        l.stride.den = r.pod<std::int32_t>();
        l.in_channels = r.pod<std::int32_t>();
        l.out_channels = r.pod<std::int32_t>();
        l.branch = r.pod<std::int32_t>();
        l.slope = r.pod<float>();
        l.bias = r.pod<std::uint8_t>() != 0;
        layers.push_back(std::move(l));
    }
    return layers;
}

void write_tensors(Writer& w, const std::vector<Parameter<float>>& ps)
{
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ps.size()));
    for (const auto& p : ps) {
        w.str(p.name);
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
        for (int d : p.value.shape())
            w.pod<std::uint32_t>(static_cast<std::uint32_t>(d));
        w.floats(p.value.data(), p.value.size());
    }
}

void read_tensors(Reader& r, std::vector<Parameter<float>>& ps)
{
    const auto n = r.pod<std::uint32_t>();
    if (n != ps.size())
        r.fail("expected " + std::to_string(ps.size()) + " tensors, found " + std::to_string(n));
    for (auto& p : ps) {
        const auto name = r.str();
        if (name != p.name)
            r.fail("tensor '" + name + "' where '" + p.name + "' was expected");
        const auto rank = r.pod<std::uint32_t>();
        Shape shape;
        for (std::uint32_t i = 0; i < rank; ++i)
            shape.push_back(static_cast<int>(r.pod<std::uint32_t>()));
        if (shape != p.value.shape())
            r.fail("tensor '" + name + "' has shape " + shape_string(shape) + ", layer table implies " +
                   shape_string(p.value.shape()));
        auto data = r.floats();
        if (data.size() != p.value.size())
            r.fail("tensor '" + name + "' length does not match its shape");
        p.value = BasicTensor<float>(shape, std::move(data));
    }
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Network<float>& network, const OptimizerState* optimizer)
{
    // write to a sibling file and rename so an interrupted save never
    // clobbers the previous checkpoint
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw DataError("cannot write checkpoint " + tmp.string());
        Writer w(out);
        const auto& spec = network.spec();
        out.write(kMagic, 4);
        w.pod<std::uint32_t>(kCheckpointVersion);
        w.pod<std::uint8_t>(static_cast<std::uint8_t>(spec.variant));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(spec.k_inputs));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(spec.patch));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(spec.width_divisor));
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(spec.input_channels));
        w.str(spec.output);
        write_layers(w, spec.encoder_layers);
        write_layers(w, spec.merger_layers);
        write_layers(w, spec.decoder_layers);
        write_tensors(w, network.parameters());
        write_tensors(w, network.buffers());
        w.pod<std::uint8_t>(optimizer ? 1 : 0);
        if (optimizer) {
            if (optimizer->m.size() != network.parameters().size() || optimizer->v.size() != optimizer->m.size())
                throw StateError("optimizer state does not match the network parameters");
            w.pod<std::uint64_t>(optimizer->iteration);
            w.pod<std::uint64_t>(optimizer->step);
            for (const auto& m : optimizer->m)
                w.floats(m.data(), m.size());
            for (const auto& v : optimizer->v)
                w.floats(v.data(), v.size());
        }
        if (!out)
            throw DataError("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open checkpoint " + path.string());
    Reader r(in, path.string());
    char magic[4] = {};
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path.string() + ": not a checkpoint (bad magic)");
    const auto version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion)
        r.fail("unsupported checkpoint version " + std::to_string(version));
    NetworkSpec spec;
    const auto variant = r.pod<std::uint8_t>();
    if (variant > static_cast<std::uint8_t>(Variant::Custom))
        r.fail("unknown variant tag");
    spec.variant = static_cast<Variant>(variant);
    spec.k_inputs = static_cast<int>(r.pod<std::uint32_t>());
    spec.patch = static_cast<int>(r.pod<std::uint32_t>());
    spec.width_divisor = static_cast<int>(r.pod<std::uint32_t>());
    spec.input_channels = static_cast<int>(r.pod<std::uint32_t>());
    spec.output = r.str();
    spec.encoder_layers = read_layers(r);
    spec.merger_layers = read_layers(r);
    spec.decoder_layers = read_layers(r);

    Checkpoint ckpt{Network<float>(std::move(spec)), std::nullopt};
    read_tensors(r, ckpt.network.parameters());
    read_tensors(r, ckpt.network.buffers());
    if (r.pod<std::uint8_t>() != 0) {
        OptimizerState st;
        st.iteration = r.pod<std::uint64_t>();
        st.step = r.pod<std::uint64_t>();
        const auto& params = ckpt.network.parameters();
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& p : params) {
                auto blob = r.floats();
                if (blob.size() != p.value.size())
                    r.fail("optimizer moment for '" + p.name + "' has the wrong length");
                (pass == 0 ? st.m : st.v).push_back(std::move(blob));
            }
        ckpt.optimizer = std::move(st);
    }
    if (in.peek() != std::char_traits<char>::eof())
        r.fail("trailing bytes");
    return ckpt;
}

} // namespace hdrforge
