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

#include "hdrforge/patch_store.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "hdrforge/error.hpp"

namespace hdrforge {

static_assert(std::endian::native == std::endian::little, "patch stores are written on little-endian hosts");

namespace {

constexpr char kMagic[4] = {'H', 'D', 'R', 'P'};

template <typename T>
void put(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

std::size_t record_floats(int k, int size)
{
    return static_cast<std::size_t>(size) * size * (6 * static_cast<std::size_t>(k) + 3);
}

} // namespace

PatchStoreWriter::PatchStoreWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc)
{
    if (!out_)
        throw DataError("cannot create patch store " + path.string());
    out_.write(kMagic, 4);
    put<std::uint32_t>(out_, kPatchStoreVersion);
    put<std::uint32_t>(out_, 0);
}

PatchStoreWriter::~PatchStoreWriter()
{
    try {
        close();
    } catch (...) {
        // destructors must not throw; call close() to observe errors
    }
}

void PatchStoreWriter::write(const PatchRecord& r)
{
    if (!out_.is_open())
        throw StateError("patch store already closed");
    if (r.k < 1 || r.k > 255 || r.size < 1 || r.size > 65535)
        throw ParameterError("patch record k/size out of range for the store format");
    if (r.inputs.size() != static_cast<std::size_t>(r.size) * r.size * 6 * static_cast<std::size_t>(r.k) ||
        r.target.size() != static_cast<std::size_t>(r.size) * r.size * 3)
        throw ShapeError("patch record buffers do not match k and size");
    if (r.provenance.size() > 65535)
        throw ParameterError("provenance string too long");
    put<std::uint8_t>(out_, static_cast<std::uint8_t>(r.k));
    put<std::uint16_t>(out_, static_cast<std::uint16_t>(r.size));
    out_.write(reinterpret_cast<const char*>(r.inputs.data()), static_cast<std::streamsize>(r.inputs.size() * 4));
    out_.write(reinterpret_cast<const char*>(r.target.data()), static_cast<std::streamsize>(r.target.size() * 4));
    put<std::uint8_t>(out_, r.motion_flag ? 1 : 0);
    put<std::uint16_t>(out_, static_cast<std::uint16_t>(r.provenance.size()));
    out_.write(r.provenance.data(), static_cast<std::streamsize>(r.provenance.size()));
    if (!out_)
        throw DataError("write failed on patch store " + path_.string());
    ++count_;
}

void PatchStoreWriter::close()
{
    if (!out_.is_open())
        return;
    out_.seekp(8);
    put<std::uint32_t>(out_, count_);
    out_.close();
    if (out_.fail())
        throw DataError("failed to finalize patch store " + path_.string());
}

PatchStoreReader::PatchStoreReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary)
{
    if (!in_)
        throw DataError("cannot open patch store " + path.string());
    file_size_ = std::filesystem::file_size(path);
    char magic[4] = {};
    std::uint32_t version = 0, count = 0;
    in_.read(magic, 4);
    in_.read(reinterpret_cast<char*>(&version), 4);
    in_.read(reinterpret_cast<char*>(&count), 4);
    if (!in_ || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path.string() + ": not a patch store (bad magic at offset 0)");
    if (version != kPatchStoreVersion)
        throw DataError(path.string() + ": unsupported store version " + std::to_string(version) + " at offset 4");

    std::uint64_t offset = 12;
    offsets_.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (offset + 3 > file_size_)
            throw DataError(path.string() + ": truncated record " + std::to_string(i) + " at offset " +
                            std::to_string(offset));
        in_.seekg(static_cast<std::streamoff>(offset));
        std::uint8_t k = 0;
        std::uint16_t size = 0;
        in_.read(reinterpret_cast<char*>(&k), 1);
        in_.read(reinterpret_cast<char*>(&size), 2);
        if (k == 0 || size == 0)
            throw DataError(path.string() + ": corrupt record header " + std::to_string(i) + " at offset " +
                            std::to_string(offset));
        const std::uint64_t tail = offset + 3 + record_floats(k, size) * 4;
        if (tail + 3 > file_size_)
            throw DataError(path.string() + ": truncated record " + std::to_string(i) + " at offset " +
                            std::to_string(offset));
        in_.seekg(static_cast<std::streamoff>(tail + 1));
        std::uint16_t name_len = 0;
        in_.read(reinterpret_cast<char*>(&name_len), 2);
        const std::uint64_t next = tail + 3 + name_len;
        if (!in_ || next > file_size_)
            throw DataError(path.string() + ": truncated provenance of record " + std::to_string(i) + " at offset " +
                            std::to_string(tail));
        offsets_.push_back(offset);
        offset = next;
    }
    if (offset != file_size_)
        throw DataError(path.string() + ": " + std::to_string(file_size_ - offset) +
                        " trailing bytes after the last record at offset " + std::to_string(offset));
}

PatchRecord PatchStoreReader::read_at(std::uint64_t offset)
{
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset));
    std::uint8_t k = 0, flag = 0;
    std::uint16_t size = 0, name_len = 0;
    in_.read(reinterpret_cast<char*>(&k), 1);
    in_.read(reinterpret_cast<char*>(&size), 2);
    PatchRecord r;
    r.k = k;
    r.size = size;
    r.inputs.resize(static_cast<std::size_t>(size) * size * 6 * k);
    r.target.resize(static_cast<std::size_t>(size) * size * 3);
    in_.read(reinterpret_cast<char*>(r.inputs.data()), static_cast<std::streamsize>(r.inputs.size() * 4));
    in_.read(reinterpret_cast<char*>(r.target.data()), static_cast<std::streamsize>(r.target.size() * 4));
    in_.read(reinterpret_cast<char*>(&flag), 1);
    in_.read(reinterpret_cast<char*>(&name_len), 2);
    r.provenance.resize(name_len);
    in_.read(r.provenance.data(), name_len);
    if (!in_)
        throw DataError(path_.string() + ": read failed at offset " + std::to_string(offset));
    if (flag > 1)
        throw DataError(path_.string() + ": corrupt motion flag in record at offset " + std::to_string(offset));
    r.motion_flag = flag != 0;
    r.motion_score = r.motion_flag ? 1.0f : 0.0f;
    return r;
}

PatchRecord PatchStoreReader::read(std::size_t index)
{
    if (index >= offsets_.size())
        throw ParameterError("patch index " + std::to_string(index) + " out of range");
    return read_at(offsets_[index]);
}

std::vector<PatchRecord> PatchStoreReader::read_all()
{
    std::vector<PatchRecord> out;
    out.reserve(offsets_.size());
    for (auto off : offsets_)
        out.push_back(read_at(off));
    return out;
}

void write_patch_store(const std::filesystem::path& path, const std::vector<PatchRecord>& records)
{
    PatchStoreWriter w(path);
    for (const auto& r : records)
        w.write(r);
    w.close();
}

std::vector<PatchRecord> read_patch_store(const std::filesystem::path& path)
{
    return PatchStoreReader(path).read_all();
}

} // namespace hdrforge
