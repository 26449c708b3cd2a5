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
#include <fstream>
#include <vector>

#include "hdrforge/dataset.hpp"

namespace hdrforge {

/// Binary patch store.
///
///   "HDRP"  u32 version  u32 record_count
///   per record:
///     u8 k, u16 size,
///     float32 inputs  (k x size x size x 6, [I | H] per pixel)
///     float32 target  (size x size x 3)
///     u8 motion_flag, u16 provenance length, provenance bytes
///
/// All integers and floats are little-endian.
inline constexpr std::uint32_t kPatchStoreVersion = 1;

/// Single writer. The record count in the header is patched on close().
class PatchStoreWriter {
public:
    explicit PatchStoreWriter(const std::filesystem::path& path);
    ~PatchStoreWriter();
    PatchStoreWriter(const PatchStoreWriter&) = delete;
    PatchStoreWriter& operator=(const PatchStoreWriter&) = delete;

    void write(const PatchRecord& record);
    void close();
    std::uint32_t count() const { return count_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::uint32_t count_ = 0;
};

/// Indexes the store on open; records are then read by position. Every
/// reader owns its stream, so independent readers may run concurrently.
class PatchStoreReader {
public:
    /// Throws DataError naming the byte offset of any corruption.
    explicit PatchStoreReader(const std::filesystem::path& path);

    std::size_t size() const { return offsets_.size(); }
    PatchRecord read(std::size_t index);
    std::vector<PatchRecord> read_all();

private:
    PatchRecord read_at(std::uint64_t offset);

    std::filesystem::path path_;
    std::ifstream in_;
    std::uint64_t file_size_ = 0;
    std::vector<std::uint64_t> offsets_;
};

void write_patch_store(const std::filesystem::path& path, const std::vector<PatchRecord>& records);
std::vector<PatchRecord> read_patch_store(const std::filesystem::path& path);

} // namespace hdrforge
