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

#include "hdrforge/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace hdrforge {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warning};
std::mutex g_mutex;
} // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_warning(std::string_view message)
{
    if (g_level.load() < LogLevel::Warning)
        return;
    std::lock_guard lock(g_mutex);
    std::cerr << "warning: " << message << '\n';
}

void log_info(std::string_view message)
{
    if (g_level.load() < LogLevel::Info)
        return;
    std::lock_guard lock(g_mutex);
    std::cerr << message << '\n';
}

} // namespace hdrforge
