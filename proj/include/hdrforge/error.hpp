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

#include <stdexcept>
#include <string>

namespace hdrforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument value (gamma <= 1, mu <= 0, bad factor, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Mismatched or unsupported tensor/image dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed camera response table.
class CalibrationError : public Error {
public:
    using Error::Error;
};

/// Homography could not be estimated.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf appeared in a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in the wrong state (e.g. backward without forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Missing, unreadable or corrupt input data.
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace hdrforge
