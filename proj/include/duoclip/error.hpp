// Copyright (c) 2026, duoclip contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace duoclip {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an API precondition or passed a bad option.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Input data (files, manifests, tensors) is malformed or inconsistent.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure during training or evaluation (NaN/Inf loss, etc.).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace duoclip
