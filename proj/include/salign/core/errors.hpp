// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace salign {

// Bad run/experiment configuration (missing data, invalid spec fields, ...).
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid argument to an operation (shape mismatch, out-of-range step, ...).
class ArgumentError : public std::invalid_argument {
  public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Parameter values outside their mathematical domain.
class DomainError : public std::domain_error {
  public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// A measurement cannot be produced from the given inputs (empty mask, too few slices).
class MeasurementUnavailable : public std::runtime_error {
  public:
    explicit MeasurementUnavailable(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint/container format problems (bad magic, version mismatch, truncation).
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace salign
