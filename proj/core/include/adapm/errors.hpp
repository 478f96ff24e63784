// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace adapm {

/// Operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN/Inf or a runaway value appeared during a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was applied to optimizer state of the wrong kind.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by the optimizer step; carries the offending parameter name.
class StepError : public std::runtime_error {
 public:
  StepError(std::string parameter, const std::string& what)
      : std::runtime_error("parameter '" + parameter + "': " + what),
        parameter_(std::move(parameter)) {}

  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

}  // namespace adapm
