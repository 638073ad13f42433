// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy. Each category maps onto one CLI exit code.

#pragma once

#include <stdexcept>
#include <string>

namespace csc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extents of two operands do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a primitive.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Index-like argument outside its admissible range (token id, T_cut, edge).
class RangeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or missing input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A reduction was asked to operate on nothing.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace csc
