// Copyright 2026 The DPL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dpl {

// Every failure raised by the library derives from Error. The C API maps the
// concrete type onto a dpl_status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed or unrecognised file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A planted task could not be verified within the retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpl
