// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trisim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, unparsable header, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed array of a dtype the toolkit does not read (only <f4, <f8).
class UnsupportedDtypeError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Inputs that parse but violate an invariant (shape mismatch, non-finite
/// values, inconsistent sample counts, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Linear interpolation requested between checkpoints of different
/// architectures.
class ArchMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A quantity is undefined for the given input, e.g. CKA on a zero-variance
/// activation matrix or Pearson on a constant vector.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace trisim
