/* Copyright 2025 The QuantVec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>

namespace quantvec {

/// Base of every quantvec exception. The two concrete families map onto
/// process exit codes: ValidationError -> 2, IoError -> 1, InternalError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// An internal invariant was broken; indicates a bug, not bad input.
struct InternalError : Error {
  using Error::Error;
};

// Validation family.
struct MalformedDType : ValidationError { using ValidationError::ValidationError; };
struct InvalidGroup : ValidationError { using ValidationError::ValidationError; };
struct DimensionMismatch : ValidationError { using ValidationError::ValidationError; };
struct IndivisibleGroup : ValidationError { using ValidationError::ValidationError; };
struct NonFiniteInput : ValidationError { using ValidationError::ValidationError; };
struct CodeOutOfRange : ValidationError { using ValidationError::ValidationError; };
struct DTypeMismatch : ValidationError { using ValidationError::ValidationError; };
struct ZeroVector : ValidationError { using ValidationError::ValidationError; };
struct EmptyInput : ValidationError { using ValidationError::ValidationError; };
struct ConstantInput : ValidationError { using ValidationError::ValidationError; };
struct LengthMismatch : ValidationError { using ValidationError::ValidationError; };
struct SampleTooLarge : ValidationError { using ValidationError::ValidationError; };
struct InsufficientCandidates : ValidationError { using ValidationError::ValidationError; };
struct TooFewTrainingVectors : ValidationError { using ValidationError::ValidationError; };
struct IndivisibleDim : ValidationError { using ValidationError::ValidationError; };
struct SizesExceedCount : ValidationError { using ValidationError::ValidationError; };

// I/O family.
struct ParseError : IoError { using IoError::IoError; };
struct NonFiniteValue : IoError { using IoError::IoError; };
struct BadMagic : IoError { using IoError::IoError; };
struct VersionUnsupported : IoError { using IoError::IoError; };
struct TruncatedFile : IoError { using IoError::IoError; };
struct ChecksumMismatch : IoError { using IoError::IoError; };

}  // namespace quantvec
