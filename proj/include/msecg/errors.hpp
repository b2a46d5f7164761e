// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace msecg {

// Shape or rank disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A user-supplied value is outside its valid range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A call-sequence or API contract was violated.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid run, manifest, or dataset configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File access or serialization failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numeric op produced NaN or Inf.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace msecg
