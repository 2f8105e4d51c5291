/*
 * Copyright 2026 The hetero-fdl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef HFDL_ERROR_HPP_
#define HFDL_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace hfdl {

// Every failure raised by the library carries one of these codes so callers
// (and the CLI's single-line error output) can dispatch without parsing text.
enum class ErrorCode {
  // ehr_graph
  kMalformedRow,
  kUnknownServiceType,
  kEmptyFile,
  kInvalidConfig,
  kPatientTooShort,
  kOutOfRangeTimestamp,
  kIsolatedNode,
  kZeroTotalWeight,
  kMalformedGraphFile,
  // features
  kDimMismatch,
  // hgat
  kShapeMismatch,
  kLabelLeakage,
  kLayoutMismatch,
  // objectives
  kLabelOutOfRange,
  kAllWeightsZero,
  kEmptyPositives,
  kDegenerateLabels,
  kEmptySubset,
  // topology
  kNotDoublyStochastic,
  kNotSymmetric,
  kSparsityViolation,
  kDisconnected,
  kDisconnectedGraph,
  kInvalidLambda,
  kMalformedTopologyFile,
  // fdl
  kLengthMismatch,
  kEmptyBatch,
  kConfigError,
  kStepSizeExceedsBound,
  // cli
  kUnknownKey,
  kTypeError,
  kMissingKey,
  kRegionMismatch,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace hfdl

#endif  // HFDL_ERROR_HPP_
