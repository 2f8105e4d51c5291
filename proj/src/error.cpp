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

#include "hfdl/error.hpp"

namespace hfdl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRow: return "MalformedRow";
    case ErrorCode::kUnknownServiceType: return "UnknownServiceType";
    case ErrorCode::kEmptyFile: return "EmptyFile";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kPatientTooShort: return "PatientTooShort";
    case ErrorCode::kOutOfRangeTimestamp: return "OutOfRangeTimestamp";
    case ErrorCode::kIsolatedNode: return "IsolatedNode";
    case ErrorCode::kZeroTotalWeight: return "ZeroTotalWeight";
    case ErrorCode::kMalformedGraphFile: return "MalformedGraphFile";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kLabelLeakage: return "LabelLeakage";
    case ErrorCode::kLayoutMismatch: return "LayoutMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kAllWeightsZero: return "AllWeightsZero";
    case ErrorCode::kEmptyPositives: return "EmptyPositives";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kEmptySubset: return "EmptySubset";
    case ErrorCode::kNotDoublyStochastic: return "NotDoublyStochastic";
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kSparsityViolation: return "SparsityViolation";
    case ErrorCode::kDisconnected: return "Disconnected";
    case ErrorCode::kDisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::kInvalidLambda: return "InvalidLambda";
    case ErrorCode::kMalformedTopologyFile: return "MalformedTopologyFile";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kStepSizeExceedsBound: return "StepSizeExceedsBound";
    case ErrorCode::kUnknownKey: return "UnknownKey";
    case ErrorCode::kTypeError: return "TypeError";
    case ErrorCode::kMissingKey: return "MissingKey";
    case ErrorCode::kRegionMismatch: return "RegionMismatch";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace hfdl
