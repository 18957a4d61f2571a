// Copyright 2026 The petridish Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace petridish {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PETRIDISH_DEFINE_ERROR(Name) \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

// autodiff / nn-core
PETRIDISH_DEFINE_ERROR(ShapeError);
PETRIDISH_DEFINE_ERROR(DisconnectedError);
PETRIDISH_DEFINE_ERROR(HeterogeneousBlueprints);
// motif
PETRIDISH_DEFINE_ERROR(InvalidEncoding);
PETRIDISH_DEFINE_ERROR(MixedVariants);
PETRIDISH_DEFINE_ERROR(LengthMismatch);
// petri
PETRIDISH_DEFINE_ERROR(DegenerateVariance);
PETRIDISH_DEFINE_ERROR(NonFiniteGradient);
// ground truth / data
PETRIDISH_DEFINE_ERROR(DataUnavailable);
PETRIDISH_DEFINE_ERROR(NonFiniteLoss);
PETRIDISH_DEFINE_ERROR(BadMagic);
PETRIDISH_DEFINE_ERROR(TruncatedPayload);
PETRIDISH_DEFINE_ERROR(DimensionMismatch);
PETRIDISH_DEFINE_ERROR(EmptySeries);
PETRIDISH_DEFINE_ERROR(CorruptCacheLine);
// search
PETRIDISH_DEFINE_ERROR(ExhaustedSpace);
// configuration
PETRIDISH_DEFINE_ERROR(ConfigError);

#undef PETRIDISH_DEFINE_ERROR

}  // namespace petridish
