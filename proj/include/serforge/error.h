// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SERFORGE_ERROR_H_
#define SERFORGE_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace serforge {

// Categories double as the machine-parsable tag the CLI prints on failure.
enum class ErrorKind {
  kDecode,
  kUnsupportedFormat,
  kConfig,
  kShape,
  kLabel,
  kDegenerateInput,
  kFraming,
  kManifest,
  kSplit,
  kTraining,
  kCheckpoint,
  kEmptyEval,
  kGradCheck,
  kIo,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view category() const { return ErrorKindName(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace serforge

#endif  // SERFORGE_ERROR_H_
