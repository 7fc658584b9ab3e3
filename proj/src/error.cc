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

#include "serforge/error.h"

namespace serforge {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDecode: return "decode";
    case ErrorKind::kUnsupportedFormat: return "unsupported-format";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kLabel: return "label";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kFraming: return "framing";
    case ErrorKind::kManifest: return "manifest";
    case ErrorKind::kSplit: return "split";
    case ErrorKind::kTraining: return "training";
    case ErrorKind::kCheckpoint: return "checkpoint";
    case ErrorKind::kEmptyEval: return "empty-eval";
    case ErrorKind::kGradCheck: return "grad-check";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace serforge
