// Copyright 2026 The vpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef VPLEAK_ERROR_H_
#define VPLEAK_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace vpleak {

enum class ErrorCode {
  kConfig,
  kInput,
  kSpec,
  kMapping,
  kSampling,
  kTraining,
  kEncoding,
  kRegistry,
  kIo,
  kUndefined,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures are reported as an Error carrying a code, so callers
// (and the CLI) can name the failing stage.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + " error: " +
                           message),
        code_(code),
        message_(message) {}

  ErrorCode code() const { return code_; }
  // The message without the code prefix.
  const std::string& message() const { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, ErrorCode code,
                    const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace vpleak

#endif  // VPLEAK_ERROR_H_
