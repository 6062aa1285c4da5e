// Copyright 2026 The Pilot Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pilot {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied input: malformed documents, unknown names, invalid
// configuration. The CLI maps these to exit status 1.
class InputError : public Error {
 public:
  using Error::Error;
};

// Failure of an external step (extractor, child process, filesystem).
// The CLI maps these to exit status 2.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace pilot
