// Copyright 2026 The vapnev Authors. All Rights Reserved.
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

#ifndef VAPNEV_ERRORS_HPP_
#define VAPNEV_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace vapnev {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an op (log of a non-positive
// value, exp overflow, wrong image-domain tag).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced during training or evaluation. `term` names the
// sub-computation where it was first observed.
class NumericsError : public Error {
 public:
  NumericsError(const std::string& term, const std::string& what)
      : Error("non-finite value in '" + term + "': " + what), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vapnev

#endif  // VAPNEV_ERRORS_HPP_
