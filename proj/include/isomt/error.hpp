// Copyright 2026 The isomt Authors. All Rights Reserved.
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

namespace isomt {

// Error categories map onto CLI exit codes: usage/config 1, data 2, numeric 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ZeroSourceLengthError : public DataError {
 public:
  ZeroSourceLengthError() : DataError("source length is zero") {}
  explicit ZeroSourceLengthError(const std::string& where)
      : DataError("source length is zero (" + where + ")") {}
};

class SequenceLengthError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace isomt
