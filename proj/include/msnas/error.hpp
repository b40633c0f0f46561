// Copyright 2026 The msnas Authors.
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

namespace msnas {

// Base of every error raised by the library. Each subclass names one
// contract violation so callers (and the CLI) can react to the kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed topology or config document; message names the field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A curve formula produced a non-finite value or was evaluated outside
// its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

// A fit did not converge and the caller asked for a fitted prediction.
class UnconvergedFitError : public Error {
 public:
  using Error::Error;
};

// Rank statistic requested on input with no rank variance.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Parse failure in a tabular file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class BoundsError : public ParseError {
 public:
  using ParseError::ParseError;
};

class DuplicateKeyError : public ParseError {
 public:
  using ParseError::ParseError;
};

// Reward table lacks some (topology, supernet) cells.
class CompletenessError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// One-shot query failed; carries the supernet index that failed.
class EvaluatorError : public Error {
 public:
  EvaluatorError(const std::string& what, int supernet_index)
      : Error("supernet " + std::to_string(supernet_index) + ": " + what),
        supernet_index_(supernet_index) {}
  int supernet_index() const { return supernet_index_; }

 private:
  int supernet_index_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class SearchAbortedError : public Error {
 public:
  using Error::Error;
};

}  // namespace msnas
