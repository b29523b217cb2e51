// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace omni {

/// Root of every error the toolkit raises. Subclasses identify the class of
/// failure so callers can separate transient from permanent conditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error("validation error in '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Schema or syntax failure at a specific line of a line-oriented file.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("parse error at line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  DecodeError(std::string clip_id, const std::string& what)
      : Error("cannot decode clip '" + clip_id + "': " + what), clip_id_(std::move(clip_id)) {}
  const std::string& clip_id() const noexcept { return clip_id_; }

 private:
  std::string clip_id_;
};

class BackendError : public Error {
 public:
  BackendError(std::string backend_id, const std::string& what, bool transient = false)
      : Error("backend '" + backend_id + "': " + what),
        backend_id_(std::move(backend_id)),
        transient_(transient) {}
  const std::string& backend_id() const noexcept { return backend_id_; }
  bool transient() const noexcept { return transient_; }

 private:
  std::string backend_id_;
  bool transient_;
};

/// A backend answered, but the answer broke its output contract.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The judge could not produce a score; the sample needs manual handling.
class ScoringError : public BackendError {
 public:
  using BackendError::BackendError;
};

class SynthesisError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class VersionConflict : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace omni
