#pragma once

#include <stdexcept>
#include <string>

namespace rwgan {

// Error taxonomy shared by the library and the CLI. Each class carries the
// process exit code the CLI maps it to (0 success, 2 config, 3 data,
// 4 network, 5 format/corruption).
class Error : public std::runtime_error {
public:
  Error(std::string msg, int exit_code)
      : std::runtime_error(std::move(msg)), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

private:
  int exit_code_;
};

// Bad flags, missing provider/credential configuration, invalid hyperparams.
class ConfigError : public Error {
public:
  explicit ConfigError(std::string msg) : Error(std::move(msg), 2) {}
};

// Unusable input data: shape mismatches, empty datasets, unreadable files,
// out-of-projection coordinates.
class DataError : public Error {
public:
  explicit DataError(std::string msg) : Error(std::move(msg), 3) {}
};

class ShapeError : public DataError {
public:
  explicit ShapeError(std::string msg) : DataError(std::move(msg)) {}
};

class IoError : public DataError {
public:
  explicit IoError(std::string msg) : DataError(std::move(msg)) {}
};

// Transport failures, rate-limit violations, offline mode.
class NetworkError : public Error {
public:
  explicit NetworkError(std::string msg, int http_status = 0)
      : Error(std::move(msg), 4), http_status_(http_status) {}
  int http_status() const noexcept { return http_status_; }

private:
  int http_status_;
};

class OfflineError : public NetworkError {
public:
  explicit OfflineError(std::string msg) : NetworkError(std::move(msg)) {}
};

// Corrupt or unrecognized serialized artifacts (checkpoints, PNGs).
class FormatError : public Error {
public:
  explicit FormatError(std::string msg) : Error(std::move(msg), 5) {}
};

} // namespace rwgan
