#pragma once

#include <stdexcept>
#include <string>

namespace sas {

// Error categories; the C API and the CLI map these onto process exit codes
// (config -> 2, data -> 3, everything else -> 4).
enum class ErrorKind {
    Config,
    Data,
    Numeric,
    Dimension,
    Index,
    Io,
    Contract,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(ErrorKind::Dimension, msg) {}
};

struct IndexError : Error {
    explicit IndexError(const std::string& msg) : Error(ErrorKind::Index, msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(ErrorKind::Contract, msg) {}
};

}  // namespace sas
