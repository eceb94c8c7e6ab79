#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace synthdid {

/// Coarse error category; the CLI maps it onto its exit codes.
enum class ErrorKind { Config, Data, Numerical, Contract };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Stable machine-readable name, e.g. "DuplicateCell".
  const std::string& code() const noexcept { return code_; }

private:
  ErrorKind kind_;
  std::string code_;
};

#define SYNTHDID_DEFINE_ERROR(Name, Kind)                                      \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& message)                                  \
        : Error(ErrorKind::Kind, #Name, message) {}                            \
  };

// panel ingestion and design
SYNTHDID_DEFINE_ERROR(ParseError, Data)
SYNTHDID_DEFINE_ERROR(DuplicateCell, Data)
SYNTHDID_DEFINE_ERROR(UnbalancedPanel, Data)
SYNTHDID_DEFINE_ERROR(NonBlockTreatment, Data)
SYNTHDID_DEFINE_ERROR(DesignError, Data)
SYNTHDID_DEFINE_ERROR(EmptyArmError, Data)
SYNTHDID_DEFINE_ERROR(DataError, Data)
SYNTHDID_DEFINE_ERROR(BinError, Data)

// numerics
SYNTHDID_DEFINE_ERROR(InfeasibleBalance, Numerical)
SYNTHDID_DEFINE_ERROR(DegenerateWeights, Numerical)
SYNTHDID_DEFINE_ERROR(DegenerateResample, Numerical)

SYNTHDID_DEFINE_ERROR(ConfigError, Config)
SYNTHDID_DEFINE_ERROR(ContractError, Contract)

#undef SYNTHDID_DEFINE_ERROR

/// Iterative solver ran out of iterations. Carries the last iterate so callers
/// can inspect how far it got.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& message, std::vector<double> last_iterate,
                   double last_objective)
      : Error(ErrorKind::Numerical, "ConvergenceError", message),
        last_iterate_(std::move(last_iterate)), last_objective_(last_objective) {}

  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
  double last_objective() const noexcept { return last_objective_; }

private:
  std::vector<double> last_iterate_;
  double last_objective_;
};

class RankDeficient : public Error {
public:
  explicit RankDeficient(std::string column)
      : Error(ErrorKind::Numerical, "RankDeficient",
              "column '" + column + "' is collinear with earlier regressors"),
        column_(std::move(column)) {}

  const std::string& column() const noexcept { return column_; }

private:
  std::string column_;
};

}  // namespace synthdid
