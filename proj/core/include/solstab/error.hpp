#pragma once

#include <stdexcept>
#include <string>

namespace solstab {

enum class ErrorKind {
    InvalidMetric,
    Grid,
    GridMismatch,
    BoundarySupport,
    IncompatibleDimension,
    ShootingFailure,
    NumericalFailure,
    InvalidConfig,
    Precondition,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidMetric: return "invalid-metric";
    case ErrorKind::Grid: return "grid";
    case ErrorKind::GridMismatch: return "grid-mismatch";
    case ErrorKind::BoundarySupport: return "boundary-support";
    case ErrorKind::IncompatibleDimension: return "incompatible-dimension";
    case ErrorKind::ShootingFailure: return "shooting-failure";
    case ErrorKind::NumericalFailure: return "numerical-failure";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Precondition: return "precondition";
    }
    return "error";
}

} // namespace solstab
