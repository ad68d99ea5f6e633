#ifndef PERFSIM_ERRORS_HPP
#define PERFSIM_ERRORS_HPP

#include <stdexcept>

namespace perfsim {

// Inputs whose shapes do not line up (vector/matrix dimensions).
struct DimensionMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Closed forms requested outside the contraction regime (mu >= 1, ||mu||_* >= 1).
struct NonContractiveError : std::domain_error {
    using std::domain_error::domain_error;
};

// Operation called on a model outside the family it is derived for
// (e.g. a mean-shift-only formula on a model with covariance shift).
struct WrongRegimeError : std::domain_error {
    using std::domain_error::domain_error;
};

// Schedule incompatible with the run mode (e.g. fractional sample counts
// in a mode that draws an integer number of samples).
struct ScheduleModeMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Scalar parameter out of its admissible range (negative lambda, n < 1, ...).
struct InvalidParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or contradictory CLI/file configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace perfsim

#endif  // PERFSIM_ERRORS_HPP
