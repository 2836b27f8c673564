#pragma once

#include <stdexcept>
#include <string>

namespace nlkf {

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// S failed a symmetric-PD factorization even after jitter escalation.
struct SingularInnovation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A covariance failed Cholesky after jitter escalation.
struct CholeskyFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct JacobianUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HessianUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// n_x + lambda <= 0 in the unscented weight construction.
struct DegenerateScaling : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// The simulated truth trajectory left finite range.
struct NonFiniteState : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A filter estimate left finite range; harness counts this as a divergence.
struct NonFiniteEstimate : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientSamples : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace nlkf
