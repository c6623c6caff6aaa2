// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink

#pragma once

#include <stdexcept>
#include <string>

namespace ciforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid dimensions, malformed config files, bad CLI arguments. Exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Channel matrix is rank deficient or beyond the conditioning cap.
struct SingularChannelError : Error {
    using Error::Error;
};

// A sub-block of the Gram inverse could not be factorized.
struct SingularSubblockError : Error {
    using Error::Error;
};

struct QpInfeasibleError : Error {
    using Error::Error;
};

struct QpNonconvergenceError : Error {
    using Error::Error;
};

// Problem exceeds a hard size limit (oracle enumeration, FS-QP cap).
struct SizeError : Error {
    using Error::Error;
};

} // namespace ciforge
