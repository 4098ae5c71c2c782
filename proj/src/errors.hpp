#pragma once

#include <stdexcept>
#include <string>

namespace fsk {

// Raised when an adaptive quadrature or an iterative solver hits its
// budget without meeting the requested tolerance.  Callers that can
// degrade gracefully catch this; the C shell maps it to a status code.
struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a region boundary (strip edge, collar edge) does not land
// on a mesh node.  Exact closed-form cell integrals depend on alignment,
// so this is an error rather than a silent approximation.
struct AlignmentError : std::invalid_argument {
    explicit AlignmentError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace fsk
