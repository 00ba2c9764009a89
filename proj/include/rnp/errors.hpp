#pragma once

#include <stdexcept>
#include <string>

namespace rnp {

// Error taxonomy shared by the library, the C API and the CLI exit codes:
// validation/domain problems map to exit code 2, numerical failures to 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed inputs: unsorted strikes, missing quotes, bad file contents.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Arguments outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Solver breakdowns: singular systems, QP non-convergence, root brackets lost.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

} // namespace rnp
