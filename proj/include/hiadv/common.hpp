#pragma once

#include <stdexcept>
#include <string>

namespace hiadv {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape mismatch; message names the op and both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Bad values: log of a non-positive number, non-scalar loss, missing grad, ...
struct ValueError : Error {
    using Error::Error;
};

// Malformed or inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Corpus / JSONL problems (bad line, unknown label or token, ...).
struct DataError : Error {
    using Error::Error;
};

enum class TaxonomyFault {
    duplicate_name,
    unknown_parent,
    multi_parent,
    cycle,
    disconnected,
    missing_root,
};

struct TaxonomyError : Error {
    TaxonomyFault fault;
    TaxonomyError(TaxonomyFault f, const std::string& msg) : Error(msg), fault(f) {}
};

} // namespace hiadv
