#pragma once

#include <stdexcept>
#include <string>

namespace soh {

// Base of all toolkit errors. Data errors describe bad or insufficient
// input; numeric errors describe solver breakdown. The CLI maps them to
// exit codes 2 and 3 respectively.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

// --- ingest ---

struct MalformedRow : DataError {
    MalformedRow(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

struct NonMonotonicTime : DataError {
    using DataError::DataError;
};

struct EmptyFile : DataError {
    using DataError::DataError;
};

struct NoCvPhase : DataError {
    using DataError::DataError;
};

struct DegenerateCv : DataError {
    using DataError::DataError;
};

struct InsufficientSamples : DataError {
    using DataError::DataError;
};

struct InvalidKernel : DataError {
    using DataError::DataError;
};

struct NonPositiveNominal : DataError {
    using DataError::DataError;
};

struct InvalidDischarge : DataError {
    using DataError::DataError;
};

// --- features ---

struct TooShort : DataError {
    using DataError::DataError;
};

struct ZeroVariance : DataError {
    using DataError::DataError;
};

struct LengthMismatch : DataError {
    using DataError::DataError;
};

struct ConstantLabel : DataError {
    using DataError::DataError;
};

// --- sindy ---

struct ShapeMismatch : DataError {
    using DataError::DataError;
};

struct NoActiveTerms : NumericError {
    using NumericError::NumericError;
};

struct NumericalFailure : NumericError {
    using NumericError::NumericError;
};

struct TooFewSnapshots : DataError {
    using DataError::DataError;
};

// --- eval ---

struct Empty : DataError {
    using DataError::DataError;
};

// --- simulate / estimator / io ---

struct InvalidConfig : DataError {
    using DataError::DataError;
};

struct InsufficientData : DataError {
    using DataError::DataError;
};

struct IoFailure : DataError {
    using DataError::DataError;
};

struct SchemaVersionMismatch : DataError {
    using DataError::DataError;
};

}  // namespace soh
