#pragma once

#include <stdexcept>
#include <string>

namespace pmdx {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and print a clean message.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct InputError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct IntegrityError : Error {
    using Error::Error;
};

struct TrainError : Error {
    using Error::Error;
};

} // namespace pmdx
