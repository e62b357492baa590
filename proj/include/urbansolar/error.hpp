#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace urbansolar {

/// Base of every error raised by the library. `kind()` is a stable short tag
/// used by the CLI and the HTTP service when reporting failures.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define URBANSOLAR_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(tag, what) {}         \
    };

URBANSOLAR_DEFINE_ERROR(InputError, "input")
URBANSOLAR_DEFINE_ERROR(GeometryError, "geometry")
URBANSOLAR_DEFINE_ERROR(ConfigError, "config")
URBANSOLAR_DEFINE_ERROR(DataError, "data")
URBANSOLAR_DEFINE_ERROR(LengthError, "length")
URBANSOLAR_DEFINE_ERROR(ConsistencyError, "consistency")
URBANSOLAR_DEFINE_ERROR(CorruptionError, "corruption")
URBANSOLAR_DEFINE_ERROR(UsageError, "usage")
URBANSOLAR_DEFINE_ERROR(ShapeError, "shape")
URBANSOLAR_DEFINE_ERROR(DivergenceError, "divergence")
URBANSOLAR_DEFINE_ERROR(InsufficientDataError, "insufficient-data")
URBANSOLAR_DEFINE_ERROR(DegenerateSeriesError, "degenerate-series")
URBANSOLAR_DEFINE_ERROR(StratificationError, "stratification")

#undef URBANSOLAR_DEFINE_ERROR

/// A GeoJSON feature that failed validation.
class FeatureError : public Error {
public:
    FeatureError(std::size_t feature_index, const std::string& what)
        : Error("feature", "feature " + std::to_string(feature_index) + ": " + what),
          index_(feature_index) {}
    std::size_t feature_index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Text-format parse failure with 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace urbansolar
