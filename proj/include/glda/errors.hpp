#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace glda {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, inconsistent shapes, invalid configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A cell-level problem in a delimited input file. `row` counts data rows
/// from 1 (the header is row 0).
class ParseError : public ValidationError {
public:
    ParseError(std::size_t row, std::string column, const std::string& what)
        : ValidationError("row " + std::to_string(row) +
                          (column.empty() ? std::string() : ", column '" + column + "'") +
                          ": " + what),
          row_(row), column_(std::move(column)) {}

    [[nodiscard]] std::size_t row() const { return row_; }
    [[nodiscard]] const std::string& column() const { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

/// Factorization or other floating-point failure during fitting.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, int component = -1, long iteration = -1)
        : Error(decorate(what, component, iteration)), message_(what), component_(component), iteration_(iteration) {}

    /// The message without the iteration/component prefix.
    [[nodiscard]] const std::string& message() const { return message_; }
    [[nodiscard]] int component() const { return component_; }
    [[nodiscard]] long iteration() const { return iteration_; }

private:
    static std::string decorate(const std::string& what, int component, long iteration) {
        std::string out;
        if (iteration >= 0) out += "iteration " + std::to_string(iteration) + ": ";
        if (component >= 0) out += "component " + std::to_string(component) + ": ";
        return out + what;
    }

    std::string message_;
    int component_;
    long iteration_;
};

} // namespace glda
