#include "lims/error.hpp"

namespace lims {

namespace {

std::string describe(std::size_t line, std::size_t column, const std::string& expected, const std::string& found) {
    return "syntax error at " + std::to_string(line) + ":" + std::to_string(column) + ": expected " + expected +
           ", found " + found;
}

} // namespace

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::string expected, const std::string& found)
    : Error(describe(line, column, expected, found)), line_(line), column_(column), expected_(std::move(expected)) {}

} // namespace lims
