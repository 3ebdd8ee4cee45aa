#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oppshuffle {

// Base of every error the library throws. `kind()` gives a stable short tag
// that the CLI maps onto exit codes.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept = 0;
};

class invalid_parameter : public error {
public:
    using error::error;
    const char* kind() const noexcept override { return "invalid-parameter"; }
};

class invalid_pair : public error {
public:
    using error::error;
    const char* kind() const noexcept override { return "invalid-pair"; }
};

class overflow_error : public error {
public:
    using error::error;
    const char* kind() const noexcept override { return "overflow"; }
};

class disconnected_graph : public error {
public:
    using error::error;
    const char* kind() const noexcept override { return "disconnected-graph"; }
};

class insufficient_data : public error {
public:
    using error::error;
    const char* kind() const noexcept override { return "insufficient-data"; }
};

class infeasible_cohort : public error {
public:
    using error::error;
    const char* kind() const noexcept override { return "infeasible-cohort"; }
};

// Malformed input file. Carries the 1-based line number of the offending row
// (0 when the problem is not tied to a line, e.g. an unreadable file).
class ingestion_error : public error {
public:
    ingestion_error(std::size_t line, const std::string& what)
        : error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    const char* kind() const noexcept override { return "ingestion"; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace oppshuffle
