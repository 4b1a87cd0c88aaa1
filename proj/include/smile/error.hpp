#pragma once

#include <stdexcept>
#include <string>

namespace smile {

enum class ErrorKind {
    Shape,         // dimension mismatch between operands
    Domain,        // non-finite or otherwise invalid numeric input
    Numeric,       // iterative method failed to converge
    Argument,      // invalid scalar argument (k = 0, empty range, ...)
    RankDeficient, // normal equations are singular
    Degenerate,    // e.g. all-zero spectrum
    Config,        // SMILE configuration violates its invariants
    Io,            // filesystem failure
    Truncated,     // container shorter than its header claims
    Overlap,       // container offsets overlap or leave gaps
    UnknownDtype,
    MalformedHeader,
    Mismatch,      // store names / shapes disagree across sources
    Training,      // SGD diverged
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace smile
