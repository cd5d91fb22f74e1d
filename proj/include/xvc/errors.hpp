// Copyright Contributors to the xvc Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xvc {

/// Raised when a caller breaks a precondition: shape mismatch, bad axis,
/// invalid configuration, reuse of a consumed graph.
class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Raised when values fall outside an operation's mathematical domain.
/// `operand()` names the offending input (0-based), or -1 when not tied to one.
class DomainError : public std::domain_error {
  public:
    explicit DomainError(const std::string &what, int operand = -1)
        : std::domain_error(what), operand_(operand) {}

    int operand() const noexcept { return operand_; }

  private:
    int operand_;
};

namespace detail {

[[noreturn]] inline void contract(const std::string &msg) { throw ContractViolation(msg); }

inline void require(bool cond, const std::string &msg) {
    if (!cond) {
        throw ContractViolation(msg);
    }
}

} // namespace detail
} // namespace xvc
