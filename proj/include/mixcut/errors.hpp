#pragma once

#include <stdexcept>
#include <string>

namespace mixcut {

// Violated precondition or malformed input. The CLI maps this to exit code 2.
class contract_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Linear-algebra or floating-point breakdown. The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw contract_error(msg);
}

}  // namespace mixcut
