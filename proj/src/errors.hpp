#pragma once

#include <stdexcept>
#include <string>

namespace hexplan {

// bad or unparseable input documents
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// structurally valid input that breaks a contract (mixed-type tp stage, etc.)
struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// search ended without a usable result ("no feasible plan", "unbalanceable")
struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// instance too large for an exhaustive path
struct LimitExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hexplan
