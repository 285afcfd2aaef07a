#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace relrank {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Bad input: malformed files, out-of-range ids, violated invariants.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure at runtime (divergence, overflow).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triple {
  EntityId s = 0;
  RelationId p = 0;
  EntityId o = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

}  // namespace relrank
