#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace cyberops {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct CapacityError : std::length_error {
  CapacityError(const std::string& what, std::size_t required)
      : std::length_error(what), required_capacity(required) {}
  std::size_t required_capacity;
};

struct TemplateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

struct NodeId {
  std::uint32_t value = 0;
  constexpr auto operator<=>(const NodeId&) const = default;
  constexpr std::size_t index() const { return value; }
};

struct SubnetId {
  std::uint32_t value = 0;
  constexpr auto operator<=>(const SubnetId&) const = default;
  constexpr std::size_t index() const { return value; }
};

constexpr NodeId node_id(std::size_t i) { return NodeId{static_cast<std::uint32_t>(i)}; }
constexpr SubnetId subnet_id(std::size_t i) { return SubnetId{static_cast<std::uint32_t>(i)}; }

/// Hop count that may be Unreachable. Unreachable orders after every finite
/// distance.
class HopDistance {
 public:
  constexpr HopDistance() = default;
  static constexpr HopDistance hops(std::size_t h) { return HopDistance(h); }
  static constexpr HopDistance unreachable() { return HopDistance(); }

  constexpr bool reachable() const { return hops_.has_value(); }
  std::size_t value() const {
    if (!hops_) throw DomainError("distance is unreachable");
    return *hops_;
  }

  constexpr bool operator==(const HopDistance&) const = default;
  constexpr std::strong_ordering operator<=>(const HopDistance& other) const {
    if (reachable() != other.reachable()) {
      return reachable() ? std::strong_ordering::less : std::strong_ordering::greater;
    }
    if (!reachable()) return std::strong_ordering::equal;
    return *hops_ <=> *other.hops_;
  }

  std::string str() const { return hops_ ? std::to_string(*hops_) : std::string("unreachable"); }

 private:
  constexpr explicit HopDistance(std::size_t h) : hops_(h) {}
  std::optional<std::size_t> hops_;
};

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

// mt19937_64 output is fully specified by the standard; the helpers below
// avoid std distributions, whose algorithms are implementation-defined.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform index in [0, n). Rejection sampling keeps it unbiased.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw DomainError("uniform_index over empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// splitmix64 finalizer, used to derive independent seeds.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const void* data, std::size_t size,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cyberops

template <>
struct std::hash<cyberops::NodeId> {
  std::size_t operator()(const cyberops::NodeId& n) const noexcept { return n.value; }
};

template <>
struct std::hash<cyberops::SubnetId> {
  std::size_t operator()(const cyberops::SubnetId& s) const noexcept { return s.value; }
};
