// SPDX-License-Identifier: Apache-2.0
//
// Shared aliases, error types and small utilities used across the library.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace unires {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct invalid_input_error : std::runtime_error {
  explicit invalid_input_error(const std::string& what) : std::runtime_error(what) {}
};

struct corrupt_mask_error : std::runtime_error {
  explicit corrupt_mask_error(const std::string& what) : std::runtime_error(what) {}
};

struct invalid_state_error : std::runtime_error {
  explicit invalid_state_error(const std::string& what) : std::runtime_error(what) {}
};

struct empty_context_error : std::runtime_error {
  explicit empty_context_error(const std::string& what) : std::runtime_error(what) {}
};

struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& what) : std::runtime_error(what) {}
};

struct undefined_metric_error : std::runtime_error {
  explicit undefined_metric_error(const std::string& what) : std::runtime_error(what) {}
};

struct backend_error : std::runtime_error {
  explicit backend_error(const std::string& what) : std::runtime_error(what) {}
};

// FNV-1a over a string, used for config hashing and seed derivation.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Deterministic per-name RNG so parameter init does not depend on creation order.
inline std::mt19937_64 seeded_rng(std::uint64_t seed, const std::string& name) {
  return std::mt19937_64(seed ^ fnv1a(name));
}

}  // namespace unires
