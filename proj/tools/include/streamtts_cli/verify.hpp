#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamtts/pipeline/synthesis.hpp"

namespace streamtts::cli {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;  ///< observed value against its tolerance
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const;
  void add(std::string name, bool ok, std::string detail);
};

struct LatticeSuiteOptions {
  std::size_t count = 200;
  /// Largest H + S drawn.
  std::size_t max_moves = 12;
  std::uint64_t seed = 1;
};

/// forward_loss against brute-force enumeration, and path counts against
/// the binomial coefficient.
SuiteResult verify_lattice(const LatticeSuiteOptions& options);

/// Finite differences for the lattice loss, transducer loss, the three AR
/// losses and L_AR, on random toy models.
SuiteResult verify_gradients(std::uint64_t seed);

/// Length, conservation, idempotence, lookahead shift and online/offline
/// equivalence over random valid duration-aligned sequences.
SuiteResult verify_dbm(std::size_t count, std::uint64_t seed);

struct CausalitySuiteOptions {
  std::size_t runs = 100;
  std::uint64_t seed = 1;
  /// Trained models to exercise; random toy models when null.
  const pipeline::Models* models = nullptr;
};

/// Instrumented-text streaming runs, prefix-mutation invariance of the mel
/// stream and of teacher-forced AR outputs.
SuiteResult verify_causality(const CausalitySuiteOptions& options);

void print_suite(const SuiteResult& result, std::ostream& out);

}  // namespace streamtts::cli
