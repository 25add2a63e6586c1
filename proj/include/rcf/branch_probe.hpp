// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace rcf::detail {

/// Fingerprint of the discrete branch choices (relu sign pattern, max-pool
/// argmax) taken during a forward pass. Only collected while a probe is
/// active on the current thread; the gradient checker compares fingerprints
/// to detect coordinates whose perturbation crosses a kink.
class BranchProbe {
 public:
  BranchProbe();
  ~BranchProbe();
  BranchProbe(const BranchProbe&) = delete;
  BranchProbe& operator=(const BranchProbe&) = delete;

  std::uint64_t fingerprint() const { return hash_; }

  static BranchProbe* active();
  void mix(std::uint64_t value);

 private:
  std::uint64_t hash_ = 1469598103934665603ull;
  BranchProbe* previous_;
};

}  // namespace rcf::detail
