// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "rcf/tensor.hpp"

namespace rcf {

/**
 * Reverse-mode autodiff tape.
 *
 * Operations executed while a Tape::Recording guard is alive on the current
 * thread append one node each, in execution order, so the node list is
 * topologically sorted by construction. backward() walks it in reverse.
 *
 * Gradients of leaves accumulate across backward() calls; call zero_grad()
 * on parameters between optimizer steps. Gradients of intermediate results
 * are reset at the start of every backward().
 */
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Tape recording on this thread, or nullptr.
  static Tape* active();

  /// Scoped activation; nests by restoring the previous tape on exit.
  class Recording {
   public:
    explicit Recording(Tape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Node> nodes_;
};

/// True when an op over `inputs` must be recorded on the active tape.
bool should_record(std::initializer_list<const Tensor*> inputs);

}  // namespace rcf
