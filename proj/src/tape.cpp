// SPDX-License-Identifier: Apache-2.0
#include "rcf/tape.hpp"

#include <algorithm>

namespace rcf {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Tape::Recording::Recording(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Recording::~Recording() { g_active_tape = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) {
    return t != nullptr && t->defined() && t->requires_grad();
  });
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  output.set_requires_grad(true);
  nodes_.push_back({std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward() requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  const bool on_tape =
      std::any_of(nodes_.begin(), nodes_.end(),
                  [&](const Node& n) { return n.output.same_storage(loss); });
  if (!on_tape) throw Error("backward(): loss was not recorded on this tape");

  for (auto& node : nodes_) node.output.drop_grad();
  Tensor seed = loss;
  seed.ensure_grad();
  dispatch(seed.dtype(), [&](auto tag) {
    using T = decltype(tag);
    seed.grad_data<T>()[0] = T(1);
  });

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

}  // namespace rcf
