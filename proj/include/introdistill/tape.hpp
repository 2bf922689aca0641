#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "introdistill/ndarray.hpp"

namespace introdistill {

class Tape;

// Lightweight handle to a node on a tape. Cheap to copy; valid for the
// lifetime of the tape that produced it.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  const NdArray& value() const;
  const NdArray& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Records one step of computation. Nodes are appended in evaluation order, so
// the record is already topologically sorted; backward() walks it once in
// reverse. A tape represents a single recording: calling backward() twice
// without re-recording is an error.
class Tape {
 public:
  using BackpropFn = std::function<void(Tape&, const NdArray& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(NdArray value, bool requires_grad);
  Var constant(NdArray value) { return leaf(std::move(value), false); }

  // Used by op implementations: appends a node whose gradient is propagated
  // to its parents by `backprop` (null for results that end gradient flow).
  Var record(NdArray value, bool requires_grad, BackpropFn backprop);

  const NdArray& value(std::size_t index) const { return nodes_[index].value; }
  bool requires_grad(std::size_t index) const {
    return nodes_[index].requires_grad;
  }

  // Gradient accumulation buffer for a node; allocated zero-filled on first
  // access during backward.
  NdArray& grad_buffer(std::size_t index);
  const NdArray& grad(std::size_t index) const;

  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }
  bool backward_run() const { return backward_run_; }

 private:
  struct Node {
    NdArray value;
    NdArray grad;
    bool requires_grad = false;
    bool grad_allocated = false;
    BackpropFn backprop;
  };
  std::vector<Node> nodes_;
  bool backward_run_ = false;
};

// Same values (bitwise), excluded from gradient flow.
Var detach(Tape& tape, const Var& v);

}  // namespace introdistill
