#include "introdistill/tape.hpp"

#include <stdexcept>
#include <utility>

namespace introdistill {

const NdArray& Var::value() const { return tape_->value(index_); }

const NdArray& Var::grad() const { return tape_->grad(index_); }

bool Var::requires_grad() const { return tape_->requires_grad(index_); }

Var Tape::leaf(NdArray value, bool requires_grad) {
  return record(std::move(value), requires_grad, nullptr);
}

Var Tape::record(NdArray value, bool requires_grad, BackpropFn backprop) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

NdArray& Tape::grad_buffer(std::size_t index) {
  Node& node = nodes_[index];
  if (!node.grad_allocated) {
    node.grad = NdArray::zeros(node.value.shape());
    node.grad_allocated = true;
  }
  return node.grad;
}

const NdArray& Tape::grad(std::size_t index) const {
  const Node& node = nodes_[index];
  if (!node.requires_grad) {
    throw std::logic_error("Tape::grad: node does not require gradients");
  }
  if (!node.grad_allocated) {
    throw std::logic_error("Tape::grad: backward has not been run");
  }
  return node.grad;
}

void Tape::backward(const Var& root) {
  if (backward_run_) {
    throw std::logic_error(
        "Tape::backward: called twice on one recording; re-record the graph");
  }
  if (root.tape() != this) {
    throw std::invalid_argument("Tape::backward: root lives on another tape");
  }
  if (root.value().numel() != 1) {
    throw std::invalid_argument("Tape::backward: root must be scalar, got " +
                                shape_str(root.value().shape()));
  }
  backward_run_ = true;

  // Zero-filled buffers for everything that participates in gradient flow;
  // gradients on untouched subgraphs then read back as exact zeros.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad) grad_buffer(i);
  }
  if (!nodes_[root.index()].requires_grad) {
    // Root detached from every trainable leaf; all gradients stay zero.
    return;
  }
  grad_buffer(root.index())[0] = 1.0;

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backprop) continue;
    // Nothing flowed into this node (detached or zero-weighted branch);
    // propagating exact zeros is a no-op, so skip the work.
    bool any = false;
    for (std::size_t j = 0; j < node.grad.numel(); ++j) {
      if (node.grad[j] != 0.0) {
        any = true;
        break;
      }
    }
    if (any) node.backprop(*this, node.grad);
  }
}

Var detach(Tape& tape, const Var& v) {
  return tape.constant(v.value());
}

}  // namespace introdistill
