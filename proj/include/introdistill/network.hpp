#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "introdistill/ndarray.hpp"
#include "introdistill/ops.hpp"
#include "introdistill/tape.hpp"

namespace introdistill {

enum class ArchKind { Mlp, CnnSmall };

std::string arch_name(ArchKind kind);
ArchKind arch_from_name(const std::string& name);

// Desk-scale classifier description. For Mlp, `hidden` lists the hidden layer
// widths; for CnnSmall it lists the two conv channel counts (3x3 kernels,
// stride 2, zero padding 1, relu, then a linear head).
struct NetworkSpec {
  ArchKind kind = ArchKind::Mlp;
  std::vector<std::size_t> hidden = {32};
  Shape input_shape = {2};
  std::size_t classes = 2;

  void validate() const;
  std::size_t input_numel() const { return shape_numel(input_shape); }
  bool operator==(const NetworkSpec&) const = default;
};

// A parameter set plus its spec. Parameters are stored in a fixed order
// (weight, bias per layer); bias_mask marks tensors excluded from weight
// decay.
class Network {
 public:
  Network() = default;

  static Network init(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  std::vector<NdArray>& params() { return params_; }
  const std::vector<NdArray>& params() const { return params_; }
  const std::vector<bool>& bias_mask() const { return bias_mask_; }
  std::size_t param_count() const;

  // Construction from deserialized pieces (checkpoint loading).
  Network(NetworkSpec spec, std::vector<NdArray> params);

 private:
  NetworkSpec spec_;
  std::vector<NdArray> params_;
  std::vector<bool> bias_mask_;
};

// Network parameters registered as leaves on a tape. Reusing one binding for
// several forward passes accumulates all gradients on the same leaves.
struct BoundNet {
  const Network* net = nullptr;
  std::vector<Var> params;
};

BoundNet bind(Tape& tape, const Network& net, bool requires_grad);

// Input is [batch, input_numel]; returns logits [batch, classes].
// Differentiable with respect to both the binding's parameters and the input.
Var forward(Tape& tape, const BoundNet& bound, const Var& input);

// Logits without gradient recording.
NdArray infer(const Network& net, const NdArray& input);

}  // namespace introdistill
