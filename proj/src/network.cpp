#include "introdistill/network.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "introdistill/rng.hpp"

namespace introdistill {

std::string arch_name(ArchKind kind) {
  return kind == ArchKind::Mlp ? "mlp" : "cnn-small";
}

ArchKind arch_from_name(const std::string& name) {
  if (name == "mlp") return ArchKind::Mlp;
  if (name == "cnn-small") return ArchKind::CnnSmall;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

void NetworkSpec::validate() const {
  if (input_numel() == 0) {
    throw std::invalid_argument("NetworkSpec: input shape must be non-empty");
  }
  if (classes < 2) {
    throw std::invalid_argument("NetworkSpec: class count must be >= 2");
  }
  for (std::size_t w : hidden) {
    if (w == 0) throw std::invalid_argument("NetworkSpec: zero-width layer");
  }
  if (kind == ArchKind::CnnSmall) {
    if (input_shape.size() != 3) {
      throw std::invalid_argument(
          "NetworkSpec: cnn-small expects input shape [c,h,w]");
    }
    if (hidden.size() != 2) {
      throw std::invalid_argument(
          "NetworkSpec: cnn-small expects two channel counts");
    }
    if (input_shape[1] < 2 || input_shape[2] < 2) {
      throw std::invalid_argument("NetworkSpec: cnn-small input too small");
    }
  }
}

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kStride = 2;
constexpr std::size_t kPad = 1;

std::size_t conv_out(std::size_t n) { return (n + 2 * kPad - kKernel) / kStride + 1; }

NdArray uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
  return NdArray(std::move(shape), std::move(data));
}

}  // namespace

Network Network::init(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(Rng::derive(seed, {streams::kInit}));
  Network net;
  net.spec_ = spec;

  auto push_layer = [&](Shape wshape, Shape bshape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    net.params_.push_back(uniform_tensor(std::move(wshape), bound, rng));
    net.bias_mask_.push_back(false);
    net.params_.push_back(uniform_tensor(std::move(bshape), bound, rng));
    net.bias_mask_.push_back(true);
  };

  if (spec.kind == ArchKind::Mlp) {
    std::vector<std::size_t> widths;
    widths.push_back(spec.input_numel());
    widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
    widths.push_back(spec.classes);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      push_layer({widths[l], widths[l + 1]}, {widths[l + 1]}, widths[l]);
    }
  } else {
    const std::size_t in_c = spec.input_shape[0];
    const std::size_t h = spec.input_shape[1], w = spec.input_shape[2];
    const std::size_t c1 = spec.hidden[0], c2 = spec.hidden[1];
    push_layer({c1, in_c, kKernel, kKernel}, {c1}, in_c * kKernel * kKernel);
    push_layer({c2, c1, kKernel, kKernel}, {c2}, c1 * kKernel * kKernel);
    const std::size_t flat = c2 * conv_out(conv_out(h)) * conv_out(conv_out(w));
    push_layer({flat, spec.classes}, {spec.classes}, flat);
  }
  return net;
}

Network::Network(NetworkSpec spec, std::vector<NdArray> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    bias_mask_.push_back(params_[i].rank() == 1);
  }
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const NdArray& p : params_) n += p.numel();
  return n;
}

BoundNet bind(Tape& tape, const Network& net, bool requires_grad) {
  BoundNet bound;
  bound.net = &net;
  bound.params.reserve(net.params().size());
  for (const NdArray& p : net.params()) {
    bound.params.push_back(tape.leaf(p, requires_grad));
  }
  return bound;
}

Var forward(Tape& tape, const BoundNet& bound, const Var& input) {
  const Network& net = *bound.net;
  const NetworkSpec& spec = net.spec();
  const NdArray& x = input.value();
  if (x.rank() != 2 || x.dim(1) != spec.input_numel()) {
    throw std::invalid_argument("forward: input shape " +
                                shape_str(x.shape()) + " does not match spec " +
                                shape_str(spec.input_shape));
  }
  const std::size_t batch = x.dim(0);

  if (spec.kind == ArchKind::Mlp) {
    Var h = input;
    const std::size_t layers = bound.params.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
      h = add_bias(tape, matmul(tape, h, bound.params[2 * l]),
                   bound.params[2 * l + 1]);
      if (l + 1 < layers) h = relu(tape, h);
    }
    return h;
  }

  // Inputs live in [0,1]; centering them keeps the first conv's relu units
  // alive at initialization.
  Var h = reshape(tape, add_const(tape, input, -0.5),
                  {batch, spec.input_shape[0], spec.input_shape[1],
                   spec.input_shape[2]});
  h = relu(tape, conv2d(tape, h, bound.params[0], bound.params[1], kStride,
                        kPad));
  h = relu(tape, conv2d(tape, h, bound.params[2], bound.params[3], kStride,
                        kPad));
  const std::size_t flat = h.value().numel() / batch;
  h = reshape(tape, h, {batch, flat});
  return add_bias(tape, matmul(tape, h, bound.params[4]), bound.params[5]);
}

NdArray infer(const Network& net, const NdArray& input) {
  Tape tape;
  BoundNet bound = bind(tape, net, false);
  Var logits = forward(tape, bound, tape.constant(input));
  return logits.value();
}

}  // namespace introdistill
