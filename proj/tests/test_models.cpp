#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "introdistill/network.hpp"
#include "introdistill/optimizer.hpp"
#include "introdistill/ops.hpp"
#include "test_util.hpp"

using namespace introdistill;

namespace {

NetworkSpec mlp_spec(Shape input, std::vector<std::size_t> hidden,
                     std::size_t classes) {
  NetworkSpec s;
  s.kind = ArchKind::Mlp;
  s.input_shape = std::move(input);
  s.hidden = std::move(hidden);
  s.classes = classes;
  return s;
}

}  // namespace

TEST_CASE("initialization is deterministic per seed") {
  NetworkSpec spec = mlp_spec({6}, {8}, 3);
  Network a = Network::init(spec, 42);
  Network b = Network::init(spec, 42);
  Network c = Network::init(spec, 43);
  REQUIRE(a.params().size() == b.params().size());
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    for (std::size_t j = 0; j < a.params()[i].numel(); ++j) {
      if (a.params()[i][j] != b.params()[i][j]) all_equal = false;
      if (a.params()[i][j] != c.params()[i][j]) any_diff = true;
    }
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("parameter count for the classic 784-256-10 stack") {
  Network net = Network::init(mlp_spec({784}, {256}, 10), 1);
  CHECK(net.param_count() == 784u * 256 + 256 + 256 * 10 + 10);
  CHECK(net.param_count() == 203530u);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(Network::init(mlp_spec({4}, {8}, 1), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(Network::init(mlp_spec({4}, {0}, 3), 1),
                  std::invalid_argument);
  NetworkSpec cnn;
  cnn.kind = ArchKind::CnnSmall;
  cnn.input_shape = {1, 8, 8};
  cnn.hidden = {4};  // needs two channel counts
  cnn.classes = 3;
  CHECK_THROWS_AS(Network::init(cnn, 1), std::invalid_argument);
}

TEST_CASE("zero-weight network emits zero logits") {
  Network net = Network::init(mlp_spec({3}, {4}, 2), 9);
  for (NdArray& p : net.params())
    for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
  Rng rng(5);
  NdArray logits = infer(net, testutil::random_batch(5, 3, rng));
  for (std::size_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.0);
}

TEST_CASE("single linear layer is Wx + b") {
  Network net = Network::init(mlp_spec({2}, {}, 2), 3);
  NdArray& w = net.params()[0];
  NdArray& b = net.params()[1];
  w[0] = 1.0; w[1] = -2.0; w[2] = 0.5; w[3] = 3.0;  // [2x2] row-major
  b[0] = 0.25; b[1] = -1.0;
  NdArray x({1, 2}, {2.0, -1.0});
  NdArray logits = infer(net, x);
  CHECK(logits[0] == doctest::Approx(2.0 * 1.0 + -1.0 * 0.5 + 0.25));
  CHECK(logits[1] == doctest::Approx(2.0 * -2.0 + -1.0 * 3.0 + -1.0));
}

TEST_CASE("forward rejects mismatched inputs and is bitwise deterministic") {
  Network net = Network::init(mlp_spec({4}, {5}, 3), 8);
  Rng rng(2);
  NdArray bad = testutil::random_batch(2, 5, rng);
  Tape tape;
  BoundNet bound = bind(tape, net, false);
  CHECK_THROWS_AS(forward(tape, bound, tape.constant(bad)),
                  std::invalid_argument);

  NdArray x = testutil::random_batch(3, 4, rng);
  NdArray l1 = infer(net, x);
  NdArray l2 = infer(net, x);
  for (std::size_t i = 0; i < l1.numel(); ++i) CHECK(l1[i] == l2[i]);
}

TEST_CASE("input gradient of cross entropy matches finite differences") {
  Rng rng(17);
  Network net = Network::init(mlp_spec({5}, {6}, 3), 21);
  NdArray x0 = testutil::random_batch(3, 5, rng, -1.0, 1.0);
  std::vector<int> y = testutil::random_labels(3, 3, rng);

  Tape tape;
  BoundNet bound = bind(tape, net, false);
  Var xv = tape.leaf(x0, true);
  Var loss = mean_all(tape, cross_entropy(tape, forward(tape, bound, xv), y));
  tape.backward(loss);
  const NdArray& analytic = xv.grad();

  auto value_at = [&](const std::vector<double>& flat) {
    NdArray xx({3, 5}, flat);
    Tape t;
    BoundNet b = bind(t, net, false);
    return mean_all(t, cross_entropy(t, forward(t, b, t.constant(xx)), y))
        .value()
        .item();
  };
  std::vector<double> flat(x0.data(), x0.data() + x0.numel());
  std::vector<double> fd = oracle::central_diff(value_at, flat, 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    CHECK(oracle::rel_err(analytic[i], fd[i]) < 1e-4);
  }
}

TEST_CASE("small cnn forward matches a brute-force convolution") {
  NetworkSpec spec;
  spec.kind = ArchKind::CnnSmall;
  spec.input_shape = {1, 6, 6};
  spec.hidden = {2, 3};
  spec.classes = 2;
  Network net = Network::init(spec, 77);
  Rng rng(8);
  NdArray x = testutil::random_batch(2, 36, rng);
  NdArray got = infer(net, x);

  // Direct per-position recomputation of the two stride-2 convs + head.
  auto conv = [](const std::vector<double>& in, std::size_t ic, std::size_t h,
                 std::size_t w, const NdArray& weight, const NdArray& bias) {
    const std::size_t oc = weight.dim(0);
    const std::size_t oh = (h + 2 - 3) / 2 + 1, ow = (w + 2 - 3) / 2 + 1;
    std::vector<double> out(oc * oh * ow, 0.0);
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias[o];
          for (std::size_t c = 0; c < ic; ++c)
            for (std::size_t ki = 0; ki < 3; ++ki)
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const long ih = static_cast<long>(i * 2 + ki) - 1;
                const long iw = static_cast<long>(j * 2 + kj) - 1;
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(h) ||
                    iw >= static_cast<long>(w))
                  continue;
                acc += weight[((o * ic + c) * 3 + ki) * 3 + kj] *
                       in[(c * h + static_cast<std::size_t>(ih)) * w +
                          static_cast<std::size_t>(iw)];
              }
          out[(o * oh + i) * ow + j] = acc;
        }
    return out;
  };

  for (std::size_t n = 0; n < 2; ++n) {
    std::vector<double> in(x.data() + n * 36, x.data() + (n + 1) * 36);
    for (double& v : in) v -= 0.5;  // the cnn centers its inputs
    std::vector<double> h1 = conv(in, 1, 6, 6, net.params()[0], net.params()[1]);
    for (double& v : h1) v = v > 0.0 ? v : 0.0;
    std::vector<double> h2 = conv(h1, 2, 3, 3, net.params()[2], net.params()[3]);
    for (double& v : h2) v = v > 0.0 ? v : 0.0;
    const NdArray& wfc = net.params()[4];
    const NdArray& bfc = net.params()[5];
    for (std::size_t k = 0; k < 2; ++k) {
      double acc = bfc[k];
      for (std::size_t i = 0; i < h2.size(); ++i) acc += h2[i] * wfc[i * 2 + k];
      CHECK(got[n * 2 + k] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("cnn gradients (parameters and inputs) match finite differences") {
  NetworkSpec spec;
  spec.kind = ArchKind::CnnSmall;
  spec.input_shape = {1, 5, 5};
  spec.hidden = {2, 2};
  spec.classes = 3;
  Network net = Network::init(spec, 31);
  Rng rng(4);
  NdArray x = testutil::random_batch(2, 25, rng);
  std::vector<int> y = testutil::random_labels(2, 3, rng);
  const double err = testutil::max_grad_rel_err(
      net, [&](Tape& t, const BoundNet& b) {
        return mean_all(t, cross_entropy(t, forward(t, b, t.constant(x)), y));
      });
  CHECK(err < 1e-4);

  Tape tape;
  BoundNet bound = bind(tape, net, false);
  Var xv = tape.leaf(x, true);
  Var loss = mean_all(tape, cross_entropy(tape, forward(tape, bound, xv), y));
  tape.backward(loss);
  const NdArray& analytic = xv.grad();
  auto value_at = [&](const std::vector<double>& flat) {
    Tape t;
    BoundNet b = bind(t, net, false);
    return mean_all(t, cross_entropy(
                           t, forward(t, b, t.constant(NdArray({2, 25}, flat))),
                           y))
        .value()
        .item();
  };
  std::vector<double> flat(x.data(), x.data() + x.numel());
  std::vector<double> fd = oracle::central_diff(value_at, flat, 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    CHECK(oracle::rel_err(analytic[i], fd[i]) < 1e-4);
  }
}

TEST_CASE("sgd update rule") {
  Network net = Network::init(mlp_spec({2}, {}, 2), 11);

  SUBCASE("momentum 0 and no decay is plain gradient descent") {
    Network n = net;
    SgdOptimizer opt(n, 0.0, 0.0);
    std::vector<NdArray> grads;
    for (const NdArray& p : n.params()) grads.push_back(NdArray::full(p.shape(), 2.0));
    std::vector<double> before = testutil::flatten_params(n);
    opt.step(n, grads, 0.1);
    std::vector<double> after = testutil::flatten_params(n);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(after[i] == doctest::Approx(before[i] - 0.1 * 2.0).epsilon(1e-15));
    }
  }

  SUBCASE("weight decay alone shrinks weights but not biases") {
    Network n = net;
    SgdOptimizer opt(n, 0.0, 0.01);
    std::vector<NdArray> grads;
    for (const NdArray& p : n.params()) grads.push_back(NdArray::zeros(p.shape()));
    NdArray w_before = n.params()[0];
    NdArray b_before = n.params()[1];
    opt.step(n, grads, 0.5);
    for (std::size_t i = 0; i < w_before.numel(); ++i) {
      CHECK(n.params()[0][i] ==
            doctest::Approx(w_before[i] * (1.0 - 0.5 * 0.01)).epsilon(1e-15));
    }
    for (std::size_t i = 0; i < b_before.numel(); ++i) {
      CHECK(n.params()[1][i] == b_before[i]);
    }
  }

  SUBCASE("two momentum steps on a constant gradient") {
    Network n = net;
    SgdOptimizer opt(n, 0.9, 0.0);
    std::vector<NdArray> grads;
    for (const NdArray& p : n.params()) grads.push_back(NdArray::full(p.shape(), 1.0));
    std::vector<double> before = testutil::flatten_params(n);
    opt.step(n, grads, 0.01);
    opt.step(n, grads, 0.01);
    std::vector<double> after = testutil::flatten_params(n);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(before[i] - after[i] ==
            doctest::Approx(0.01 * (1.0 + 1.9)).epsilon(1e-14));
    }
  }

  SUBCASE("shape mismatch is rejected") {
    Network n = net;
    SgdOptimizer opt(n, 0.9, 0.0);
    std::vector<NdArray> grads(n.params().size(), NdArray::zeros({1}));
    CHECK_THROWS_AS(opt.step(n, grads, 0.1), std::invalid_argument);
  }
}

TEST_CASE("learning rate schedule milestones") {
  LrSchedule sched{0.1, {100, 150}, 0.1};
  CHECK(sched.at_epoch(0) == doctest::Approx(0.1));
  CHECK(sched.at_epoch(99) == doctest::Approx(0.1));
  CHECK(sched.at_epoch(100) == doctest::Approx(0.01));
  CHECK(sched.at_epoch(149) == doctest::Approx(0.01));
  CHECK(sched.at_epoch(150) == doctest::Approx(0.001));
  LrSchedule flat{0.05, {}, 0.1};
  CHECK(flat.at_epoch(1000) == doctest::Approx(0.05));
  LrSchedule bad{0.1, {}, 1.5};
  CHECK_THROWS_AS(bad.at_epoch(0), std::invalid_argument);
}

TEST_CASE("optimizer reproduces the analytic trajectory on a quadratic bowl") {
  // f(p) = 0.5 * sum a_i (p_i - c_i)^2, plain gradient descent.
  const std::vector<double> a = {1.0, 0.5, 2.0};
  const std::vector<double> c = {0.3, -1.2, 0.7};
  NetworkSpec spec = mlp_spec({3}, {}, 2);
  Network net = Network::init(spec, 5);
  // Use the first weight row as the optimized vector; zero out the rest.
  for (NdArray& p : net.params())
    for (std::size_t i = 0; i < p.numel(); ++i) p[i] = 0.0;
  net.params()[0][0] = 1.0;
  net.params()[0][2] = -2.0;
  net.params()[0][4] = 3.0;

  std::vector<double> analytic = {1.0, -2.0, 3.0};
  SgdOptimizer opt(net, 0.0, 0.0);
  const double lr = 0.05;
  for (int step = 0; step < 50; ++step) {
    std::vector<NdArray> grads;
    for (const NdArray& p : net.params()) grads.push_back(NdArray::zeros(p.shape()));
    for (int i = 0; i < 3; ++i) {
      grads[0][static_cast<std::size_t>(2 * i)] =
          a[static_cast<std::size_t>(i)] *
          (net.params()[0][static_cast<std::size_t>(2 * i)] -
           c[static_cast<std::size_t>(i)]);
    }
    opt.step(net, grads, lr);
    for (int i = 0; i < 3; ++i) {
      analytic[static_cast<std::size_t>(i)] -=
          lr * a[static_cast<std::size_t>(i)] *
          (analytic[static_cast<std::size_t>(i)] - c[static_cast<std::size_t>(i)]);
      CHECK(std::fabs(net.params()[0][static_cast<std::size_t>(2 * i)] -
                      analytic[static_cast<std::size_t>(i)]) < 1e-10);
    }
  }
}

TEST_CASE("a linearly separable toy set trains to 100% accuracy") {
  // Two clusters split on the first coordinate with a wide margin.
  const std::size_t n = 40;
  std::vector<double> xs;
  std::vector<int> ys;
  Rng rng(13);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2;
    const double x0 = label == 0 ? rng.uniform(0.05, 0.3) : rng.uniform(0.7, 0.95);
    xs.push_back(x0);
    xs.push_back(rng.uniform(0.0, 1.0));
    ys.push_back(label);
  }
  NdArray x({n, 2}, std::move(xs));

  Network net = Network::init(mlp_spec({2}, {8}, 2), 99);
  SgdOptimizer opt(net, 0.9, 0.0);
  for (int epoch = 0; epoch < 50; ++epoch) {
    Tape tape;
    BoundNet bound = bind(tape, net, true);
    Var loss =
        mean_all(tape, cross_entropy(tape, forward(tape, bound, tape.constant(x)), ys));
    tape.backward(loss);
    std::vector<NdArray> grads;
    for (const Var& p : bound.params) grads.push_back(p.grad());
    opt.step(net, grads, 0.5);
  }
  CHECK(accuracy(infer(net, x), ys) == 1.0);
}
