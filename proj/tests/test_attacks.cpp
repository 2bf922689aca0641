#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "introdistill/attacks.hpp"
#include "introdistill/ops.hpp"
#include "test_util.hpp"

using namespace introdistill;

namespace {

NetworkSpec linear_spec(std::size_t d, std::size_t classes) {
  NetworkSpec s;
  s.kind = ArchKind::Mlp;
  s.input_shape = {d};
  s.hidden = {};
  s.classes = classes;
  return s;
}

NetworkSpec mlp_spec(std::size_t d, std::size_t hidden, std::size_t classes) {
  NetworkSpec s = linear_spec(d, classes);
  s.hidden = {hidden};
  return s;
}

double ce_batch(const Network& net, const NdArray& x,
                const std::vector<int>& y) {
  Tape tape;
  BoundNet bound = bind(tape, net, false);
  return sum_all(tape, cross_entropy(tape, forward(tape, bound, tape.constant(x)), y))
      .value()
      .item();
}

}  // namespace

TEST_CASE("project_linf") {
  SUBCASE("points inside the ball and range are untouched") {
    Rng rng(3);
    NdArray x = testutil::random_batch(4, 5, rng, 0.3, 0.7);
    NdArray inside = x;
    for (std::size_t i = 0; i < inside.numel(); ++i) inside[i] += 0.01;
    NdArray out = project_linf(inside, x, 0.05, 0.0, 1.0);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == inside[i]);
  }
  SUBCASE("clamp chain example") {
    NdArray x({1, 1}, {0.5});
    NdArray adv({1, 1}, {0.9});
    CHECK(project_linf(adv, x, 0.1, 0.0, 1.0)[0] == doctest::Approx(0.6));
  }
  SUBCASE("idempotence, bitwise") {
    Rng rng(5);
    for (int it = 0; it < 50; ++it) {
      NdArray x = testutil::random_batch(3, 4, rng, 0.0, 1.0);
      NdArray v = testutil::random_batch(3, 4, rng, -1.0, 2.0);
      const double eps = rng.uniform(0.0, 0.5);
      NdArray once = project_linf(v, x, eps, 0.0, 1.0);
      NdArray twice = project_linf(once, x, eps, 0.0, 1.0);
      for (std::size_t i = 0; i < once.numel(); ++i) CHECK(twice[i] == once[i]);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(project_linf(NdArray::zeros({2}), NdArray::zeros({3}), 0.1,
                                 0.0, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("budget validation") {
  AttackBudget b;
  b.epsilon = -0.1;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  b.epsilon = 0.1;
  b.step_size = 0.0;
  b.steps = 5;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  b.step_size = 0.01;
  b.clamp_lo = 1.0;
  b.clamp_hi = 0.0;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}

TEST_CASE("fgsm with epsilon zero returns x bitwise") {
  Network net = Network::init(mlp_spec(4, 6, 3), 2);
  Rng rng(9);
  NdArray x = testutil::random_batch(3, 4, rng);
  AttackBudget b;
  b.epsilon = 0.0;
  NdArray adv = fgsm(net, x, {0, 1, 2}, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(adv[i] == x[i]);
}

TEST_CASE("fgsm matches the closed-form linear-classifier gradient") {
  Network net = Network::init(linear_spec(3, 3), 7);
  Rng rng(10);
  NdArray x = testutil::random_batch(4, 3, rng, 0.2, 0.8);
  std::vector<int> y = testutil::random_labels(4, 3, rng);
  AttackBudget b;
  b.epsilon = 0.05;
  NdArray adv = fgsm(net, x, y, b);

  // g[i,j] = sum_k (p_ik - [k==y_i]) W[j,k]
  const NdArray probs = softmax_rows(infer(net, x), 1.0);
  const NdArray& w = net.params()[0];
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double indicator = static_cast<int>(k) == y[i] ? 1.0 : 0.0;
        g += (probs[i * 3 + k] - indicator) * w[j * 3 + k];
      }
      const double sign = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      const double expect =
          std::clamp(x[i * 3 + j] + b.epsilon * sign, 0.0, 1.0);
      CHECK(adv[i * 3 + j] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("fgsm is pgd with one full-size step, bitwise") {
  Network net = Network::init(mlp_spec(5, 7, 4), 20);
  Rng rng(30);
  NdArray x = testutil::random_batch(6, 5, rng);
  std::vector<int> y = testutil::random_labels(6, 4, rng);
  AttackBudget fb;
  fb.epsilon = 0.07;
  NdArray via_fgsm = fgsm(net, x, y, fb);
  AttackBudget pb = fb;
  pb.steps = 1;
  pb.step_size = fb.epsilon;
  pb.random_start = false;
  NdArray via_pgd = pgd(net, x, y, pb);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(via_fgsm[i] == via_pgd[i]);
}

TEST_CASE("pgd saturates the interval on a 1-d linear model") {
  Network net = Network::init(linear_spec(1, 2), 3);
  net.params()[0][0] = 2.0;   // logit 0 weight
  net.params()[0][1] = -1.0;  // logit 1 weight
  net.params()[1][0] = 0.1;
  net.params()[1][1] = -0.2;
  NdArray x({2, 1}, {0.4, 0.6});
  std::vector<int> y = {0, 1};
  const double eps = 0.1;
  for (std::size_t steps : {1u, 3u, 10u}) {
    AttackBudget b;
    b.epsilon = eps;
    b.step_size = eps;  // saturation after the first step
    b.steps = steps;
    NdArray adv = pgd(net, x, y, b);
    // Label 0 with positive margin weight: loss grows toward smaller logit
    // gap; verify against a brute-force scan of the interval.
    for (std::size_t i = 0; i < 2; ++i) {
      double best_v = x[i], best_loss = -1.0;
      for (int g = 0; g <= 400; ++g) {
        const double v =
            std::clamp(x[i] - eps + 2.0 * eps * g / 400.0, 0.0, 1.0);
        NdArray probe({1, 1}, {v});
        const double loss = ce_batch(net, probe, {y[i]});
        if (loss > best_loss) {
          best_loss = loss;
          best_v = v;
        }
      }
      CHECK(adv[i] == doctest::Approx(best_v).epsilon(1e-9));
      CHECK(std::fabs(std::fabs(adv[i] - x[i]) - eps) < 1e-12);
    }
  }
}

TEST_CASE("pgd ascends the objective on most random instances") {
  Rng rng(55);
  int ascended = 0;
  const int total = 100;
  for (int it = 0; it < total; ++it) {
    Network net = Network::init(mlp_spec(4, 8, 3), 100 + static_cast<std::uint64_t>(it));
    NdArray x = testutil::random_batch(3, 4, rng);
    std::vector<int> y = testutil::random_labels(3, 3, rng);
    AttackBudget b;
    b.epsilon = 0.1;
    b.step_size = 0.025;
    b.steps = 10;
    NdArray adv = pgd(net, x, y, b);
    if (ce_batch(net, adv, y) >= ce_batch(net, x, y)) ++ascended;
  }
  CHECK(ascended >= 95);
}

TEST_CASE("every pgd iterate stays inside the ball and the range") {
  Rng rng(77);
  for (int it = 0; it < 40; ++it) {
    const std::size_t d = 2 + rng.index(6);
    Network net = Network::init(mlp_spec(d, 5, 3), 200 + static_cast<std::uint64_t>(it));
    NdArray x = testutil::random_batch(2, d, rng);
    std::vector<int> y = testutil::random_labels(2, 3, rng);
    AttackBudget b;
    b.epsilon = rng.uniform(0.0, 0.3);
    b.step_size = rng.uniform(0.01, 0.2);
    b.steps = 1 + rng.index(6);
    b.random_start = it % 2 == 0;
    Rng atk(rng.next_u64());
    std::size_t iterates = 0;
    pgd(net, x, y, b, &atk, [&](const NdArray& xt) {
      ++iterates;
      for (std::size_t i = 0; i < xt.numel(); ++i) {
        CHECK(std::fabs(xt[i] - x[i]) <= b.epsilon + 1e-12);
        CHECK(xt[i] >= 0.0);
        CHECK(xt[i] <= 1.0);
      }
    });
    CHECK(iterates == b.steps + (b.random_start ? 1 : 0));
  }
}

TEST_CASE("final attack loss is monotone in epsilon for a linear model") {
  Network net = Network::init(linear_spec(4, 3), 40);
  Rng rng(12);
  NdArray x = testutil::random_batch(3, 4, rng, 0.3, 0.7);
  std::vector<int> y = testutil::random_labels(3, 3, rng);
  double prev = -1.0;
  for (int i = 0; i <= 16; ++i) {
    AttackBudget b;
    b.epsilon = i / 255.0;
    b.step_size = b.epsilon > 0 ? b.epsilon / 4.0 : 1.0;
    b.steps = 10;
    NdArray adv = pgd(net, x, y, b);
    const double loss = ce_batch(net, adv, y);
    CHECK(loss >= prev - 1e-9);
    prev = loss;
  }
}

TEST_CASE("deterministic start gives bitwise identical attacks") {
  Network net = Network::init(mlp_spec(4, 6, 3), 60);
  Rng rng(1);
  NdArray x = testutil::random_batch(3, 4, rng);
  std::vector<int> y = testutil::random_labels(3, 3, rng);
  AttackBudget b;
  b.epsilon = 0.08;
  b.step_size = 0.02;
  b.steps = 7;
  NdArray a1 = pgd(net, x, y, b);
  NdArray a2 = pgd(net, x, y, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(a1[i] == a2[i]);

  SUBCASE("random start replays from an equal rng stream") {
    b.random_start = true;
    Rng r1(42), r2(42);
    NdArray s1 = pgd(net, x, y, b, &r1);
    NdArray s2 = pgd(net, x, y, b, &r2);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(s1[i] == s2[i]);
  }
}

TEST_CASE("pgd with zero steps and no random start returns x") {
  Network net = Network::init(mlp_spec(3, 4, 2), 70);
  Rng rng(2);
  NdArray x = testutil::random_batch(2, 3, rng);
  AttackBudget b;
  b.epsilon = 0.1;
  b.steps = 0;
  NdArray adv = pgd(net, x, {0, 1}, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(adv[i] == x[i]);
}

TEST_CASE("kl-to-natural objective requires the natural reference") {
  Network net = Network::init(mlp_spec(3, 4, 2), 71);
  Rng rng(6);
  NdArray x = testutil::random_batch(2, 3, rng);
  Tape tape;
  BoundNet bound = bind(tape, net, false);
  Var xv = tape.leaf(x, true);
  CHECK_THROWS_AS(attack_objective(tape, bound, xv, {0, 1},
                                   AttackObjective::KlToNatural, nullptr),
                  std::invalid_argument);
}

TEST_CASE("kl-to-natural attack raises the divergence from natural outputs") {
  Network net = Network::init(mlp_spec(4, 8, 3), 72);
  Rng rng(14);
  NdArray x = testutil::random_batch(3, 4, rng);
  std::vector<int> y = {0, 1, 2};
  AttackBudget b;
  b.epsilon = 0.1;
  b.step_size = 0.025;
  b.steps = 10;
  b.objective = AttackObjective::KlToNatural;
  // The divergence is stationary at x itself, so the inner maximization needs
  // the random start to escape (reference robust-regularization practice).
  b.random_start = true;
  Rng atk(99);
  NdArray adv = pgd(net, x, y, b, &atk);
  const NdArray nat_probs = softmax_rows(infer(net, x), 1.0);
  const NdArray adv_probs = softmax_rows(infer(net, adv), 1.0);
  double kl = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> q(adv_probs.data() + i * 3, adv_probs.data() + (i + 1) * 3);
    std::vector<double> p(nat_probs.data() + i * 3, nat_probs.data() + (i + 1) * 3);
    kl += oracle::kl_row(q, p);
  }
  CHECK(kl > 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(std::fabs(adv[i] - x[i]) <= b.epsilon + 1e-12);
  }
}
