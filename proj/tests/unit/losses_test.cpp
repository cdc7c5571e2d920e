#include "test_prelude.hpp"

#include <cmath>

#include "gesture/attention.hpp"
#include "gesture/error.hpp"
#include "gesture/metric_losses.hpp"
#include "oracles.hpp"

using namespace gesture;

namespace {

torch::Tensor unit_rows(torch::Tensor x) { return x / x.norm(2, -1, true); }

double scalar(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

TEST_SUITE("metric_losses") {
  TEST_CASE("embedding head is unit norm and pools exactly") {
    EmbeddingHead head(16, 32);
    auto e = head->forward(torch::randn({4, 16, 2, 3, 3}), true);
    CHECK((e.sizes() == torch::IntArrayRef{4, 32}));
    CHECK((torch::allclose(e.norm(2, 1), torch::ones({4}), 1e-5, 1e-5)));
    auto single = head->forward(torch::randn({16, 2, 3, 3}), false);
    CHECK((single.sizes() == torch::IntArrayRef{32}));

    auto c = torch::arange(16, torch::kFloat).view({1, 16, 1, 1, 1}).expand({1, 16, 2, 3, 3});
    CHECK((torch::allclose(c.mean({2, 3, 4}).flatten(), torch::arange(16, torch::kFloat))));
  }

  TEST_CASE("frozen BN: scaling features leaves direction unchanged when BN is linear") {
    EmbeddingHead head(16, 32);
    {
      torch::NoGradGuard g;
      // identity running stats and no shift make BN a pure per-channel scale
      head->bn()->running_mean.zero_();
      head->bn()->running_var.fill_(1.0);
      head->bn()->bias.zero_();
    }
    auto f = torch::randn({2, 16, 2, 3, 3});
    CHECK(torch::allclose(head->forward(f, false), head->forward(10 * f, false), 1e-5, 1e-6));
  }

  TEST_CASE("embedding head rejects a zero vector") {
    EmbeddingHead head(4, 8);
    {
      torch::NoGradGuard g;
      head->bn()->bias.zero_();
      head->bn()->running_mean.zero_();
    }
    CHECK_THROWS_AS(head->forward(torch::zeros({1, 4, 1, 2, 2}), false), NumericError);
  }

  TEST_CASE("scale schedule") {
    ScaleSchedule s;
    CHECK(scale_at(s, 0) == 30.0);
    CHECK(scale_at(s, 20) == 17.5);
    CHECK(scale_at(s, 40) == 5.0);
    CHECK(scale_at(s, 100) == 5.0);
  }

  TEST_CASE("AM softmax examples") {
    AmSoftmaxParams p{0.0, 1.0, 0.0};
    auto l = am_softmax_entropy_loss(torch::tensor({1.0, 0.0}, torch::kDouble), torch::tensor(0), p);
    CHECK(scalar(l) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-10));
    CHECK(scalar(l) == doctest::Approx(0.31326).epsilon(1e-5));
    AmSoftmaxParams sym{0.0, 1.0, 1.0};
    CHECK(scalar(am_softmax_entropy_loss(torch::tensor({0.0, 0.0}, torch::kDouble), torch::tensor(1), sym)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(am_softmax_entropy_loss(torch::tensor({0.5}), torch::tensor(0), p), ConfigError);
  }

  TEST_CASE("AM softmax reduces to cross entropy and vanishing entropy") {
    torch::manual_seed(1);
    auto cos = torch::rand({16, 5}, torch::kDouble) * 2 - 1;
    auto y = torch::randint(0, 5, {16});
    AmSoftmaxParams p{0.0, 1.0, 0.0};
    auto ce = torch::nll_loss(torch::log_softmax(cos, 1), y, {}, at::Reduction::None);
    CHECK(torch::allclose(am_softmax_entropy_loss(cos, y, p), ce, 0, 1e-8));

    // near one-hot: entropy -> 0, loss -> cross entropy
    auto conf = torch::tensor({{1.0, -1.0, -1.0}}, torch::kDouble);
    AmSoftmaxParams sharp{0.0, 30.0, 0.2};
    AmSoftmaxParams plain{0.0, 30.0, 0.0};
    CHECK(scalar(am_softmax_entropy_loss(conf, torch::tensor({0}), sharp)) ==
          doctest::Approx(scalar(am_softmax_entropy_loss(conf, torch::tensor({0}), plain))).epsilon(1e-6));
  }

  TEST_CASE("AM softmax is non-increasing in the label cosine") {
    torch::manual_seed(2);
    AmSoftmaxParams p;
    for (int i = 0; i < 50; ++i) {
      auto cos = (torch::rand({6}, torch::kDouble) * 2 - 1).requires_grad_(true);
      auto l = am_softmax_entropy_loss(cos, torch::tensor(3), p);
      if (scalar(l) <= 0) continue;
      l.backward();
      CHECK(cos.grad()[3].item<double>() <= 0.0);
    }
  }

  TEST_CASE("scale does not move the argmax") {
    auto cos = torch::rand({8, 5}, torch::kDouble);
    auto a = torch::softmax(cos * 5, 1).argmax(1);
    auto b = torch::softmax(cos * 30, 1).argmax(1);
    CHECK(torch::equal(a, b));
  }

  TEST_CASE("PR product forward and gradient gate") {
    torch::manual_seed(3);
    auto e = unit_rows(torch::randn({1000, 16}, torch::kDouble));
    auto w = unit_rows(torch::randn({7, 16}, torch::kDouble));
    CHECK(torch::allclose(pr_product(e, w), torch::matmul(e, w.t()), 0, 1e-6));

    // aligned: cos = 1 gates the gradient to zero
    auto v = unit_rows(torch::randn({16}, torch::kDouble));
    auto w1 = torch::stack({v, unit_rows(torch::randn({16}, torch::kDouble))});
    auto ea = v.clone().requires_grad_(true);
    pr_product(ea, w1)[0].backward();
    CHECK(ea.grad().abs().max().item<double>() < 1e-6);

    // orthogonal: gradient equals the plain inner product gradient (the row)
    auto u = torch::zeros({16}, torch::kDouble);
    u[0] = 1;
    auto wo = torch::zeros({2, 16}, torch::kDouble);
    wo[0][1] = 1;
    wo[1][2] = 1;
    auto eo = u.clone().requires_grad_(true);
    pr_product(eo, wo)[0].backward();
    CHECK(torch::allclose(eo.grad(), wo[0]));
  }

  TEST_CASE("push loss examples") {
    auto e = torch::tensor({{1.0, 0.0}, {0.9, std::sqrt(1 - 0.81)}}, torch::kDouble);
    CHECK((scalar(push_loss(e, torch::tensor({0, 1}))) == doctest::Approx(0.2).epsilon(1e-12)));
    CHECK((scalar(push_loss(e, torch::tensor({1, 1}))) == 0.0));
    auto o = torch::tensor({{1.0, 0.0}, {0.0, 1.0}}, torch::kDouble);
    CHECK((scalar(push_loss(o, torch::tensor({0, 1}))) == 0.0));
  }

  TEST_CASE("push loss is permutation invariant") {
    torch::manual_seed(4);
    auto e = unit_rows(torch::randn({8, 3}, torch::kDouble));
    auto y = torch::tensor({0, 1, 0, 2, 1, 2, 0, 1});
    auto perm = torch::randperm(8);
    CHECK(scalar(push_loss(e, y)) == doctest::Approx(scalar(push_loss(e.index_select(0, perm), y.index_select(0, perm)))));
  }

  TEST_CASE("center push examples") {
    auto ortho = torch::eye(2, torch::kDouble);
    CHECK(scalar(center_push_loss(ortho)) == 0.0);
    auto same = torch::tensor({{1.0, 0.0}, {1.0, 0.0}}, torch::kDouble);
    CHECK(scalar(center_push_loss(same)) == doctest::Approx(0.3));
    auto three = torch::tensor({{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}, torch::kDouble);
    CHECK(scalar(center_push_loss(three)) == doctest::Approx(0.1));
  }

  TEST_CASE("total loss sums and names bad components") {
    LossTerms zero{torch::zeros({}), torch::zeros({}), torch::zeros({}), {}};
    CHECK(scalar(total_loss(zero)) == 0.0);
    LossTerms t{torch::tensor(0.5), torch::tensor(0.2), torch::tensor(0.1), {torch::tensor(0.05), torch::tensor(0.05)}};
    CHECK(scalar(total_loss(t)) == doctest::Approx(0.9));
    t.push = torch::tensor(std::nan(""));
    try {
      total_loss(t);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("push") != std::string::npos);
    }
  }

  TEST_CASE("gradients match finite differences") {
    torch::manual_seed(6);
    AmSoftmaxParams p{0.35, 5.0, 0.2};
    int checked = 0;
    for (int i = 0; i < 30; ++i) {
      auto cos = torch::rand({4}, torch::kDouble) * 2 - 1;
      auto f = [&](const torch::Tensor& c) { return scalar(am_softmax_entropy_loss(c, torch::tensor(1), p)); };
      if (f(cos) < 1e-3) continue;
      auto x = cos.clone().requires_grad_(true);
      am_softmax_entropy_loss(x, torch::tensor(1), p).backward();
      CHECK(oracle::max_rel_err(x.grad(), oracle::numeric_grad(f, cos), 1e-4) < 1e-4);
      ++checked;
    }
    CHECK(checked > 10);

    auto e = unit_rows(torch::randn({4, 3}, torch::kDouble));
    auto y = torch::tensor({0, 1, 0, 1});
    auto f = [&](const torch::Tensor& v) { return scalar(push_loss(v, y, 0.9)); };
    auto x = e.clone().requires_grad_(true);
    push_loss(x, y, 0.9).backward();
    CHECK(oracle::max_rel_err(x.grad(), oracle::numeric_grad(f, e), 1e-4) < 1e-4);
  }
}
