#include <catch_amalgamated.hpp>

#include "grad_check.hpp"
#include "slukit/autodiff.hpp"

using namespace slukit;
using slukit::testing::grad_check;

namespace {

ad::Parameter make_param(const std::string& name, Eigen::Index r, Eigen::Index c,
                         std::uint64_t seed) {
  ad::Parameter p;
  p.name = name;
  Rng rng = make_rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  p.value = ad::Matrix(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) p.value(i, j) = dist(rng);
  p.init_state();
  return p;
}

// checks d(loss)/d(params) for a loss built as scalar = build(g, params)
void check(const std::function<ad::NodeRef(ad::Graph&)>& build,
           std::vector<ad::Parameter*> params, double tol = 1e-7) {
  auto loss_fn = [&]() {
    ad::Graph g;
    return build(g)->value(0, 0);
  };
  auto analytic_fn = [&]() {
    ad::Graph g;
    ad::NodeRef loss = build(g);
    g.backward(loss);
    g.harvest_param_grads();
  };
  auto result = grad_check(loss_fn, analytic_fn, params);
  INFO(result.worst_entry);
  REQUIRE(result.max_rel_err < tol);
}

}  // namespace

TEST_CASE("values: basic op forward results") {
  ad::Graph g;
  ad::Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  REQUIRE(ad::matmul(g, g.constant(a), g.constant(b))->value(0, 0) == 19);
  REQUIRE(ad::matmul_nt(g, g.constant(a), g.constant(b))->value(0, 0) == 17);
  REQUIRE(ad::sum_all(g, g.constant(a))->value(0, 0) == 10);
  REQUIRE(ad::relu(g, g.scalar(-3.0))->value(0, 0) == 0.0);

  ad::NodeRef sm = ad::softmax_rows(g, g.constant(a));
  REQUIRE(sm->value.row(0).sum() == Catch::Approx(1.0).epsilon(1e-12));
  ad::NodeRef nrm = ad::l2_normalize_rows(g, g.constant(a));
  REQUIRE(nrm->value.row(1).norm() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradients: matmul chain with bias and gelu") {
  auto x = make_param("x", 3, 4, 1);
  auto w = make_param("w", 4, 5, 2);
  auto b = make_param("b", 1, 5, 3);
  auto r = make_param("r", 3, 5, 4);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r),
                       ad::gelu(g, ad::linear(g, g.param(x), g.param(w), g.param(b))));
      },
      {&x, &w, &b});
}

TEST_CASE("gradients: softmax, log_softmax, cross entropy") {
  auto x = make_param("x", 4, 6, 5);
  auto r = make_param("r", 4, 6, 6);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r), ad::softmax_rows(g, g.param(x)));
      },
      {&x});
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r), ad::log_softmax_rows(g, g.param(x)));
      },
      {&x});
  check(
      [&](ad::Graph& g) {
        return ad::cross_entropy_rows(g, g.param(x), {1, 0, 5, 2});
      },
      {&x});
}

TEST_CASE("gradients: layernorm with gain and bias") {
  auto x = make_param("x", 3, 8, 7);
  auto gm = make_param("g", 1, 8, 8);
  auto bt = make_param("b", 1, 8, 9);
  auto r = make_param("r", 3, 8, 10);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r),
                       ad::layernorm_rows(g, g.param(x), g.param(gm), g.param(bt)));
      },
      {&x, &gm, &bt}, 1e-6);
}

TEST_CASE("gradients: stacking, slicing, gather, repeat") {
  auto a = make_param("a", 2, 3, 11);
  auto b = make_param("b", 3, 3, 12);
  auto r = make_param("r", 5, 3, 13);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r), ad::vstack(g, {g.param(a), g.param(b)}));
      },
      {&a, &b});

  auto c = make_param("c", 2, 2, 14);
  auto r2 = make_param("r2", 2, 5, 15);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r2), ad::hstack(g, {g.param(a), g.param(c)}));
      },
      {&a, &c});

  auto table = make_param("table", 6, 4, 16);
  auto r3 = make_param("r3", 5, 4, 17);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r3), ad::gather_rows(g, g.param(table), {0, 3, 3, 5, 1}));
      },
      {&table});

  auto row = make_param("row", 1, 4, 18);
  auto r4 = make_param("r4", 3, 4, 19);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r4), ad::repeat_row(g, g.param(row), 3));
      },
      {&row});

  auto r5 = make_param("r5", 2, 2, 20);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r5), ad::slice_cols(g, ad::slice_rows(g, g.param(b), 1, 2), 1, 2));
      },
      {&b});
}

TEST_CASE("gradients: reductions and normalization") {
  auto a = make_param("a", 4, 3, 21);
  auto r = make_param("r", 1, 3, 22);
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r), ad::mean_rows(g, g.param(a)));
      },
      {&a});
  check(
      [&](ad::Graph& g) {
        return ad::dot(g, g.param(r),
                       ad::l2_normalize_rows(g, ad::mean_rows(g, g.param(a))));
      },
      {&a});
  check([&](ad::Graph& g) { return ad::norm(g, g.param(a)); }, {&a});
  auto b = make_param("b", 4, 3, 23);
  check([&](ad::Graph& g) { return ad::dot(g, g.param(a), g.param(b)); }, {&a, &b});
  check(
      [&](ad::Graph& g) {
        return ad::sum_all(g, ad::ew_div(g, g.param(a),
                                         ad::add_const(g, ad::ew_mul(g, g.param(b), g.param(b)), 1.0)));
      },
      {&a, &b});
}

TEST_CASE("gradients: scalar composition used by triplet losses") {
  auto a = make_param("a", 1, 4, 24);
  auto b = make_param("b", 1, 4, 25);
  auto c = make_param("c", 1, 4, 26);
  check(
      [&](ad::Graph& g) {
        ad::NodeRef f_ap = ad::norm(g, ad::sub(g, g.param(a), g.param(b)));
        ad::NodeRef f_an = ad::norm(g, ad::sub(g, g.param(a), g.param(c)));
        return ad::relu(g, ad::add_const(g, ad::sub(g, f_ap, f_an), 0.4));
      },
      {&a, &b, &c});
}

TEST_CASE("parameter node sharing accumulates gradients") {
  auto a = make_param("a", 2, 2, 27);
  ad::Graph g;
  ad::NodeRef n1 = g.param(a);
  ad::NodeRef n2 = g.param(a);
  REQUIRE(n1.get() == n2.get());
  ad::NodeRef loss = ad::sum_all(g, ad::add(g, n1, n2));
  g.backward(loss);
  a.grad.setZero();
  g.harvest_param_grads();
  REQUIRE(a.grad(0, 0) == Catch::Approx(2.0));
}

TEST_CASE("backward requires scalar root") {
  ad::Graph g;
  auto a = make_param("a", 2, 2, 28);
  ad::NodeRef n = g.param(a);
  REQUIRE_THROWS_AS(g.backward(n), NumericError);
}

TEST_CASE("dropout masks and scales, identity in eval") {
  auto a = make_param("a", 50, 20, 29);
  a.value.setConstant(1.0);
  ad::Graph g;
  Rng rng = make_rng(30);
  ad::NodeRef d = ad::dropout(g, g.param(a), 0.25, rng);
  double kept = 0, zeros = 0;
  for (Eigen::Index i = 0; i < d->value.size(); ++i) {
    const double v = *(d->value.data() + i);
    if (v == 0.0) ++zeros;
    else {
      REQUIRE(v == Catch::Approx(1.0 / 0.75));
      ++kept;
    }
  }
  REQUIRE(zeros / (kept + zeros) == Catch::Approx(0.25).margin(0.03));
  ad::NodeRef e = ad::dropout(g, g.param(a), 0.0, rng);
  REQUIRE(e->value == a.value);
}
