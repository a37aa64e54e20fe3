#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "splitsc/graph.hpp"
#include "testutil.hpp"

using namespace splitsc;
using ad::Graph;
using ad::Ref;
using testutil::check_param_gradients;
using testutil::random_mat;
using testutil::rel_err;

namespace {

Param make_param(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Param p;
  p.value = random_mat(rng, r, c, lo, hi);
  p.zero_grad();
  return p;
}

}  // namespace

TEST_CASE("arithmetic ops match finite differences") {
  Rng rng(42);
  Param a = make_param(rng, 3, 4);
  Param b = make_param(rng, 3, 4);
  Param w = make_param(rng, 4, 2);
  Param row = make_param(rng, 1, 4);

  check_param_gradients({&a, &b}, [&](Graph& g) {
    return g.mean_all(g.mul(g.add(g.param(a), g.param(b)), g.sub(g.param(a), g.param(b))));
  });
  check_param_gradients({&a, &w}, [&](Graph& g) {
    return g.sum_all(g.matmul(g.param(a), g.param(w)));
  });
  check_param_gradients({&a}, [&](Graph& g) {
    return g.mean_all(g.add_scalar(g.scale(g.param(a), -2.5), 0.75));
  });
  check_param_gradients({&a, &row}, [&](Graph& g) {
    return g.mean_all(g.mul_row(g.add_row(g.param(a), g.param(row)), g.param(row)));
  });
  check_param_gradients({&a}, [&](Graph& g) {
    return g.sum_all(g.slice_cols(g.param(a), 1, 2));
  });
}

TEST_CASE("matmul forward matches a triple-loop oracle") {
  Rng rng(7);
  Mat a = random_mat(rng, 5, 3), b = random_mat(rng, 3, 4);
  Graph g;
  Mat got = g.value(g.matmul(g.input(a), g.input(b)));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += a(i, k) * b(k, j);
      CHECK(rel_err(got(i, j), acc) < 1e-12);
    }
}

TEST_CASE("nonlinearities match finite differences") {
  Rng rng(43);
  Param a = make_param(rng, 4, 3);
  // keep relu inputs away from the kink
  for (Eigen::Index i = 0; i < a.value.size(); ++i)
    if (std::abs(a.value(i)) < 0.05) a.value(i) = 0.2;

  check_param_gradients({&a}, [&](Graph& g) { return g.mean_all(g.sigmoid(g.param(a))); });
  check_param_gradients({&a}, [&](Graph& g) { return g.mean_all(g.relu(g.param(a))); });
  check_param_gradients({&a}, [&](Graph& g) { return g.mean_all(g.gelu(g.param(a))); });

  Graph g;
  Mat s = g.value(g.sigmoid(g.input(a.value)));
  for (Eigen::Index i = 0; i < s.size(); ++i)
    CHECK(rel_err(s(i), 1.0 / (1.0 + std::exp(-a.value(i)))) < 1e-12);
}

TEST_CASE("reductions and mse") {
  Rng rng(44);
  Param a = make_param(rng, 3, 5);
  Mat target = random_mat(rng, 3, 5);

  Graph g;
  CHECK(rel_err(g.value(g.sum_all(g.input(a.value)))(0, 0), a.value.sum()) < 1e-12);
  CHECK(rel_err(g.value(g.mean_all(g.input(a.value)))(0, 0), a.value.mean()) < 1e-12);
  double mse = (a.value - target).array().square().mean();
  CHECK(rel_err(g.value(g.mean_sq_diff(g.input(a.value), target))(0, 0), mse) < 1e-12);

  check_param_gradients({&a}, [&](Graph& g2) {
    return g2.mean_sq_diff(g2.param(a), target);
  });
}

TEST_CASE("shape movement ops") {
  Rng rng(45);
  Param a = make_param(rng, 2, 6);

  SUBCASE("rows_from_chunks and inverse round-trip") {
    Graph g;
    Ref x = g.param(a);
    Ref tok = g.rows_from_chunks(x, 3);  // 2x6 -> 4x3
    CHECK(g.value(tok).rows() == 4);
    CHECK(g.value(tok).cols() == 3);
    CHECK(g.value(tok)(1, 0) == a.value(0, 3));
    Ref back = g.chunks_from_rows(tok, 2);  // 4x3 -> 2x6
    CHECK((g.value(back) - a.value).cwiseAbs().maxCoeff() == 0.0);
    check_param_gradients({&a}, [&](Graph& g2) {
      return g2.mean_all(g2.sigmoid(g2.rows_from_chunks(g2.param(a), 2)));
    });
  }

  SUBCASE("gather_rows permutes and backpropagates") {
    std::vector<int> perm{1, 0, 1};  // duplication allowed
    Graph g;
    Mat got = g.value(g.gather_rows(g.input(a.value), perm));
    CHECK(got.rows() == 3);
    CHECK((got.row(0) - a.value.row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((got.row(2) - a.value.row(1)).cwiseAbs().maxCoeff() == 0.0);
    check_param_gradients({&a}, [&](Graph& g2) {
      return g2.mean_all(g2.sigmoid(g2.gather_rows(g2.param(a), perm)));
    });
  }

  SUBCASE("tile_rows and block_mean_rows") {
    Graph g;
    Mat tiled = g.value(g.tile_rows(g.input(a.value), 3));
    CHECK(tiled.rows() == 6);
    CHECK((tiled.row(4) - a.value.row(0)).cwiseAbs().maxCoeff() == 0.0);
    Mat pooled = g.value(g.block_mean_rows(g.input(a.value), 2));
    CHECK(pooled.rows() == 1);
    CHECK(rel_err(pooled(0, 0), 0.5 * (a.value(0, 0) + a.value(1, 0))) < 1e-12);
    check_param_gradients({&a}, [&](Graph& g2) {
      return g2.mean_all(g2.sigmoid(g2.tile_rows(g2.param(a), 2)));
    });
    check_param_gradients({&a}, [&](Graph& g2) {
      return g2.mean_all(g2.sigmoid(g2.block_mean_rows(g2.param(a), 2)));
    });
  }
}

TEST_CASE("row power normalization") {
  Rng rng(46);
  Param a = make_param(rng, 3, 8);  // 4 complex symbols per row

  Graph g;
  Mat y = g.value(g.row_power_normalize(g.param(a), 4));
  for (int r = 0; r < 3; ++r) {
    double power = y.row(r).squaredNorm() / 4.0;
    CHECK(rel_err(power, 1.0) < 1e-9);
  }
  check_param_gradients({&a}, [&](Graph& g2) {
    return g2.mean_all(g2.sigmoid(g2.row_power_normalize(g2.param(a), 4)));
  });
}

TEST_CASE("layer norm") {
  Rng rng(47);
  Param x = make_param(rng, 4, 6);
  Param gamma = make_param(rng, 1, 6, 0.5, 1.5);
  Param beta = make_param(rng, 1, 6, -0.3, 0.3);

  Graph g;
  Param unit_gamma, zero_beta;
  unit_gamma.value = Mat::Ones(1, 6);
  zero_beta.value = Mat::Zero(1, 6);
  Mat y = g.value(g.layer_norm(g.param(x), g.param(unit_gamma), g.param(zero_beta)));
  for (int r = 0; r < 4; ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-9);
    double var = (y.row(r).array() - y.row(r).mean()).square().mean();
    CHECK(rel_err(var, 1.0) < 1e-3);  // eps shifts it slightly below 1
  }
  check_param_gradients({&x, &gamma, &beta}, [&](Graph& g2) {
    return g2.mean_all(g2.sigmoid(
        g2.layer_norm(g2.param(x), g2.param(gamma), g2.param(beta))));
  });
}

TEST_CASE("attention forward matches a per-block softmax oracle") {
  Rng rng(48);
  int blocks = 2, T = 3, D = 4, heads = 2;
  Mat q = random_mat(rng, blocks * T, D), k = random_mat(rng, blocks * T, D),
      v = random_mat(rng, blocks * T, D);

  Graph g;
  Mat got = g.value(g.attention(g.input(q), g.input(k), g.input(v), heads, T));
  REQUIRE(got.rows() == blocks * T);
  REQUIRE(got.cols() == D);

  int hd = D / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int b = 0; b < blocks; ++b)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < T; ++i) {
        // softmax over scores within the block, one head's column range
        std::vector<double> w(static_cast<std::size_t>(T));
        double mx = -1e300;
        for (int j = 0; j < T; ++j) {
          double s = 0;
          for (int d = 0; d < hd; ++d)
            s += q(b * T + i, h * hd + d) * k(b * T + j, h * hd + d);
          w[static_cast<std::size_t>(j)] = s * scale;
          mx = std::max(mx, w[static_cast<std::size_t>(j)]);
        }
        double z = 0;
        for (double& s : w) {
          s = std::exp(s - mx);
          z += s;
        }
        for (int d = 0; d < hd; ++d) {
          double acc = 0;
          for (int j = 0; j < T; ++j)
            acc += (w[static_cast<std::size_t>(j)] / z) * v(b * T + j, h * hd + d);
          CHECK(rel_err(got(b * T + i, h * hd + d), acc) < 1e-10);
        }
      }
}

TEST_CASE("attention gradients") {
  Rng rng(49);
  Param q = make_param(rng, 4, 4), k = make_param(rng, 4, 4), v = make_param(rng, 4, 4);
  check_param_gradients({&q, &k, &v}, [&](Graph& g) {
    return g.mean_all(
        g.sigmoid(g.attention(g.param(q), g.param(k), g.param(v), 2, 2)));
  });
}

TEST_CASE("straight-through estimators") {
  Rng rng(50);
  Param q = make_param(rng, 2, 5, 0.05, 0.95);
  Mat weights = random_mat(rng, 2, 5);

  SUBCASE("round forward thresholds at 0.5, ties to 1") {
    Mat in(1, 4);
    in << 0.2, 0.5, 0.7, 0.4999;
    Graph g;
    Mat out = g.value(g.ste_round(g.input(in)));
    CHECK(out(0, 0) == 0.0);
    CHECK(out(0, 1) == 1.0);  // tie
    CHECK(out(0, 2) == 1.0);
    CHECK(out(0, 3) == 0.0);
  }

  SUBCASE("bernoulli backward equals identity backward, exactly") {
    // linear readout: gradient must match the no-sampling path bit for bit
    q.zero_grad();
    Graph g;
    Rng sample_rng(99);
    Ref loss = g.sum_all(g.mul(g.ste_bernoulli(g.param(q), sample_rng), g.input(weights)));
    g.backward(loss);
    Mat grad_sampled = q.grad;

    q.zero_grad();
    Graph g2;
    Ref loss2 = g2.sum_all(g2.mul(g2.param(q), g2.input(weights)));
    g2.backward(loss2);
    CHECK((grad_sampled - q.grad).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("round backward is identity too") {
    q.zero_grad();
    Graph g;
    g.backward(g.sum_all(g.mul(g.ste_round(g.param(q)), g.input(weights))));
    CHECK((q.grad - weights).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("bernoulli samples have the right mean") {
    Mat probs = Mat::Constant(1, 1, 0.3);
    Param pp;
    pp.value = probs;
    Rng sample_rng(123);
    int n = 20000, ones = 0;
    for (int i = 0; i < n; ++i) {
      Graph g;
      if (g.value(g.ste_bernoulli(g.param(pp), sample_rng))(0, 0) > 0.5) ++ones;
    }
    double phat = static_cast<double>(ones) / n;
    CHECK(std::abs(phat - 0.3) < 3.0 * std::sqrt(0.3 * 0.7 / n));
  }
}

TEST_CASE("backward accumulates across reused nodes") {
  // f(x) = sum(x*x + x) uses x three times; d/dx = 2x + 1
  Param x;
  x.value = Mat::Constant(2, 2, 0.7);
  x.zero_grad();
  Graph g;
  Ref xr = g.param(x);
  g.backward(g.sum_all(g.add(g.mul(xr, xr), xr)));
  CHECK((x.grad - Mat::Constant(2, 2, 2.4)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-trainable params receive no gradient") {
  Param x;
  x.value = Mat::Constant(1, 3, 0.5);
  x.trainable = false;
  x.grad = Mat::Zero(1, 3);
  Graph g;
  g.backward(g.sum_all(g.param(x)));
  CHECK(x.grad.cwiseAbs().maxCoeff() == 0.0);
}
