// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"
#include "scratch.hpp"
#include "trisim/errors.hpp"
#include "trisim/random.hpp"
#include "trisim/toymodel.hpp"

using namespace trisim;
using doctest::Approx;

namespace {

Checkpoint zeroed(Checkpoint c) {
  for (auto& l : c.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  return c;
}

bool same_params(const Checkpoint& a, const Checkpoint& b) {
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight != b.layers[i].weight || a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generator follows the standard reference sequence") {
  // The C++ standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next();
  CHECK(v == 9981545732273789042ULL);

  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("blobs") {
  const Dataset a = make_blobs(10, 2, 3, 0.5, 1);
  const Dataset b = make_blobs(10, 2, 3, 0.5, 1);
  CHECK(a.X == b.X);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 30);
  CHECK(a.n_classes == 3);
  CHECK(make_blobs(10, 2, 3, 0.5, 2).X != a.X);
  for (int c = 0; c < 3; ++c) CHECK(std::count(a.labels.begin(), a.labels.end(), c) == 10);

  const Dataset one = make_blobs(5, 3, 1, 0.2, 4);
  CHECK(std::all_of(one.labels.begin(), one.labels.end(), [](int l) { return l == 0; }));
  CHECK_THROWS_AS(make_blobs(0, 2, 3, 0.5, 1), ValidationError);
  CHECK_THROWS_AS(make_blobs(5, 2, 3, 0.0, 1), ValidationError);
}

TEST_CASE("datasets round trip through CSV and arrays") {
  ScratchDir dir;
  const Dataset d = make_blobs(4, 3, 2, 0.5, 9);
  save_dataset_csv(d, dir / "d.csv");
  CHECK(slurp(dir / "d.csv").rfind("x0,x1,x2,label\n", 0) == 0);
  const Dataset c = load_dataset(dir / "d.csv");
  CHECK(c.X == d.X);  // shortest round-trip formatting
  CHECK(c.labels == d.labels);

  save_dataset_dir(d, dir / "dd");
  const Dataset e = load_dataset(dir / "dd");
  CHECK(e.X == d.X);
  CHECK(e.labels == d.labels);
  CHECK(e.n_classes == 2);
  CHECK(e.id == d.id);

  spit(dir / "bad.csv", "x0,label\n1.0,-1\n");
  CHECK_THROWS_AS(load_dataset(dir / "bad.csv"), ValidationError);
  spit(dir / "bad2.csv", "x0,label\n1.0\n");
  CHECK_THROWS_AS(load_dataset(dir / "bad2.csv"), FormatError);
}

TEST_CASE("initialization") {
  const ArchSpec arch = parse_arch("100:20:3");
  const Checkpoint a = init_mlp(arch, 5), b = init_mlp(arch, 5), c = init_mlp(arch, 6);
  CHECK(same_params(a, b));
  CHECK_FALSE(same_params(a, c));
  CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= std::sqrt(0.06));
  CHECK(a.layers[1].weight.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 20.0));
  CHECK(a.layers[0].bias.isZero(0.0));
  CHECK(a.layers[0].weight.rows() == 20);
  CHECK(a.layers[0].weight.cols() == 100);
  CHECK(a.provenance["generator"] == "mt19937_64");
  CHECK(a.provenance["seed"] == 5);
}

TEST_CASE("forward pass") {
  oracle::Lcg rng(2);
  const Eigen::MatrixXd x = rng.matrix(7, 4);

  const Checkpoint z = zeroed(init_mlp(parse_arch("4:6:3"), 1));
  const ForwardResult fz = forward(z, x);
  CHECK(fz.logits.isZero(0.0));
  CHECK(softmax(fz.logits).isApproxToConstant(1.0 / 3.0, 1e-15));

  const Checkpoint lin = init_mlp(parse_arch("4:3"), 3);
  Checkpoint lb = lin;
  lb.layers[0].bias << 0.5, -1.0, 2.0;
  Eigen::MatrixXd expected(7, 3);
  for (int i = 0; i < 7; ++i) {
    for (int k = 0; k < 3; ++k) {
      double s = lb.layers[0].bias(k);
      for (int j = 0; j < 4; ++j) s += x(i, j) * lb.layers[0].weight(k, j);
      expected(i, k) = s;
    }
  }
  CHECK(logits(lb, x).isApprox(expected, 1e-14));

  const Checkpoint deep = init_mlp(parse_arch("4:5:6:3"), 4);
  const ForwardResult f = forward(deep, x, "probe");
  CHECK(f.activations.layer_names() == std::vector<std::string>{"h1", "h2", "logits"});
  CHECK(f.activations.dataset_id == "probe");
  CHECK(f.activations.model_id == deep.model_id);
  const Eigen::MatrixXd pre = (x * deep.layers[0].weight.transpose()).rowwise() + deep.layers[0].bias.transpose();
  for (Eigen::Index i = 0; i < pre.rows(); ++i) {
    for (Eigen::Index j = 0; j < pre.cols(); ++j) {
      if (pre(i, j) < 0) CHECK(f.activations.layer("h1")(i, j) == 0.0);
      else CHECK(f.activations.layer("h1")(i, j) == Approx(pre(i, j)).epsilon(1e-14));
    }
  }
  CHECK(forward(deep, x).logits == f.logits);
  CHECK_THROWS_AS(forward(deep, rng.matrix(3, 5)), ValidationError);
}

TEST_CASE("softmax is stable for large logits") {
  Eigen::MatrixXd l(2, 3);
  l << 1e4, -1e4, 0, -1e4, -1e4 + 1, -1e4;
  const Eigen::MatrixXd p = softmax(l);
  CHECK(p.allFinite());
  CHECK(p.rowwise().sum().isApproxToConstant(1.0, 1e-7));
  CHECK(p(0, 0) == 1.0);
}

TEST_CASE("accuracy and argmax") {
  CHECK(argmax(Eigen::RowVector3d(1, 3, 3)) == 1);
  CHECK(argmax(Eigen::RowVector3d(2, 2, 2)) == 0);

  const Checkpoint c = init_mlp(parse_arch("3:4"), 8);
  oracle::Lcg rng(3);
  Dataset d{rng.matrix(12, 3), {}, 4, "d"};
  const Eigen::MatrixXd l = logits(c, d.X);
  for (int i = 0; i < 12; ++i) d.labels.push_back(argmax(l.row(i)));
  CHECK(accuracy(c, d) == 1.0);
  for (auto& y : d.labels) y = (y + 1) % 4;
  CHECK(accuracy(c, d) == 0.0);
}

TEST_CASE("untrained models are at chance on balanced blobs") {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    total += accuracy(init_mlp(parse_arch("6:16:4"), 100 + s), make_blobs(100, 6, 4, 0.5, s));
  }
  CHECK(total / 20.0 == Approx(0.25).epsilon(0.4));  // 0.25 +- 0.1
}

TEST_CASE("analytic gradients match finite differences") {
  oracle::Lcg rng(4);
  for (int net = 0; net < 5; ++net) {
    // Random biases keep pre-activations off the ReLU kink, where the
    // derivative is one-sided and finite differences are meaningless.
    Checkpoint c = init_mlp(parse_arch("3:5:4:3"), static_cast<std::uint64_t>(net));
    for (auto& l : c.layers) {
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.1 * rng.normal();
    }
    const Dataset d = make_blobs(7, 3, 3, 0.8, static_cast<std::uint64_t>(net));
    const LossAndGradient lg = loss_and_gradient(c, d.X, d.labels);
    CHECK(lg.loss == Approx(mean_cross_entropy(c, d)).epsilon(1e-12));
    for (std::size_t l = 0; l < c.layers.size(); ++l) {
      for (int k = 0; k < 6; ++k) {
        const ParamCoord w{l, false, rng.below(static_cast<int>(c.layers[l].weight.rows())),
                           rng.below(static_cast<int>(c.layers[l].weight.cols()))};
        const double num = numerical_gradient(c, d, w, 1e-5);
        const double ana = lg.grad.weight[l](w.row, w.col);
        CHECK(std::abs(num - ana) <= 1e-4 * std::max({std::abs(num), std::abs(ana), 1e-6}));
        const ParamCoord b{l, true, rng.below(static_cast<int>(c.layers[l].bias.size())), 0};
        const double nb = numerical_gradient(c, d, b, 1e-5);
        const double ab = lg.grad.bias[l](b.row);
        CHECK(std::abs(nb - ab) <= 1e-4 * std::max({std::abs(nb), std::abs(ab), 1e-6}));
      }
    }
  }
}

TEST_CASE("zero network bias gradient is the softmax residual mean") {
  const Checkpoint z = zeroed(init_mlp(parse_arch("2:3"), 1));
  Dataset d{Eigen::MatrixXd(4, 2), {0, 0, 1, 2}, 3, "d"};
  d.X << 1, 0, -1, 0, 0, 1, 0, -1;
  const LossAndGradient lg = loss_and_gradient(z, d.X, d.labels);
  // mean(p - onehot) with p uniform.
  CHECK(lg.grad.bias[0](0) == Approx(1.0 / 3 - 0.5).epsilon(1e-14));
  CHECK(lg.grad.bias[0](1) == Approx(1.0 / 3 - 0.25).epsilon(1e-14));
  CHECK(lg.grad.bias[0](2) == Approx(1.0 / 3 - 0.25).epsilon(1e-14));
  CHECK(lg.loss == Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("dead units have zero gradient") {
  Checkpoint c = init_mlp(parse_arch("2:3:2"), 2);
  c.layers[0].weight.row(1).setZero();
  c.layers[0].bias(1) = -5.0;  // unit 1 never fires
  const Dataset d = make_blobs(5, 2, 2, 0.5, 3);
  const LossAndGradient lg = loss_and_gradient(c, d.X, d.labels);
  CHECK(lg.grad.bias[0](1) == 0.0);
  CHECK(lg.grad.weight[0].row(1).isZero(0.0));
  CHECK(std::abs(numerical_gradient(c, d, {0, true, 1, 0}, 1e-5)) <= 1e-8);
  CHECK(std::abs(numerical_gradient(c, d, {0, false, 1, 0}, 1e-5)) <= 1e-8);
}

TEST_CASE("training") {
  const Dataset d = make_blobs(200, 8, 5, 0.3, 7);
  const Checkpoint init = init_mlp(parse_arch("8:32:5"), 1);
  TrainConfig cfg;
  cfg.seed = 3;
  std::vector<EpochStats> log;
  const Checkpoint t = train_sgd(init, d, cfg, &log);
  const double acc = accuracy(t, d);
  MESSAGE("blobs(200, 8, 5, 0.3, 7) train accuracy: " << acc);
  CHECK(acc >= 0.95);
  REQUIRE(log.size() == 50);
  CHECK(log.back().accuracy == acc);
  CHECK(log.back().loss < log.front().loss);
  CHECK(same_params(init, init_mlp(parse_arch("8:32:5"), 1)));  // input untouched
  CHECK(t.provenance.contains("training"));
  CHECK(same_params(t, train_sgd(init, d, cfg)));

  TrainConfig tiny = cfg;
  tiny.learning_rate = 1e-12;
  tiny.epochs = 1;
  const Checkpoint still = train_sgd(init, d, tiny);
  for (std::size_t l = 0; l < init.layers.size(); ++l) {
    CHECK((still.layers[l].weight - init.layers[l].weight).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TrainConfig wild = cfg;
  wild.learning_rate = 1e6;
  wild.momentum = 0.99;
  CHECK_THROWS_AS(train_sgd(init, d, wild), NumericError);

  TrainConfig bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
}
