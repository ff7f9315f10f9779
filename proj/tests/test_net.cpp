#include <doctest.h>

#include <cmath>

#include "omni/net.hpp"
#include "omni/optim.hpp"
#include "oracles.hpp"

using namespace omni;

TEST_SUITE("net") {

TEST_CASE("dense layer computes W x + b per column") {
  Rng rng(1);
  DenseLayer layer(3, 2, rng, 0.5);
  Mat x(3, 4);
  x.setRandom();
  const Mat y = layer.forward(x);
  for (int b = 0; b < 4; ++b) {
    const Vec expect = layer.weight * x.col(b) + layer.bias;
    CHECK((y.col(b) - expect).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("dense layer backward produces exact parameter and input gradients") {
  Rng rng(2);
  DenseLayer layer(4, 3, rng, 0.6);
  Mat x(4, 5);
  x.setRandom();
  Mat fixed(3, 5);
  fixed.setRandom();

  // Scalar head: sum(fixed .* y). Input gradient against finite differences.
  auto f_input = [&](const Vec& v, Vec* grad) {
    Mat xx = Eigen::Map<const Mat>(v.data(), 4, 5);
    layer.zero_grad();
    const Mat y = layer.forward(xx);
    if (grad) {
      const Mat ig = layer.backward(fixed);
      *grad = Eigen::Map<const Vec>(ig.data(), ig.size());
    }
    return (fixed.array() * y.array()).sum();
  };
  const Vec x_flat = Eigen::Map<const Vec>(x.data(), x.size());
  CHECK(grad_check(f_input, x_flat, 1e-6).max_rel_err <= 1e-8);

  // Parameter gradients against finite differences.
  std::vector<ParamRef> refs;
  layer.collect_params("layer", refs);
  auto f_params = [&](const Vec& v, Vec* grad) {
    oracles::unpack_values(refs, v);
    layer.zero_grad();
    const Mat y = layer.forward(x);
    if (grad) {
      layer.backward(fixed);
      *grad = oracles::pack_grads(refs);
    }
    return (fixed.array() * y.array()).sum();
  };
  CHECK(grad_check(f_params, oracles::pack_values(refs), 1e-6).max_rel_err <= 1e-8);
}

TEST_CASE("backward before forward is rejected") {
  Rng rng(3);
  DenseLayer layer(2, 2, rng, 0.5);
  CHECK_THROWS_AS(layer.backward(Mat::Ones(2, 1)), std::logic_error);
  Mlp mlp({2, 3, 1}, Activation::leaky_relu, Activation::none, rng);
  CHECK_THROWS_AS(mlp.backward(Mat::Ones(1, 1)), std::logic_error);
  CHECK_THROWS_AS(mlp.activation(0), std::logic_error);
}

TEST_CASE("mlp gradients check out for every activation choice") {
  Rng rng(4);
  for (const Activation out_act :
       {Activation::none, Activation::tanh, Activation::relu, Activation::leaky_relu}) {
    Mlp mlp({3, 6, 4, 2}, Activation::leaky_relu, out_act, rng);
    Mat x(3, 3);
    x.setRandom();
    Mat fixed(2, 3);
    fixed.setRandom();
    std::vector<ParamRef> refs;
    mlp.collect_params("mlp", refs);
    auto f = [&](const Vec& v, Vec* grad) {
      oracles::unpack_values(refs, v);
      mlp.zero_grad();
      const Mat y = mlp.forward(x);
      if (grad) {
        mlp.backward(fixed);
        *grad = oracles::pack_grads(refs);
      }
      return (fixed.array() * y.array()).sum();
    };
    CHECK(grad_check(f, oracles::pack_values(refs), 1e-6).max_rel_err <= 1e-6);
  }
}

TEST_CASE("tap backward matches plain backward on the last layer") {
  Rng rng(5);
  Mlp mlp({3, 5, 2}, Activation::leaky_relu, Activation::none, rng);
  Mat x(3, 2);
  x.setRandom();
  Mat up(2, 2);
  up.setRandom();

  mlp.forward(x);
  mlp.zero_grad();
  const Mat a = mlp.backward(up);
  const Vec ga = oracles::pack_grads([&] {
    std::vector<ParamRef> r;
    mlp.collect_params("m", r);
    return r;
  }());

  mlp.forward(x);
  mlp.zero_grad();
  const Mat b = mlp.backward_from_taps({{1, up}});
  const Vec gb = oracles::pack_grads([&] {
    std::vector<ParamRef> r;
    mlp.collect_params("m", r);
    return r;
  }());

  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ga - gb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradients injected at intermediate taps reach the input correctly") {
  Rng rng(6);
  Mlp mlp({3, 5, 4, 2}, Activation::leaky_relu, Activation::tanh, rng);
  Mat x(3, 2);
  x.setRandom();

  // Objective: sum of layer-0 and layer-2 activations (weighted), exercising
  // multiple simultaneous taps.
  Mat w0(5, 2), w2(2, 2);
  w0.setRandom();
  w2.setRandom();
  auto f = [&](const Vec& v, Vec* grad) {
    Mat xx = Eigen::Map<const Mat>(v.data(), 3, 2);
    mlp.zero_grad();
    mlp.forward(xx);
    const double val = (w0.array() * mlp.activation(0).array()).sum() +
                       (w2.array() * mlp.activation(2).array()).sum();
    if (grad) {
      const Mat ig = mlp.backward_from_taps({{0, w0}, {2, w2}});
      *grad = Eigen::Map<const Vec>(ig.data(), ig.size());
    }
    return val;
  };
  const Vec x_flat = Eigen::Map<const Vec>(x.data(), x.size());
  CHECK(grad_check(f, x_flat, 1e-6).max_rel_err <= 1e-6);
}

TEST_CASE("class embedding lookup and gradient accumulation") {
  Rng rng(7);
  ClassEmbedding embed(4, 3, rng, 1.0);
  const std::vector<int> classes = {2, 0, 2};
  const Mat e = embed.forward(classes);
  CHECK(e.cols() == 3);
  CHECK((e.col(0) - embed.table.row(2).transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((e.col(1) - embed.table.row(0).transpose()).cwiseAbs().maxCoeff() == 0.0);

  Mat up(3, 3);
  up.setOnes();
  embed.zero_grad();
  embed.backward(classes, up);
  // Class 2 was used twice, class 0 once, the rest never.
  CHECK(embed.table_grad.row(2).isApproxToConstant(2.0));
  CHECK(embed.table_grad.row(0).isApproxToConstant(1.0));
  CHECK(embed.table_grad.row(1).isZero(0.0));
  CHECK(embed.table_grad.row(3).isZero(0.0));

  CHECK_THROWS_AS(embed.forward({4}), std::invalid_argument);
}

TEST_CASE("generator backward reaches z, the embedding, and every layer") {
  Rng rng(8);
  Generator g(3, 4, 2, {6}, 2, Activation::none, rng);
  const std::vector<int> classes = {1, 3};
  Mat z(3, 2);
  z.setRandom();
  Mat fixed(2, 2);
  fixed.setRandom();

  auto f_z = [&](const Vec& v, Vec* grad) {
    Mat zz = Eigen::Map<const Mat>(v.data(), 3, 2);
    g.zero_grad();
    const Mat y = g.forward(zz, classes);
    if (grad) {
      const Mat zg = g.backward(fixed);
      *grad = Eigen::Map<const Vec>(zg.data(), zg.size());
    }
    return (fixed.array() * y.array()).sum();
  };
  const Vec z_flat = Eigen::Map<const Vec>(z.data(), z.size());
  CHECK(grad_check(f_z, z_flat, 1e-6).max_rel_err <= 1e-6);

  auto refs = g.params();
  auto f_p = [&](const Vec& v, Vec* grad) {
    oracles::unpack_values(refs, v);
    g.zero_grad();
    const Mat y = g.forward(z, classes);
    if (grad) {
      g.backward(fixed);
      *grad = oracles::pack_grads(refs);
    }
    return (fixed.array() * y.array()).sum();
  };
  CHECK(grad_check(f_p, oracles::pack_values(refs), 1e-6).max_rel_err <= 1e-6);
}

TEST_CASE("projection head scores match the manual formula") {
  Rng rng(9);
  Discriminator d(3, {5, 4}, Discriminator::HeadKind::projection, 6, rng);
  Mat x(3, 2);
  x.setRandom();
  const std::vector<int> classes = {5, 0};
  const Vec scores = d.forward_projection(x, classes);

  const Mat feats = d.trunk.forward(x);
  for (int b = 0; b < 2; ++b) {
    const double expect = d.proj_embed.table.row(classes[static_cast<std::size_t>(b)])
                              .dot(feats.col(b).transpose()) +
                          (d.proj_f2.weight * feats.col(b))(0, 0) + d.proj_f2.bias[0];
    CHECK(scores[b] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("projection head gradients check out") {
  Rng rng(10);
  Discriminator d(3, {5}, Discriminator::HeadKind::projection, 4, rng);
  Mat x(3, 3);
  x.setRandom();
  const std::vector<int> classes = {0, 2, 2};
  Vec fixed(3);
  fixed.setRandom();

  auto refs = d.params();
  auto f = [&](const Vec& v, Vec* grad) {
    oracles::unpack_values(refs, v);
    d.zero_grad();
    const Vec s = d.forward_projection(x, classes);
    if (grad) {
      d.backward_projection(fixed);
      *grad = oracles::pack_grads(refs);
    }
    return fixed.dot(s);
  };
  CHECK(grad_check(f, oracles::pack_values(refs), 1e-6).max_rel_err <= 1e-6);

  auto f_x = [&](const Vec& v, Vec* grad) {
    Mat xx = Eigen::Map<const Mat>(v.data(), 3, 3);
    d.zero_grad();
    const Vec s = d.forward_projection(xx, classes);
    if (grad) {
      const Mat ig = d.backward_projection(fixed);
      *grad = Eigen::Map<const Vec>(ig.data(), ig.size());
    }
    return fixed.dot(s);
  };
  const Vec x_flat = Eigen::Map<const Vec>(x.data(), x.size());
  CHECK(grad_check(f_x, x_flat, 1e-6).max_rel_err <= 1e-6);
}

TEST_CASE("head mismatches are rejected") {
  Rng rng(11);
  Discriminator omni_d(3, {4}, Discriminator::HeadKind::omni, 5, rng);
  CHECK_THROWS_AS(omni_d.forward_projection(Mat::Ones(3, 1), {0}), std::logic_error);
  Discriminator proj_d(3, {4}, Discriminator::HeadKind::projection, 5, rng);
  CHECK_THROWS_AS(proj_d.forward(Mat::Ones(3, 1)), std::logic_error);
}

TEST_CASE("parameter names are unique and carry shapes") {
  Rng rng(12);
  Generator g(3, 4, 2, {6, 5}, 2, Activation::none, rng);
  Discriminator d(2, {6}, Discriminator::HeadKind::omni, 6, rng);
  auto refs = g.params();
  auto dr = d.params();
  refs.insert(refs.end(), dr.begin(), dr.end());
  std::vector<std::string> names;
  for (const auto& p : refs) {
    CHECK(p.size == p.rows * p.cols);
    CHECK(p.size > 0);
    names.push_back(p.name);
  }
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("tensor round trip preserves layout") {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Tensor t = Tensor::from_matrix(m);
  CHECK(t.shape == std::vector<int>{2, 3});
  // Row-major storage.
  CHECK(t.data == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK((t.to_matrix() - m).cwiseAbs().maxCoeff() == 0.0);

  Vec v(3);
  v << 7, 8, 9;
  const Tensor tv = Tensor::from_vector(v);
  CHECK(tv.shape == std::vector<int>{3});
  CHECK((tv.to_vector() - v).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(tv.to_matrix(), std::invalid_argument);
}

}  // TEST_SUITE
