#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gradcheck.hpp"
#include "modelab/losses.hpp"
#include "modelab/models.hpp"
#include "modelab/rng.hpp"

using namespace modelab;
using modelab::testing::check_gradients;

TEST_CASE("decompose basics") {
  vec e(2);
  e << 3.0, 4.0;
  auto dec = decompose(Tensor::from_vec(e));
  CHECK(dec.r.item() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(dec.theta.value()[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(dec.theta.value()[1] == doctest::Approx(0.8).epsilon(1e-12));

  vec unit(3);
  unit << 0.0, 1.0, 0.0;
  auto u = decompose(Tensor::from_vec(unit));
  CHECK(u.r.item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((u.theta.value() - unit).norm() == doctest::Approx(0.0).epsilon(1e-12));

  vec tiny(2);
  tiny << 1e-12, 0.0;
  CHECK_THROWS_AS(decompose(Tensor::from_vec(tiny)), NearZeroEmbedding);
}

TEST_CASE("decompose round trip and unit norm on random embeddings") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    vec e = rng.normal_vec(4);
    if (e.norm() <= 1e-6) continue;
    auto dec = decompose(Tensor::from_vec(e));
    CHECK(std::abs(dec.theta.value().norm() - 1.0) <= 1e-9);
    CHECK(dec.r.item() >= 0.0);
    const vec rebuilt = dec.r.item() * dec.theta.value();
    CHECK((rebuilt - e).norm() <= 1e-9);
  }
}

TEST_CASE("decompose is differentiable") {
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    vec e = rng.normal_vec(3);
    if (e.norm() < 0.3) continue;
    Tensor p = Tensor::param(e);
    auto radial = check_gradients([&]() { return decompose(p).r; }, {p});
    CHECK_MESSAGE(radial.ok, radial.detail);
    auto angular = check_gradients([&]() { return sum(square(decompose(p).theta)); }, {p});
    CHECK_MESSAGE(angular.ok, angular.detail);
  }

  mat batch(3, 2);
  batch << 1.0, 2.0, -0.5, 0.7, 3.0, -1.0;
  Tensor b = Tensor::param(batch);
  auto rows = check_gradients(
      [&]() {
        auto dec = decompose_rows(b);
        return add(sum(dec.r), sum(square(dec.theta)));
      },
      {b});
  CHECK_MESSAGE(rows.ok, rows.detail);
}

TEST_CASE("one-hot selection") {
  DiscriminatorPool pool = make_pool(4, {1, 8, 1}, 99, InitScheme::uniform_fan_in);

  OneHotLabel third;
  third.values = vec::Zero(4);
  third.values[2] = 1.0;
  CHECK(select(pool, third) == 2);

  CHECK(select(pool, OneHotLabel::at(0, 4)) == 0);

  OneHotLabel split;
  split.values = vec::Zero(4);
  split.values[0] = 0.5;
  split.values[1] = 0.5;
  CHECK_THROWS_AS(select(pool, split), InvalidLabel);

  CHECK_THROWS_AS(select(pool, OneHotLabel::at(1, 3)), InvalidLabel);
}

TEST_CASE("pool members share extents and count matches categories") {
  DiscriminatorPool pool = make_pool(4, {1, 32, 32, 1}, 7, InitScheme::normal_002);
  CHECK(pool.size() == 4);
  for (const Mlp& member : pool.members) {
    CHECK(member.layer_dims == pool.members[0].layer_dims);
  }
  // Members start from distinct draws.
  CHECK((pool.members[0].flat_params() - pool.members[1].flat_params()).norm() > 0.0);
}

TEST_CASE("generator forward") {
  ConditionalGenerator g;
  g.n_categories = 4;
  g.sample_dim = 2;
  g.net = make_mlp({6, 16, 16, 2}, Activation::leaky_relu, Activation::identity);
  init_params(g.net, 21, InitScheme::uniform_fan_in);

  SUBCASE("zero final layer maps everything to the zero vector") {
    g.net.weights.back().value().setZero();
    g.net.biases.back().value().setZero();
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
      Tensor out = g.generate(Tensor::from_vec(rng.normal_vec(2)), OneHotLabel::at(i % 4, 4));
      CHECK(out.value().norm() == 0.0);
    }
  }
  SUBCASE("deterministic across freshly built models") {
    ConditionalGenerator g2;
    g2.n_categories = 4;
    g2.sample_dim = 2;
    g2.net = make_mlp({6, 16, 16, 2}, Activation::leaky_relu, Activation::identity);
    init_params(g2.net, 21, InitScheme::uniform_fan_in);
    vec x(2);
    x << 0.3, -1.2;
    for (int c = 0; c < 4; ++c) {
      const vec a = g.generate(Tensor::from_vec(x), OneHotLabel::at(c, 4)).value();
      const vec b = g2.generate(Tensor::from_vec(x), OneHotLabel::at(c, 4)).value();
      CHECK((a - b).norm() == 0.0);
      CHECK(a.size() == 2);  // output dimension equals sample dimension
    }
  }
  SUBCASE("batch and single paths agree") {
    mat xs(3, 2);
    xs << 0.1, 0.2, -0.4, 0.9, 2.0, -1.0;
    Tensor batch_out = g.generate_rows(Tensor::from_mat(xs), 1);
    for (Index i = 0; i < 3; ++i) {
      const vec single =
          g.generate(Tensor::from_vec(xs.row(i).transpose()), OneHotLabel::at(1, 4)).value();
      CHECK((batch_out.as_matrix().row(i).transpose() - single).norm() <= 1e-12);
    }
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(g.generate(Tensor::from_vec(vec::Zero(3)), OneHotLabel::at(0, 4)),
                    ShapeMismatch);
    CHECK_THROWS_AS(g.generate(Tensor::from_vec(vec::Zero(2)), OneHotLabel::at(0, 3)),
                    InvalidLabel);
  }
}

TEST_CASE("parameter initialization schemes") {
  Mlp a = make_mlp({100, 500, 10}, Activation::relu, Activation::identity);
  Mlp b = make_mlp({100, 500, 10}, Activation::relu, Activation::identity);

  SUBCASE("same seed gives identical parameters") {
    init_params(a, 1234, InitScheme::normal_002);
    init_params(b, 1234, InitScheme::normal_002);
    CHECK((a.flat_params() - b.flat_params()).norm() == 0.0);
  }
  SUBCASE("normal scheme has the right spread") {
    init_params(a, 77, InitScheme::normal_002);
    const vec w = a.weights[0].value();  // 50000 draws
    REQUIRE(w.size() >= 50000);
    const real std_dev = std::sqrt((w.array() - w.mean()).square().sum() / (w.size() - 1));
    CHECK(std_dev == doctest::Approx(0.02).epsilon(0.05));
    CHECK(a.biases[0].value().norm() == 0.0);
  }
  SUBCASE("uniform fan-in bounds hold for every entry") {
    init_params(a, 31, InitScheme::uniform_fan_in);
    for (std::size_t layer = 0; layer < a.weights.size(); ++layer) {
      const real bound = 1.0 / std::sqrt(static_cast<real>(a.layer_dims[layer]));
      CHECK(a.weights[layer].value().cwiseAbs().maxCoeff() <= bound);
      CHECK(a.biases[layer].value().cwiseAbs().maxCoeff() <= bound);
    }
  }
}

TEST_CASE("parameter count identity") {
  Mlp m = make_mlp({3, 7, 5, 2}, Activation::tanh, Activation::identity);
  CHECK(m.param_count() == 3 * 7 + 7 + 7 * 5 + 5 + 5 * 2 + 2);
  CHECK(m.flat_params().size() == m.param_count());
}

TEST_CASE("checkpoint round trip is bit exact") {
  const std::string path = "test_models_ckpt.mlab";
  Mlp m = make_mlp({2, 8, 3}, Activation::leaky_relu, Activation::identity);
  init_params(m, 5150, InitScheme::normal_002);
  save_checkpoint(path, m);

  Mlp loaded = make_mlp({2, 8, 3}, Activation::leaky_relu, Activation::identity);
  load_checkpoint(path, loaded);
  const vec before = m.flat_params();
  const vec after = loaded.flat_params();
  REQUIRE(before.size() == after.size());
  for (Index i = 0; i < before.size(); ++i) {
    CHECK(std::memcmp(&before[i], &after[i], sizeof(real)) == 0);
  }

  SUBCASE("dim mismatch is rejected") {
    Mlp other = make_mlp({2, 9, 3}, Activation::leaky_relu, Activation::identity);
    CHECK_THROWS_AS(load_checkpoint(path, other), CheckpointFormatError);
  }
  SUBCASE("bad magic is rejected") {
    const std::string bad = "test_models_bad.mlab";
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE" << std::string(64, '\0');
    os.close();
    CHECK_THROWS_AS(read_checkpoint(bad), CheckpointFormatError);
    std::remove(bad.c_str());
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_checkpoint("does_not_exist.mlab"), MissingCheckpoint);
  }
  std::remove(path.c_str());
}

TEST_CASE("selection isolation under a gradient step") {
  DiscriminatorPool pool = make_pool(4, {1, 16, 1}, 404, InitScheme::uniform_fan_in);
  const int target = 2;
  std::vector<vec> before;
  for (const Mlp& member : pool.members) before.push_back(member.flat_params());

  // Scores must come from the member the label picks.
  const OneHotLabel label = OneHotLabel::at(target, 4);
  const int chosen = select(pool, label);
  CHECK(chosen == target);

  Tensor r_real = Tensor::from_mat(mat::Constant(4, 1, 1.8));
  Tensor r_fake = Tensor::from_mat(mat::Constant(4, 1, 0.4));
  {
    Tape tape;
    TapeScope scope(tape);
    Mlp& member = pool.members[chosen];
    auto obj = feature_adversarial_loss(member.forward(r_real), member.forward(r_fake),
                                        GeneratorObjective::nonsaturating);
    backward(scale(obj.discriminator, -1.0));
    for (Tensor p : member.params()) p.value() -= 0.01 * p.grad();
  }

  for (int i = 0; i < pool.size(); ++i) {
    const vec now = pool.members[i].flat_params();
    if (i == target) {
      CHECK((now - before[i]).norm() > 0.0);
    } else {
      for (Index j = 0; j < now.size(); ++j) {
        CHECK(std::memcmp(&now[j], &before[i][j], sizeof(real)) == 0);
      }
    }
  }
}

TEST_CASE("selected member's scores separate from other members") {
  DiscriminatorPool pool = make_pool(3, {1, 4, 1}, 1, InitScheme::uniform_fan_in);
  // Pin each member to a distinct constant output via its final bias.
  for (int i = 0; i < 3; ++i) {
    pool.members[i].weights.back().value().setZero();
    pool.members[i].biases.back().value()[0] = static_cast<real>(i) - 1.0;  // -1, 0, 1
  }
  Tensor x = Tensor::from_mat(mat::Constant(1, 1, 2.0));
  for (int i = 0; i < 3; ++i) {
    const int chosen = select(pool, OneHotLabel::at(i, 3));
    const real score = pool.members[chosen].forward(x).value()[0];
    const real expected = 1.0 / (1.0 + std::exp(-(static_cast<real>(i) - 1.0)));
    CHECK(score == doctest::Approx(expected).epsilon(1e-12));
  }
}
