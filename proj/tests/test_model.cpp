#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "llr/error.hpp"
#include "llr/model.hpp"

using namespace llr;

namespace {

ModelConfig micro() {
  ModelConfig c;
  c.vocab = 11;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ffn_mult = 2.0;
  c.context = 6;
  c.seed = 5;
  c.init_std = 0.4;
  return c;
}

Batch random_batch(std::size_t vocab, std::size_t batch, std::size_t len,
                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Token> tok(0, static_cast<Token>(vocab - 1));
  std::vector<std::vector<Token>> seqs(batch, std::vector<Token>(len + 1));
  for (auto &s : seqs) {
    for (auto &t : s) {
      t = tok(rng);
    }
  }
  return make_batch(seqs);
}

} // namespace

TEST_CASE("construction is deterministic in the seed") {
  ModelConfig c;
  Transformer<float> a(c), b(c);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].value == b.params()[i].value);
  }
  c.seed = 1;
  Transformer<float> d(c);
  CHECK(d.params()[0].value != a.params()[0].value);
}

TEST_CASE("matrix inventory") {
  ModelConfig c;
  Transformer<double> m(c);
  const auto mats = m.weight_matrices();
  CHECK(mats.size() == 7 * c.n_layers + 2);
  CHECK(mats.front().role == Role::Embedding);
  CHECK(mats.back().role == Role::OutputHead);
  CHECK(mats[1].name == "layers.0.att.q");
  CHECK(mats[7].name == "layers.0.ffn.down");
  CHECK(mats[7].rows == c.d_model);
  CHECK(mats[7].cols == c.ffn_hidden());

  c.tie_output_head = true;
  Transformer<double> tied(c);
  CHECK(tied.weight_matrices().size() == 7 * c.n_layers + 1);
}

TEST_CASE("initial loss is close to log(vocab)") {
  ModelConfig c;
  Transformer<float> m(c);
  const auto batch = random_batch(c.vocab, 4, c.context, 3);
  const double loss = m.forward_loss(batch);
  CHECK(std::abs(loss - std::log(64.0)) <= 0.15 * std::log(64.0));
}

TEST_CASE("a zero output head gives exactly uniform predictions") {
  auto c = micro();
  Transformer<double> m(c);
  m.params().back().value.setZero();
  const auto batch = random_batch(c.vocab, 2, c.context, 9);
  CHECK(m.forward_loss(batch) == doctest::Approx(std::log(11.0)).epsilon(1e-12));
}

TEST_CASE("identical sequences in a batch give the single-sequence loss") {
  auto c = micro();
  Transformer<double> m(c);
  const auto one = random_batch(c.vocab, 1, c.context, 4);
  std::vector<Token> seq(one.inputs);
  seq.push_back(one.targets.back());
  const auto many = make_batch({seq, seq, seq});
  CHECK(m.forward_loss(many) == doctest::Approx(m.forward_loss(one)).epsilon(1e-12));
}

TEST_CASE("gradient scales linearly with loss_scale") {
  auto c = micro();
  Transformer<double> m(c);
  const auto batch = random_batch(c.vocab, 2, c.context, 6);
  const auto g1 = backward(m, batch, 1.0);
  const auto g2 = backward(m, batch, 2.0);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK((g2[i] - 2.0 * g1[i]).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("gradients match central differences") {
  auto c = micro();
  Transformer<double> m(c);
  const auto batch = random_batch(c.vocab, 2, c.context, 8);
  const auto grads = backward(m, batch);

  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> pick_param(0, m.params().size() - 1);
  const double h = 1e-5;
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const auto p = pick_param(rng);
    auto &value = m.params()[p].value;
    std::uniform_int_distribution<Eigen::Index> pick(0, value.size() - 1);
    const auto idx = pick(rng);
    const double saved = value.data()[idx];
    value.data()[idx] = saved + h;
    const double up = m.forward_loss(batch);
    value.data()[idx] = saved - h;
    const double down = m.forward_loss(batch);
    value.data()[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads[p].data()[idx];
    // Absolute floor keeps coordinates with vanishing gradient from
    // amplifying finite-difference noise.
    const double rel = std::abs(numeric - analytic) /
                       std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("tied head gradients also match central differences") {
  auto c = micro();
  c.tie_output_head = true;
  Transformer<double> m(c);
  const auto batch = random_batch(c.vocab, 2, c.context, 12);
  const auto grads = backward(m, batch);
  auto &embed = m.params()[0].value;
  double worst = 0.0;
  for (Eigen::Index idx = 0; idx < embed.size(); idx += 7) {
    const double saved = embed.data()[idx];
    embed.data()[idx] = saved + 1e-5;
    const double up = m.forward_loss(batch);
    embed.data()[idx] = saved - 1e-5;
    const double down = m.forward_loss(batch);
    embed.data()[idx] = saved;
    const double numeric = (up - down) / 2e-5;
    const double analytic = grads[0].data()[idx];
    worst = std::max(worst, std::abs(numeric - analytic) /
                                std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("plain gradient descent overfits a fixed batch") {
  auto c = micro();
  c.init_std = 0.1;
  Transformer<double> m(c);
  const auto batch = random_batch(c.vocab, 1, c.context, 2);
  const double start = m.forward_loss(batch);
  for (int step = 0; step < 50; ++step) {
    const auto g = backward(m, batch);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m.params()[i].value -= 0.5 * g[i];
    }
  }
  CHECK(m.forward_loss(batch) < 0.5 * start);
}

TEST_CASE("invalid configs and tokens are rejected") {
  ModelConfig c;
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  auto ok = micro();
  Transformer<double> m(ok);
  auto batch = random_batch(ok.vocab, 1, ok.context, 1);
  batch.inputs[0] = 99;
  CHECK_THROWS_AS(m.forward_loss(batch), Error);
}
