#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tgvlm/checkpoint.hpp"
#include "tgvlm/errors.hpp"
#include "tgvlm/optim.hpp"
#include "tgvlm/seq2seq.hpp"

using namespace tgvlm;
using testing::Rng;

namespace {

Seq2SeqConfig tiny(std::size_t vocab = 30) {
  Seq2SeqConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_heads = 2;
  c.ffn_width = 32;
  c.max_len = 12;
  return c;
}

std::vector<std::uint8_t> ones(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  std::vector<double> out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

double max_row_diff(const Tensor& a, const Tensor& b, std::size_t rows) {
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) worst = std::max(worst, std::abs(a.at(r, c) - b.at(r, c)));
  return worst;
}

std::vector<Tensor> tensors_of(const Seq2Seq& m) {
  ParameterList p;
  m.collect("s", p);
  std::vector<Tensor> out;
  for (auto& n : p) out.push_back(n.tensor);
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(tiny().validate());
  Seq2SeqConfig c = tiny();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = tiny(Vocabulary::kNumReserved);
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("encoder shapes, limits and residual path") {
  Rng rng(1);
  ParamInit init(1);
  Seq2Seq m(tiny(), init);
  const EncoderOutput one = m.encode_sequence(testing::random_tensor({1, 16}, rng), ones(1));
  CHECK(one.states.shape() == Shape{1, 16});
  for (double v : one.states.values()) CHECK(std::isfinite(v));
  CHECK_THROWS_AS(m.encode_sequence(testing::random_tensor({13, 16}, rng), ones(13)), InputError);
  CHECK_THROWS_AS(m.encode_sequence(testing::random_tensor({3, 8}, rng), ones(3)), DimensionError);

  m.zero_encoder_output_projections();
  const Tensor x = testing::random_tensor({5, 16}, rng);
  ParameterList p;
  m.collect("s", p);
  const Tensor& pos = p[1].tensor;
  REQUIRE(p[1].name == "s.encoder_positions");
  const Tensor h = m.encode_sequence(x, ones(5)).states;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 16; ++c) CHECK(h.at(r, c) == x.at(r, c) + pos.at(r, c));
}

TEST_CASE("padding does not leak into real positions") {
  Rng rng(2);
  ParamInit init(2);
  const Seq2Seq m(tiny(), init);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t real = testing::pick(rng, 1, 6), pad = testing::pick(rng, 1, 5);
    const Tensor x = testing::random_tensor({real, 16}, rng);
    const Tensor base = m.encode_sequence(x, ones(real)).states;
    std::vector<std::uint8_t> mask = ones(real);
    mask.resize(real + pad, 0);
    const Tensor padded_a = concat({x, testing::random_tensor({pad, 16}, rng)}, 0);
    const Tensor padded_b = concat({x, testing::random_tensor({pad, 16}, rng, 10.0)}, 0);
    CHECK(max_row_diff(m.encode_sequence(padded_a, mask).states, base, real) < 1e-9);
    CHECK(max_row_diff(m.encode_sequence(padded_b, mask).states, base, real) < 1e-9);

    // masked encoder rows are invisible to the decoder as well
    const std::vector<int> inputs{0, 5, 7};
    const Tensor la = m.decoder_logits(m.encode_sequence(padded_a, mask).states, mask, inputs);
    const Tensor lb = m.decoder_logits(m.encode_sequence(padded_b, mask).states, mask, inputs);
    CHECK(max_row_diff(la, lb, 3) < 1e-9);
  }
}

TEST_CASE("decoder is causal") {
  Rng rng(3);
  ParamInit init(3);
  const Seq2Seq m(tiny(), init);
  const Tensor memory = testing::random_tensor({4, 16}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> a{0}, b{0};
    const std::size_t len = testing::pick(rng, 2, 8), t = testing::pick(rng, 0, len - 2);
    for (std::size_t i = 1; i < len; ++i) {
      a.push_back(static_cast<int>(testing::pick(rng, 3, 29)));
      b.push_back(i <= t ? a.back() : static_cast<int>(testing::pick(rng, 3, 29)));
    }
    const Tensor la = m.decoder_logits(memory, ones(4), a), lb = m.decoder_logits(memory, ones(4), b);
    CHECK(max_row_diff(la, lb, t + 1) < 1e-12);
  }
}

TEST_CASE("untrained loss sits near ln V") {
  Rng rng(4);
  for (std::size_t v : {30u, 60u, 120u}) {
    ParamInit init(v);
    const Seq2Seq m(tiny(v), init);
    double total = 0.0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      std::vector<int> target;
      for (std::size_t t = testing::pick(rng, 1, 6); t > 0; --t) target.push_back(static_cast<int>(testing::pick(rng, 3, v - 1)));
      target.push_back(Vocabulary::kEos);
      total += m.decode_loss(testing::random_tensor({5, 16}, rng), ones(5), target).item();
    }
    const double mean = total / n, ln_v = std::log(static_cast<double>(v));
    CHECK(std::abs(mean - ln_v) / ln_v < 0.15);
  }
}

TEST_CASE("decode_loss ignores pad targets and rejects empty ones") {
  Rng rng(5);
  ParamInit init(5);
  const Seq2Seq m(tiny(), init);
  const Tensor memory = testing::random_tensor({3, 16}, rng);
  CHECK_THROWS_AS(m.decode_loss(memory, ones(3), std::vector<int>{}), InputError);
  CHECK_THROWS_AS(m.decode_loss(memory, ones(2), std::vector<int>{5, 1}), DimensionError);
  CHECK_THROWS_AS(m.decode_loss(memory, ones(3), std::vector<int>(13, 5)), InputError);

  // mean over non-pad targets, from the logits directly
  const std::vector<int> target{7, 9, 1};
  const Tensor logits = m.decoder_logits(memory, ones(3), std::vector<int>{0, 7, 9});
  double nll = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    const auto row = row_of(logits, t);
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    nll += -(row[static_cast<std::size_t>(target[t])] - mx - std::log(z));
  }
  CHECK(std::abs(m.decode_loss(memory, ones(3), target).item() - nll / 3) < 1e-12);
  CHECK(m.decode_loss(memory, ones(3), target).item() == m.decode_loss(memory, ones(3), target).item());
}

TEST_CASE("generation basics") {
  Rng rng(6);
  ParamInit init(6);
  const Seq2Seq m(tiny(), init);
  const Tensor memory = testing::random_tensor({3, 16}, rng);
  CHECK(m.generate(memory, ones(3), 0).empty());
  const auto a = m.generate(memory, ones(3), 8), b = m.generate(memory, ones(3), 8);
  CHECK(a == b);
  CHECK(a.size() <= 8);

  // only <R0>, then only eos
  const TokenFilter filter = [](std::span<const int> prefix) {
    std::vector<std::uint8_t> allowed(30, 0);
    allowed[prefix.empty() ? 3 : Vocabulary::kEos] = 1;
    return allowed;
  };
  CHECK(m.generate(memory, ones(3), 8, filter) == std::vector<int>{3});
}

TEST_CASE("overfitting a single pair reproduces it") {
  Rng rng(7);
  ParamInit init(7);
  const Seq2Seq m(tiny(), init);
  const Tensor memory = testing::random_tensor({4, 16}, rng);
  const std::vector<int> answer{12, 5, 20, 9};
  std::vector<int> target = answer;
  target.push_back(Vocabulary::kEos);
  std::vector<Tensor> params = tensors_of(m);
  AdamWState opt(AdamWOptions{1e-2, 0.0});
  double loss = 0.0;
  for (int step = 0; step < 200; ++step) {
    for (Tensor& p : params) p.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor l = m.decode_loss(memory, ones(4), target);
    tape.backward(l);
    adamw_step(params, opt);
    loss = l.item();
  }
  CHECK(loss < 0.05);
  CHECK(m.generate(memory, ones(4), 10) == answer);
}

TEST_CASE("seq2seq checkpoint round trip gives a bitwise identical loss") {
  Rng rng(8);
  testing::TempDir dir("s2s");
  ParamInit a_init(8), b_init(9);
  const Seq2Seq a(tiny(), a_init), b(tiny(), b_init);
  ParameterList pa, pb;
  a.collect("s", pa);
  b.collect("s", pb);
  save_checkpoint(dir / "a", pa);
  const Tensor memory = testing::random_tensor({3, 16}, rng);
  const std::vector<int> target{4, 6, 1};
  CHECK(a.decode_loss(memory, ones(3), target).item() != b.decode_loss(memory, ones(3), target).item());
  load_checkpoint(dir / "a", pb);
  CHECK(a.decode_loss(memory, ones(3), target).item() == b.decode_loss(memory, ones(3), target).item());
}

TEST_CASE("seq2seq gradients match finite differences") {
  Rng rng(9);
  ParamInit init(9);
  Seq2SeqConfig cfg = tiny(24);
  cfg.d_model = 8;
  cfg.ffn_width = 8;
  cfg.n_enc_layers = cfg.n_dec_layers = 1;
  const Seq2Seq m(cfg, init);
  ParameterList p;
  m.collect("s", p);
  Tensor x = testing::random_tensor({3, 8}, rng, 1.0, true);
  const std::vector<int> target{5, 9, 1};
  const auto loss = [&] {
    const EncoderOutput enc = m.encode_sequence(x, ones(3));
    return m.decode_loss(enc.states, enc.attention_mask, target);
  };
  std::vector<Tensor> check{x};
  for (const auto& n : p)
    if (n.name.find("norm") == std::string::npos || n.name.find("gamma") != std::string::npos) check.push_back(n.tensor);
  CHECK(testing::gradient_check(loss, check) < 1e-4);
}
