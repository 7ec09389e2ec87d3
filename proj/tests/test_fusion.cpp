#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "tgvlm/errors.hpp"
#include "tgvlm/fusion.hpp"

using namespace tgvlm;
using testing::Rng;

namespace {

using Vec = std::vector<double>;

FusionConfig small_config() {
  FusionConfig c;
  c.rgb_dim = 3;
  c.depth_dim = 2;
  c.d_proj = 4;
  c.region_hidden = 5;
  c.d_model = 6;
  c.n_heads = 2;
  return c;
}

// Loop evaluation of x·W + b.
Vec linear_oracle(const Vec& x, const Linear& l) {
  Vec y(l.out_features(), 0.0);
  for (std::size_t j = 0; j < y.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * l.weight.at(i, j);
    y[j] = acc + (l.bias.defined() ? l.bias.data()[j] : 0.0);
  }
  return y;
}

Vec relu_oracle(Vec v) {
  for (double& x : v) x = std::max(0.0, x);
  return v;
}

Vec cat(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Vec row_of(const Tensor& t, std::size_t r) {
  Vec out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

// Per-head scaled dot-product attention of one query over memory rows,
// followed by the output projection and the residual.
Vec cross_attend_oracle(const Vec& query, const std::vector<Vec>& memory, const MultiHeadAttention& a) {
  const Vec q = linear_oracle(query, a.query);
  std::vector<Vec> k, v;
  for (const Vec& m : memory) {
    k.push_back(linear_oracle(m, a.key));
    v.push_back(linear_oracle(m, a.value));
  }
  const std::size_t dh = a.head_dim();
  Vec merged(q.size(), 0.0);
  for (std::size_t h = 0; h < a.heads; ++h) {
    Vec s(memory.size());
    for (std::size_t m = 0; m < memory.size(); ++m) {
      double acc = 0.0;
      for (std::size_t t = 0; t < dh; ++t) acc += q[h * dh + t] * k[m][h * dh + t];
      s[m] = acc / std::sqrt(static_cast<double>(dh));
    }
    double z = 0.0;
    for (double& x : s) z += (x = std::exp(x));
    for (std::size_t m = 0; m < memory.size(); ++m)
      for (std::size_t t = 0; t < dh; ++t) merged[h * dh + t] += s[m] / z * v[m][h * dh + t];
  }
  Vec out = linear_oracle(merged, a.output);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += query[i];
  return out;
}

void randomize(const Tensor& t, Rng& rng) {
  Tensor copy = t;
  for (double& x : copy.data()) x = testing::uniform(rng);
}

void set_identity(Linear& l) {
  for (double& x : l.weight.data()) x = 0.0;
  for (std::size_t i = 0; i < std::min(l.in_features(), l.out_features()); ++i) l.weight.at(i, i) = 1.0;
  if (l.bias.defined())
    for (double& x : l.bias.data()) x = 0.0;
}

void close(const Vec& a, const Vec& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("fuse_global concatenates the two projections") {
  ParamInit init(1);
  FusionConfig cfg = small_config();
  cfg.rgb_dim = cfg.depth_dim = 2;
  cfg.d_proj = 2;
  GlobalProjection proj = GlobalProjection::create(cfg, init);
  set_identity(proj.rgb);
  set_identity(proj.depth);
  const FusedGlobal fg = fuse_global({{1, 2}, {3, 4}}, proj);
  CHECK(fg.g.values() == Vec{1, 2, 3, 4});
  CHECK(fg.memory.shape() == Shape{2, 2});
  CHECK(row_of(fg.memory, 0) == Vec{1, 2});
  CHECK(row_of(fg.memory, 1) == Vec{3, 4});

  const FusedGlobal zero = fuse_global({{0, 0}, {0, 0}}, proj);
  for (double x : zero.g.values()) CHECK(x == 0.0);
  CHECK_THROWS_AS(fuse_global({{1, 2, 3}, {3, 4}}, proj), DimensionError);
}

TEST_CASE("fuse_global matches the loop oracle") {
  Rng rng(2);
  ParamInit init(2);
  const GlobalProjection proj = GlobalProjection::create(small_config(), init);
  randomize(proj.rgb.bias, rng);
  randomize(proj.depth.bias, rng);
  const GlobalFeatures f{{0.3, -1.2, 2.0}, {0.7, 0.1}};
  const FusedGlobal fg = fuse_global(f, proj);
  const Vec rgb = linear_oracle(f.rgb, proj.rgb), depth = linear_oracle(f.depth, proj.depth);
  CHECK(fg.g.values() == cat(rgb, depth));
  CHECK(row_of(fg.memory, 0) == rgb);
  CHECK(row_of(fg.memory, 1) == depth);
}

TEST_CASE("region_mlp examples and oracle") {
  Rng rng(3);
  ParamInit init(3);
  const FusionConfig cfg = small_config();
  RegionMlp mlp = RegionMlp::create(cfg, init);

  SUBCASE("formula oracle on random parameters") {
    for (const Linear* l : {&mlp.rgb, &mlp.depth, &mlp.fc1, &mlp.fc2}) {
      randomize(l->weight, rng);
      randomize(l->bias, rng);
    }
    for (int trial = 0; trial < 20; ++trial) {
      const RegionFeature f{{testing::uniform(rng), testing::uniform(rng), testing::uniform(rng)},
                            {testing::uniform(rng), testing::uniform(rng)}};
      const Vec h = cat(linear_oracle(f.rgb, mlp.rgb), linear_oracle(f.depth, mlp.depth));
      const Vec expected = relu_oracle(linear_oracle(relu_oracle(linear_oracle(h, mlp.fc1)), mlp.fc2));
      const Vec got = region_mlp(f, mlp).values();
      CHECK(got == expected);
      for (double x : got) CHECK(x >= 0.0);
    }
  }
  SUBCASE("zero input and zero biases give zero") {
    for (const Linear* l : {&mlp.rgb, &mlp.depth, &mlp.fc1, &mlp.fc2})
      for (double& x : Tensor(l->bias).data()) x = 0.0;
    const Tensor out = region_mlp({{0, 0, 0}, {0, 0}}, mlp);
    for (double x : out.values()) CHECK(x == 0.0);
  }
  SUBCASE("identity-like weights pass a positive input through") {
    FusionConfig id = cfg;
    id.rgb_dim = id.depth_dim = 2;
    id.d_proj = 2;
    id.region_hidden = id.d_model = 4;
    RegionMlp m = RegionMlp::create(id, init);
    for (Linear* l : {&m.rgb, &m.depth, &m.fc1, &m.fc2}) set_identity(*l);
    CHECK(region_mlp({{1, 2}, {3, 4}}, m).values() == Vec{1, 2, 3, 4});
  }
  CHECK_THROWS_AS(region_mlp({{1}, {1, 2}}, mlp), DimensionError);
}

TEST_CASE("inject replaces exactly the placeholder rows") {
  Rng rng(4);
  const Vocabulary vocab = Vocabulary::build(std::vector<std::string>{"is left of and the"});
  const Tensor table = testing::random_tensor({vocab.size(), 3}, rng);

  SUBCASE("no placeholders") {
    const InjectedSequence s = inject("is the left", {}, vocab, table);
    CHECK(s.placeholder_positions.empty());
    CHECK(s.embeddings.values() == embedding_lookup(table, s.token_ids).values());
  }
  SUBCASE("one placeholder") {
    const std::vector<Tensor> r{Tensor::filled({1, 3}, 1.0)};
    const InjectedSequence s = inject("left of <R0>", r, vocab, table);
    CHECK(s.placeholder_positions == std::vector<std::size_t>{2});
    CHECK(row_of(s.embeddings, 2) == Vec{1, 1, 1});
  }
  SUBCASE("scan-and-compare over random sequences") {
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n_regions = testing::pick(rng, 0, 4);
      std::vector<int> ids;
      std::vector<Tensor> feats;
      for (std::size_t j = 0; j < n_regions; ++j) {
        for (std::size_t w = testing::pick(rng, 0, 3); w > 0; --w) ids.push_back(static_cast<int>(testing::pick(rng, 19, vocab.size() - 1)));
        ids.push_back(Vocabulary::region_token(static_cast<int>(j)));
        feats.push_back(testing::random_tensor({1, 3}, rng));
      }
      ids.push_back(vocab.id("the"));
      const InjectedSequence s = inject_ids(ids, feats, table);
      REQUIRE(s.placeholder_positions.size() == n_regions);
      std::size_t next = 0;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        if (next < n_regions && s.placeholder_positions[next] == p) {
          CHECK(row_of(s.embeddings, p) == feats[next].values());
          ++next;
        } else {
          CHECK(row_of(s.embeddings, p) == row_of(table, static_cast<std::size_t>(ids[p])));
        }
      }
      CHECK(std::is_sorted(s.placeholder_positions.begin(), s.placeholder_positions.end()));
    }
  }
  SUBCASE("errors") {
    const std::vector<Tensor> one{Tensor::filled({1, 3}, 1.0)};
    CHECK_THROWS_AS(inject("<R0> and <R1>", one, vocab, table), InjectionError);
    CHECK_THROWS_AS(inject("<R1>", one, vocab, table), InjectionError);
    CHECK_THROWS_AS(inject("left", one, vocab, table), InjectionError);
    CHECK_THROWS_AS(inject("<R0>", std::vector<Tensor>{Tensor::filled({1, 2}, 1.0)}, vocab, table), DimensionError);
  }
}

TEST_CASE("cross_attend matches the per-head oracle") {
  Rng rng(5);
  ParamInit init(5);
  SUBCASE("single head, two-wide") {
    FusionConfig cfg = small_config();
    cfg.d_model = 2;
    cfg.d_proj = 2;
    cfg.n_heads = 1;
    const CrossAttention attn = CrossAttention::create(cfg, init);
    const Tensor region = Tensor::from({1, 2}, {0.5, -1.0});
    const Tensor memory = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 2.0});
    close(cross_attend(region, memory, attn).values(),
          cross_attend_oracle({0.5, -1.0}, {{1.0, 0.0}, {0.0, 2.0}}, attn.attention), 1e-15);
  }
  SUBCASE("random multi-head instances") {
    const CrossAttention attn = CrossAttention::create(small_config(), init);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t r = testing::pick(rng, 1, 4);
      const Tensor region = testing::random_tensor({r, 6}, rng);
      const Tensor memory = testing::random_tensor({2, 4}, rng);
      std::vector<Tensor> weights;
      const Tensor c = cross_attend(region, memory, attn, &weights);
      for (std::size_t j = 0; j < r; ++j)
        close(row_of(c, j), cross_attend_oracle(row_of(region, j), {row_of(memory, 0), row_of(memory, 1)}, attn.attention),
              1e-12);
      REQUIRE(weights.size() == 2);
      for (const Tensor& w : weights) {
        CHECK(w.shape() == Shape{r, 2});
        for (std::size_t j = 0; j < r; ++j) {
          CHECK(w.at(j, 0) >= 0.0);
          CHECK(std::abs(w.at(j, 0) + w.at(j, 1) - 1.0) < 1e-9);
        }
      }
    }
  }
  SUBCASE("identical memory rows give a query-independent offset") {
    const CrossAttention attn = CrossAttention::create(small_config(), init);
    const Tensor region = testing::random_tensor({3, 6}, rng);
    const Tensor memory = Tensor::from({2, 4}, {1, 2, 3, 4, 1, 2, 3, 4});
    const Tensor delta = sub(cross_attend(region, memory, attn), region);
    for (std::size_t j = 1; j < 3; ++j) close(row_of(delta, j), row_of(delta, 0), 1e-12);
  }
}

TEST_CASE("reinject changes only the placeholder rows") {
  Rng rng(6);
  const Tensor states = testing::random_tensor({6, 3}, rng);
  CHECK(reinject(states, {}, Tensor()).values() == states.values());
  const std::vector<std::size_t> pos{1, 4};
  CHECK(reinject(states, pos, gather_rows(states, pos)).values() == states.values());
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = testing::random_tensor({2, 3}, rng, 5.0);
    const Tensor out = reinject(states, pos, z);
    std::size_t differing = 0;
    for (std::size_t r = 0; r < 6; ++r) differing += row_of(out, r) != row_of(states, r);
    CHECK(differing == 2);
    CHECK(row_of(out, 1) == row_of(z, 0));
    CHECK(row_of(out, 4) == row_of(z, 1));
  }
  CHECK_THROWS(reinject(states, std::vector<std::size_t>{6}, testing::random_tensor({1, 3}, rng)));
}

TEST_CASE("fusion path gradients match finite differences") {
  Rng rng(7);
  ParamInit init(7);
  const FusionConfig cfg = small_config();
  const GlobalProjection proj = GlobalProjection::create(cfg, init);
  const RegionMlp mlp = RegionMlp::create(cfg, init);
  const CrossAttention attn = CrossAttention::create(cfg, init);
  for (const Linear* l : {&mlp.rgb, &mlp.depth, &mlp.fc1, &mlp.fc2}) randomize(l->bias, rng);
  const GlobalFeatures g{{0.2, -0.4, 0.9}, {1.1, -0.3}};
  const std::vector<RegionFeature> regions{{{0.5, 0.1, -0.2}, {0.3, 0.8}}, {{-0.7, 0.4, 0.6}, {-0.1, 0.2}}};
  const Tensor probe = testing::random_tensor({2, 6}, rng);
  const auto loss = [&] {
    std::vector<Tensor> rows;
    for (const RegionFeature& r : regions) rows.push_back(region_mlp(r, mlp));
    return testing::probe_loss(cross_attend(concat(std::span<const Tensor>(rows), 0), fuse_global(g, proj).memory, attn),
                               probe);
  };
  CHECK(testing::gradient_check(loss, {mlp.fc1.weight, attn.attention.query.weight, proj.rgb.weight, proj.depth.bias}) <
        1e-4);
}
