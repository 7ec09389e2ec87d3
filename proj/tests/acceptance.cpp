// Acceptance harness: one line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "test_support.hpp"
#include "tgvlm/checkpoint.hpp"
#include "tgvlm/commands.hpp"
#include "tgvlm/fusion.hpp"
#include "tgvlm/io.hpp"
#include "tgvlm/masks.hpp"
#include "tgvlm/model.hpp"
#include "tgvlm/moe.hpp"
#include "tgvlm/pipeline.hpp"

using namespace tgvlm;
using testing::Rng;
using testing::pick;
using testing::uniform;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- gating oracles ----

struct RouteOracle {
  std::vector<std::size_t> selected;
  std::vector<double> weights;
};

RouteOracle brute_route(const std::vector<double>& c, const Tensor& gates, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < gates.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) s += (c[j] - gates.at(i, j)) * (c[j] - gates.at(i, j));
    order.emplace_back(std::sqrt(s), i);
  }
  std::sort(order.begin(), order.end());
  order.resize(k);
  std::sort(order.begin(), order.end(), [](auto& a, auto& b) { return a.second < b.second; });
  RouteOracle out;
  double z = 0.0;
  for (auto& [d, i] : order) z += std::exp(-d);
  for (auto& [d, i] : order) {
    out.selected.push_back(i);
    out.weights.push_back(std::exp(-d) / z);
  }
  return out;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * uniform(rng);
  return v;
}

double max_weight_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Outcome criterion1() {
  Rng rng(101);
  const auto start = Clock::now();
  std::size_t mismatches = 0, ties = 0;
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t d = pick(rng, 1, 8), s = pick(rng, 1, 8), k = pick(rng, 1, s);
    Tensor gates = testing::random_tensor({s, d}, rng, 2.0);
    if (s > 1 && n % 5 == 0) {
      const std::size_t a = pick(rng, 0, s - 1), b = (a + 1 + pick(rng, 0, s - 2)) % s;
      for (std::size_t j = 0; j < d; ++j) gates.data()[b * d + j] = gates.at(a, j);
      ++ties;
    }
    const std::vector<double> c = random_vec(rng, d, 2.0);
    const GateDecision got = route(c, gates, k);
    const RouteOracle want = brute_route(c, gates, k);
    if (got.selected != want.selected || got.weights.size() != want.weights.size()) {
      ++mismatches;
      continue;
    }
    worst = std::max(worst, max_weight_diff(got.weights, want.weights));
  }
  const double t = seconds_since(start);
  return {mismatches == 0 && worst <= 1e-12 && t < 5.0,
          "1000 instances (" + std::to_string(ties) + " with tied gates), " + std::to_string(mismatches) +
              " selection mismatches, max weight error " + fmt("%.2e", worst) + ", " + fmt("%.3f", t) + " s"};
}

// Gram-Schmidt on a random matrix.
std::vector<std::vector<double>> random_orthogonal(Rng& rng, std::size_t d) {
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v = random_vec(rng, d);
    for (const auto& u : q) {
      const double p = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    q.push_back(v);
  }
  return q;
}

Outcome criterion2() {
  Rng rng(202);
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (int mode = 0; mode < 2; ++mode) {
    for (int n = 0; n < 200; ++n) {
      const std::size_t d = pick(rng, 1, 8), s = pick(rng, 1, 8), k = pick(rng, 1, s);
      const Tensor gates = testing::random_tensor({s, d}, rng, 2.0);
      const std::vector<double> c = random_vec(rng, d, 2.0);
      Tensor gates2 = Tensor::zeros({s, d});
      std::vector<double> c2(d);
      if (mode == 0) {
        const std::vector<double> shift = random_vec(rng, d, 5.0);
        for (std::size_t j = 0; j < d; ++j) c2[j] = c[j] + shift[j];
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < d; ++j) gates2.data()[i * d + j] = gates.at(i, j) + shift[j];
      } else {
        const auto q = random_orthogonal(rng, d);
        for (std::size_t r = 0; r < d; ++r) {
          c2[r] = std::inner_product(q[r].begin(), q[r].end(), c.begin(), 0.0);
          for (std::size_t i = 0; i < s; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += q[r][j] * gates.at(i, j);
            gates2.data()[i * d + r] = acc;
          }
        }
      }
      const GateDecision a = route(c, gates, k), b = route(c2, gates2, k);
      if (a.selected != b.selected) {
        ++mismatches;
        continue;
      }
      worst = std::max(worst, max_weight_diff(a.weights, b.weights));
    }
  }
  return {mismatches == 0 && worst <= 1e-9, "200 translated + 200 rotated instances, " + std::to_string(mismatches) +
                                                " selection changes, max weight change " + fmt("%.2e", worst)};
}

std::vector<double> expert_oracle(const Expert& e, const std::vector<double>& x) {
  const std::size_t hidden = e.fc1.out_features(), out = e.fc2.out_features();
  std::vector<double> h(hidden), y(out);
  for (std::size_t m = 0; m < hidden; ++m) {
    double acc = e.fc1.bias.at(0, m);
    for (std::size_t l = 0; l < x.size(); ++l) acc += x[l] * e.fc1.weight.at(l, m);
    h[m] = std::max(acc, 0.0);
  }
  for (std::size_t n = 0; n < out; ++n) {
    double acc = e.fc2.bias.at(0, n);
    for (std::size_t m = 0; m < hidden; ++m) acc += h[m] * e.fc2.weight.at(m, n);
    y[n] = acc;
  }
  return y;
}

Outcome criterion3() {
  Rng rng(303);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    MoeConfig cfg;
    cfg.d = pick(rng, 1, 8);
    cfg.num_experts = pick(rng, 1, 6);
    cfg.top_k = cfg.num_experts;
    cfg.expert_hidden = pick(rng, 1, 8);
    ParamInit init(1000 + n);
    const MoeLayer layer = MoeLayer::create(cfg, init);
    const std::size_t rows = pick(rng, 1, 5);
    const Tensor c = testing::random_tensor({rows, cfg.d}, rng);
    const Tensor z = moe_forward(c, layer).z;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> x(cfg.d);
      for (std::size_t j = 0; j < cfg.d; ++j) x[j] = c.at(r, j);
      std::vector<double> dist(cfg.num_experts);
      double norm = 0.0;
      for (std::size_t i = 0; i < cfg.num_experts; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cfg.d; ++j) s += (x[j] - layer.gates.at(i, j)) * (x[j] - layer.gates.at(i, j));
        dist[i] = std::sqrt(s);
        norm += std::exp(-dist[i]);
      }
      std::vector<double> want(cfg.d, 0.0);
      for (std::size_t i = 0; i < cfg.num_experts; ++i) {
        const std::vector<double> y = expert_oracle(layer.experts[i], x);
        for (std::size_t j = 0; j < cfg.d; ++j) want[j] += std::exp(-dist[i]) / norm * y[j];
      }
      for (std::size_t j = 0; j < cfg.d; ++j) worst = std::max(worst, std::abs(z.at(r, j) - want[j]));
    }
  }
  return {worst <= 1e-12, "100 configurations with k = S, max error " + fmt("%.2e", worst)};
}

// ---- gradients on the full model ----

Outcome criterion4() {
  const auto start = Clock::now();
  RunConfig rc;
  SynthConfig sc = synth_config(rc);
  sc.seed = 404;
  const Sample sample = generate_sample(sc, 0, TaskType::Mcq);
  const Vocabulary vocab = Vocabulary::build(vocabulary_texts(std::span(&sample, 1)));
  const FeatureExtractor extractor(extractor_config(rc));
  const Example ex = make_example(sample, vocab, sample_features(extractor, sample));
  const TinyGiantModel model(rc.model_config(vocab.size()), 404);

  std::vector<GateDecision> base;
  model.full_forward(ex.question_ids, ex.features, ex.free_ids, true, &base);
  bool stable = true;
  std::size_t probes = 0;
  const auto loss = [&] {
    std::vector<GateDecision> now;
    Tensor l = model.full_forward(ex.question_ids, ex.features, ex.free_ids, true, &now);
    ++probes;
    for (std::size_t j = 0; j < now.size(); ++j) stable = stable && now[j].selected == base[j].selected;
    return l;
  };

  Rng rng(404);
  const ParameterList params = model.parameters();
  std::vector<testing::Entry> entries;
  const std::vector<std::string> groups{"global_proj",          "region_mlp",       "cross_attn",
                                        "moe.gates",            "moe.expert",       "seq2seq.token_embedding",
                                        "seq2seq.encoder",      "seq2seq.decoder",  "seq2seq.lm_head"};
  for (const std::string& group : groups) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].name.rfind(group, 0) == 0) members.push_back(i);
    for (int k = 0; k < 3; ++k) {
      const Tensor& t = params[members[pick(rng, 0, members.size() - 1)]].tensor;
      std::size_t index = pick(rng, 0, t.numel() - 1);
      if (group == "seq2seq.token_embedding") {
        // a row the sample actually uses
        const std::vector<int>& ids = k % 2 == 0 ? ex.question_ids : ex.free_ids;
        index = static_cast<std::size_t>(ids[pick(rng, 0, ids.size() - 1)]) * t.cols() + pick(rng, 0, t.cols() - 1);
      }
      entries.push_back({t, index});
    }
  }
  const double worst = testing::sampled_gradient_check(loss, entries, model.parameter_tensors());
  const double t = seconds_since(start);
  return {entries.size() >= 20 && worst < 1e-4 && stable && t < 120.0,
          std::to_string(entries.size()) + " entries over " + std::to_string(groups.size()) +
              " groups, max relative error " + fmt("%.2e", worst) + ", routing " +
              (stable ? "stable" : "UNSTABLE") + " over " + std::to_string(probes) + " evaluations, " +
              fmt("%.1f", t) + " s"};
}

// ---- masks and pooling ----

enum class Path { Threshold, Argmax, LostPixel };

// Independent per-patch computation of the region index set.
std::vector<std::size_t> downsample_oracle(const BinaryMask& m, const PatchGrid& g, double tau, Path& path) {
  const std::size_t rows = g.grid_rows * g.patch_h, cols = g.grid_cols * g.patch_w;
  std::vector<double> cover;
  for (std::size_t pr = 0; pr < g.grid_rows; ++pr) {
    for (std::size_t pc = 0; pc < g.grid_cols; ++pc) {
      std::size_t on = 0;
      for (std::size_t y = pr * g.patch_h; y < (pr + 1) * g.patch_h; ++y)
        for (std::size_t x = pc * g.patch_w; x < (pc + 1) * g.patch_w; ++x)
          on += m.pixels[(y * m.height / rows) * m.width + x * m.width / cols];
      cover.push_back(static_cast<double>(on) / static_cast<double>(g.patch_h * g.patch_w));
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cover.size(); ++i)
    if (cover[i] >= tau) out.push_back(i);
  if (!out.empty()) {
    path = Path::Threshold;
    return out;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < cover.size(); ++i)
    if (cover[i] > cover[best]) best = i;
  if (cover[best] > 0.0) {
    path = Path::Argmax;
    return {best};
  }
  path = Path::LostPixel;
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      const std::size_t y = r * rows / m.height, x = c * cols / m.width;
      return {(y / g.patch_h) * g.grid_cols + x / g.patch_w};
    }
  }
  return {};
}

BinaryMask random_mask(Rng& rng, std::size_t h, std::size_t w, int style) {
  BinaryMask m(h, w);
  if (style == 0) {
    const std::size_t r0 = pick(rng, 0, h - 1), c0 = pick(rng, 0, w - 1);
    const std::size_t r1 = pick(rng, r0, h - 1), c1 = pick(rng, c0, w - 1);
    for (std::size_t r = r0; r <= r1; ++r)
      for (std::size_t c = c0; c <= c1; ++c) m.set(r, c);
  } else if (style == 1) {
    const double p = uniform(rng, 0.0, 1.0);
    for (auto& px : m.pixels) px = uniform(rng, 0.0, 1.0) < p ? 1 : 0;
  } else {
    for (std::size_t n = pick(rng, 1, 3); n > 0; --n) m.set(pick(rng, 0, h - 1), pick(rng, 0, w - 1));
  }
  if (m.count() == 0) m.set(pick(rng, 0, h - 1), pick(rng, 0, w - 1));
  return m;
}

Outcome criterion5() {
  Rng rng(505);
  std::size_t index_mismatch = 0, pool_mismatch = 0;
  std::size_t hits[3] = {0, 0, 0};
  for (int n = 0; n < 500; ++n) {
    PatchGrid grid{pick(rng, 1, 6), pick(rng, 1, 6), pick(rng, 1, 5), pick(rng, 1, 5)};
    // small masks get upsampled, large ones downsampled
    const bool large = n % 2 == 0;
    const std::size_t h = large ? pick(rng, grid.image_rows(), 60) : pick(rng, 1, grid.image_rows());
    const std::size_t w = large ? pick(rng, grid.image_cols(), 60) : pick(rng, 1, grid.image_cols());
    const BinaryMask mask = random_mask(rng, h, w, n % 3);
    const double tau = n % 4 == 0 ? uniform(rng, 0.05, 1.0) : kDefaultCoverageThreshold;

    Path path = Path::Threshold;
    const std::vector<std::size_t> want = downsample_oracle(mask, grid, tau, path);
    ++hits[static_cast<int>(path)];
    const RegionIndexSet got = downsample_mask(mask, grid, tau, n);
    if (got.indices != want) ++index_mismatch;

    const std::size_t dim = pick(rng, 1, 8);
    const Tensor patches = testing::random_tensor({grid.num_patches(), dim}, rng, 3.0);
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i : want)
      for (std::size_t j = 0; j < dim; ++j) mean[j] += patches.at(i, j);
    for (double& v : mean) v /= static_cast<double>(want.size());
    if (pool_region(patches, RegionIndexSet{n, want}) != mean) ++pool_mismatch;
  }
  const bool all_paths = hits[0] > 0 && hits[1] > 0 && hits[2] > 0;
  return {index_mismatch == 0 && pool_mismatch == 0 && all_paths,
          "500 pairs, " + std::to_string(index_mismatch) + " index-set and " + std::to_string(pool_mismatch) +
              " pooling mismatches; paths threshold/argmax/lost-pixel = " + std::to_string(hits[0]) + "/" +
              std::to_string(hits[1]) + "/" + std::to_string(hits[2])};
}

RleMask random_rle(Rng& rng, std::size_t h, std::size_t w) {
  RleMask r{h, w, {}};
  const std::size_t total = h * w;
  std::size_t used = pick(rng, 0, total / 2);
  r.counts.push_back(static_cast<std::uint32_t>(used));
  while (used < total) {
    const std::size_t run = pick(rng, 1, std::min<std::size_t>(total - used, 12));
    r.counts.push_back(static_cast<std::uint32_t>(run));
    used += run;
  }
  return r;
}

Outcome criterion6() {
  Rng rng(606);
  std::size_t failures = 0;
  const auto both_ways = [&](const BinaryMask& m, const RleMask& r) {
    if (!(rle_decode(rle_encode(m)) == m)) ++failures;
    if (!(rle_encode(rle_decode(r)) == r)) ++failures;
  };
  for (int n = 0; n < 200; ++n) {
    const std::size_t h = pick(rng, 1, 30), w = pick(rng, 1, 30);
    both_ways(random_mask(rng, h, w, n % 3), random_rle(rng, h, w));
  }
  std::size_t edges = 0;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {7, 5}, {32, 32}}) {
    BinaryMask empty(h, w), full(h, w);
    std::fill(full.pixels.begin(), full.pixels.end(), 1);
    const auto n = static_cast<std::uint32_t>(h * w);
    both_ways(empty, RleMask{h, w, {n}});
    both_ways(full, RleMask{h, w, {0, n}});
    if (!(rle_encode(empty) == RleMask{h, w, {n}}) || !(rle_encode(full) == RleMask{h, w, {0, n}})) ++failures;
    edges += 2;
  }
  return {failures == 0, "200 random masks + " + std::to_string(edges) + " empty/full edge cases in both directions, " +
                             std::to_string(failures) + " failures"};
}

// ---- injection ----

bool same_row(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  for (std::size_t c = 0; c < a.cols(); ++c)
    if (a.at(ra, c) != b.at(rb, c)) return false;
  return true;
}

Outcome criterion7() {
  Rng rng(707);
  std::size_t failures = 0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t vocab = pick(rng, Vocabulary::kNumReserved + 2, 48), d = pick(rng, 2, 8);
    const std::size_t regions = pick(rng, 0, 6), len = regions + pick(rng, 1, 10);
    const Tensor table = testing::random_tensor({vocab, d}, rng);
    std::vector<std::size_t> slots(len);
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), rng);
    slots.resize(regions);
    std::sort(slots.begin(), slots.end());

    std::vector<int> ids(len);
    for (int& id : ids) id = static_cast<int>(pick(rng, Vocabulary::kNumReserved, vocab - 1));
    std::vector<Tensor> feats;
    for (std::size_t j = 0; j < regions; ++j) {
      ids[slots[j]] = Vocabulary::region_token(static_cast<int>(j));
      feats.push_back(testing::random_tensor({1, d}, rng));
    }
    const InjectedSequence inj = inject_ids(ids, feats, table);
    bool ok = inj.placeholder_positions == slots;
    std::size_t j = 0;
    for (std::size_t p = 0; p < len && ok; ++p) {
      if (j < regions && p == slots[j]) {
        ok = same_row(inj.embeddings, p, feats[j], 0);
        ++j;
      } else {
        ok = same_row(inj.embeddings, p, table, static_cast<std::size_t>(ids[p]));
      }
    }

    const Tensor states = testing::random_tensor({len, d}, rng);
    const Tensor z = regions == 0 ? Tensor() : testing::random_tensor({regions, d}, rng);
    const Tensor out = reinject(states, slots, z);
    std::size_t changed = 0;
    for (std::size_t p = 0; p < len; ++p) changed += same_row(out, p, states, p) ? 0 : 1;
    ok = ok && changed == regions;
    for (std::size_t k = 0; k < regions && ok; ++k) ok = same_row(out, slots[k], z, k);
    if (!ok) ++failures;
  }
  return {failures == 0, "100 sequences, " + std::to_string(failures) + " failures"};
}

// ---- training behaviour ----

std::vector<Example> build_examples(const std::vector<Sample>& samples, const Vocabulary& vocab,
                                    const RunConfig& rc) {
  const FeatureExtractor extractor(extractor_config(rc));
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(make_example(s, vocab, sample_features(extractor, s)));
  return out;
}

double exact_match(const TinyGiantModel& model, const Vocabulary& vocab, const std::vector<Example>& examples,
                   const PredictOptions& options) {
  std::size_t hits = 0;
  for (const Example& ex : examples) hits += predict(model, vocab, ex, options).answer == ex.answer_norm ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(examples.size());
}

Outcome criterion8() {
  const auto start = Clock::now();
  RunConfig rc;
  rc.seed = 808;
  rc.n_samples = 64;
  const std::vector<Sample> samples = generate_dataset(synth_config(rc));
  std::size_t per_task[kNumTasks] = {};
  for (const Sample& s : samples) ++per_task[static_cast<int>(s.task)];
  const Vocabulary vocab = Vocabulary::build(vocabulary_texts(samples));
  const std::vector<Example> examples = build_examples(samples, vocab, rc);

  TinyGiantModel model(rc.model_config(vocab.size()), rc.seed);
  TrainOptions opt;
  opt.optimizer = AdamWOptions{1e-3, rc.weight_decay};
  opt.batch_size = 8;
  opt.epochs = 300;
  opt.seed = rc.seed;
  const PredictOptions predict_opt{rc.max_new_tokens, true, false};
  double em = 0.0;
  std::size_t epochs = 0;
  train_phase(model, examples, opt, [&](const EpochRecord& r) {
    epochs = r.epoch;
    if (r.epoch == 0 || r.epoch % 10 != 0 || r.loss > 0.05) return false;
    em = exact_match(model, vocab, examples, predict_opt);
    return em >= 95.0;
  });
  em = exact_match(model, vocab, examples, predict_opt);
  const double loss = dataset_loss(model, examples, TargetKind::Normalized, true);
  const double t = seconds_since(start);
  const bool quotas = per_task[0] == 16 && per_task[1] == 16 && per_task[2] == 16 && per_task[3] == 16;
  return {quotas && em >= 95.0 && loss < 0.05 && t < 600.0,
          "64 samples (16 per task), " + std::to_string(epochs) + " epochs, exact match " + fmt("%.1f", em) +
              "%, final loss " + fmt("%.4f", loss) + ", " + fmt("%.0f", t) + " s"};
}

RunConfig run_in(const testing::TempDir& dir) {
  RunConfig c;
  c.dataset = (dir / "train.jsonl").string();
  c.cache = (dir / "train.cache").string();
  c.checkpoint = (dir / "model.ckpt").string();
  c.log = (dir / "log.jsonl").string();
  c.report = (dir / "report.json").string();
  c.predictions = (dir / "preds.jsonl").string();
  c.ablation_dir = (dir / "ablation").string();
  c.rgb_size = 56;
  c.depth_size = 64;
  c.lr = 1e-3;
  return c;
}

void gen_and_cache(const RunConfig& c) {
  std::ostringstream quiet;
  cmd_gen_data(c, quiet);
  cmd_cache_features(c, quiet);
}

Outcome criterion9() {
  const auto start = Clock::now();
  testing::TempDir dir("accept9");
  RunConfig c = run_in(dir);
  c.seed = 909;
  c.n_samples = 512;
  gen_and_cache(c);
  std::ostringstream quiet;
  const TrainSummary summary = cmd_train(c, quiet);

  const bool handoff = summary.handoff_in_memory && summary.handoff_loaded &&
                       *summary.handoff_in_memory == *summary.handoff_loaded;
  const Vocabulary vocab = Vocabulary::load(c.checkpoint + ".vocab");
  TinyGiantModel reload(c.model_config(vocab.size()), 1);
  ParameterList params = reload.parameters();
  load_checkpoint(c.checkpoint + ".phase1", params);
  save_checkpoint(dir / "resaved.ckpt", params);
  const bool bytes = io::read_file(dir / "resaved.ckpt") == io::read_file(c.checkpoint + ".phase1");

  const double initial = summary.phase2 ? summary.phase2->initial_loss : 0.0;
  const double final_loss = summary.phase2 ? summary.phase2->final_loss() : 1e9;
  const bool curriculum = summary.phase1 && summary.phase2 && final_loss < 0.5 * initial;

  testing::TempDir small("accept9-ablation");
  RunConfig a = run_in(small);
  a.seed = 919;
  a.n_samples = 48;
  a.epochs_phase2 = 2;
  gen_and_cache(a);
  std::ostringstream table;
  const std::vector<AblationCell> cells = cmd_ablation(a, table);
  const std::vector<double> refs{25.59, 63.65, 65.09, 68.13, 72.52};
  bool ablation = cells.size() == refs.size();
  for (std::size_t i = 0; ablation && i < refs.size(); ++i) {
    ablation = cells[i].reference == refs[i] && cells[i].score >= 0.0 && cells[i].score <= 100.0 &&
               table.str().find(fmt("%.2f", refs[i])) != std::string::npos;
  }
  ablation = ablation && table.str().find("reference") != std::string::npos;

  const double t = seconds_since(start);
  return {handoff && bytes && curriculum && ablation,
          std::string("handoff ") + (handoff && bytes ? "bitwise" : "LOSSY") + ", phase-2 loss " +
              fmt("%.4f", initial) + " -> " + fmt("%.4f", final_loss) + " (ratio " +
              fmt("%.3f", final_loss / initial) + "), ablation rows " + std::to_string(cells.size()) +
              (ablation ? " with reference annotations" : " MALFORMED") + ", " + fmt("%.0f", t) + " s"};
}

Outcome criterion10() {
  RunConfig rc;
  rc.rgb_size = 112;
  rc.depth_size = 128;
  rc.seed = 1010;
  rc.n_samples = 400;
  const std::vector<Sample> samples = generate_dataset(synth_config(rc));
  const Vocabulary vocab = Vocabulary::build(vocabulary_texts(samples));
  const std::vector<Example> examples = build_examples(samples, vocab, rc);
  const TinyGiantModel model(rc.model_config(vocab.size()), rc.seed);
  double total = 0.0;
  for (std::size_t b = 0; b < 50; ++b) {
    std::vector<std::size_t> batch(8);
    std::iota(batch.begin(), batch.end(), b * 8);
    total += dataset_loss(model, examples, batch, TargetKind::Free, true);
  }
  const double mean = total / 50.0, ln_v = std::log(static_cast<double>(vocab.size()));
  const double calib = std::abs(mean - ln_v) / ln_v;

  RunConfig lr = rc;
  lr.seed = 1011;
  lr.n_samples = 240;
  lr.task_mix = {0.0, 0.0, 0.0, 1.0};
  const std::vector<Sample> lr_samples = generate_dataset(synth_config(lr));
  const Vocabulary lr_vocab = Vocabulary::build(vocabulary_texts(lr_samples));
  const std::vector<Example> lr_examples = build_examples(lr_samples, lr_vocab, lr);
  const TinyGiantModel untrained(lr.model_config(lr_vocab.size()), lr.seed);
  const double acc = exact_match(untrained, lr_vocab, lr_examples, PredictOptions{lr.max_new_tokens, true, true});

  return {calib <= 0.15 && std::abs(acc - 50.0) <= 10.0,
          "mean initial loss " + fmt("%.4f", mean) + " vs ln V " + fmt("%.4f", ln_v) + " (" +
              fmt("%.1f", 100.0 * calib) + "% off), untrained left/right accuracy " + fmt("%.1f", acc) +
              "% over " + std::to_string(lr_examples.size()) + " samples"};
}

struct RunArtifacts {
  std::string dataset;
  std::vector<nlohmann::json> log;
  std::string report;
  ScoreReport score;
};

RunArtifacts full_run(const testing::TempDir& dir) {
  RunConfig c = run_in(dir);
  c.seed = 1111;
  c.n_samples = 48;
  c.d_model = 32;
  c.ffn_width = 64;
  c.batch_size = 8;
  c.epochs_phase2 = 3;
  std::ostringstream quiet;
  gen_and_cache(c);
  cmd_train(c, quiet);
  RunArtifacts out;
  out.score = cmd_eval(c, quiet);
  out.dataset = io::read_file(c.dataset);
  out.report = io::read_file(c.report);
  std::istringstream log(io::read_file(c.log));
  for (std::string line; std::getline(log, line);) {
    nlohmann::json j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out.log.push_back(j);
  }
  return out;
}

Outcome criterion11() {
  testing::TempDir first("accept11a"), second("accept11b");
  const RunArtifacts a = full_run(first), b = full_run(second);
  const bool dataset = a.dataset == b.dataset, log = a.log == b.log && !a.log.empty();
  const bool report = a.report == b.report && a.score == b.score;
  return {dataset && log && report, std::string("dataset ") + (dataset ? "identical" : "DIFFERS") + ", loss log (" +
                                        std::to_string(a.log.size()) + " records) " +
                                        (log ? "identical" : "DIFFERS") + ", score report " +
                                        (report ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},   {5, criterion5},   {6, criterion6},
      {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11},
  };
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] criterion %d: %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
