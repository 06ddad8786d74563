#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "common/helpers.hpp"
#include "common/hgt_reference.hpp"
#include "common/synthetic.hpp"
#include "tlr/hgt.hpp"
#include "tlr/rng.hpp"

using namespace tlr;
using namespace tlr::hgt;
using namespace tlr::testing;


TEST_CASE("forward matches the dense reference without sampling") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (bool scalar : {false, true}) {
      CAPTURE(seed);
      const GraphInput g = random_graph(3, 5, 3, 0.5, seed);
      const Model m = jittered(tiny_config(scalar), seed);
      const auto edges = sample_neighbors(g, 2, 0, 0);
      const ForwardResult f = forward(m, g, edges);
      const Reference ref = dense_reference(m, g);
      CHECK(max_abs(f.h_req, ref.h[0]) < 1e-10);
      CHECK(max_abs(f.h_code, ref.h[1]) < 1e-10);
      CHECK(max_abs(f.p_req, ref.p[0]) < 1e-10);
      CHECK(max_abs(f.p_code, ref.p[1]) < 1e-10);
      const PairIndex pairs = all_pairs(g);
      const auto logits = pair_logits(m, g, edges, pairs);
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(std::abs(logits[i] - reference_logit(m, ref, pairs[i].first, pairs[i].second)) < 1e-10);
      }
    }
  }
}

TEST_CASE("sampling at or above the maximum in-degree keeps every edge") {
  const GraphInput g = random_graph(4, 6, 3, 0.6, 21);
  const auto full = sample_neighbors(g, 2, 0, 5);
  const auto wide = sample_neighbors(g, 2, 100, 5);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t r = 0; r < kRelations; ++r) CHECK(wide[l][r] == full[l][r]);
  }
  const Model m = jittered(tiny_config(), 3);
  CHECK(max_abs(forward(m, g, wide).h_code, dense_reference(m, g).h[1]) < 1e-10);
}

TEST_CASE("neighbor sampling caps in-degree per relation") {
  const GraphInput g = random_graph(6, 8, 3, 0.9, 4);
  const auto sampled = sample_neighbors(g, 2, 2, 17);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t r = 0; r < kRelations; ++r) {
      std::map<std::size_t, std::size_t> indeg;
      for (const auto& e : sampled[l][r]) {
        ++indeg[e.second];
        CHECK(std::binary_search(g.edges[r].begin(), g.edges[r].end(), e));
      }
      for (const auto& [t, n] : indeg) CHECK(n <= 2);
    }
  }
  CHECK(sample_neighbors(g, 2, 2, 17)[1] == sampled[1]);
}

TEST_CASE("attention weights sum to one per target node") {
  const GraphInput g = random_graph(4, 6, 3, 0.5, 8);
  const Model m = jittered(tiny_config(), 8);
  const ForwardResult f = forward(m, g, sample_neighbors(g, 2, 0, 0));
  REQUIRE_FALSE(f.attention.empty());
  for (const auto& rec : f.attention) {
    std::map<std::size_t, double> sums;
    for (std::size_t i = 0; i < rec.alpha.size(); ++i) {
      CHECK(rec.alpha[i] >= 0.0);
      sums[rec.target_rows[i]] += rec.alpha[i];
    }
    for (const auto& [row, s] : sums) CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("graph without edges leaves the projected inputs unchanged") {
  GraphInput g = random_graph(2, 3, 3, 0.0, 2);
  const Model m = jittered(tiny_config(), 2);
  const ForwardResult f = forward(m, g, sample_neighbors(g, 2, 0, 0));
  const Matrix h0 = (g.x_code * m.param(Model::input_weight(NodeType::Code))).rowwise() +
                    Eigen::RowVectorXd(m.param(Model::input_bias(NodeType::Code)));
  CHECK(max_abs(f.h_code, h0) < 1e-12);
  CHECK(f.attention.empty());
}

TEST_CASE("a single neighbor receives all attention") {
  GraphInput g = random_graph(1, 2, 3, 0.0, 6);
  g.edges[0] = {{0, 1}};  // import C0 -> C1
  ModelConfig c = tiny_config();
  c.heads = 1;
  const ForwardResult f = forward(Model::init(c, 1), g, sample_neighbors(g, 2, 0, 0));
  REQUIRE(f.attention.size() == 2);
  for (const auto& rec : f.attention) {
    REQUIRE(rec.alpha.size() == 1);
    CHECK(rec.alpha[0] == 1.0);
  }
}

TEST_CASE("gradient check passes on tiny graphs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const GraphInput g = random_graph(2, 3, 3, 0.6, 40 + seed);
    const Model m = jittered(tiny_config(), seed);
    const PairIndex pairs = all_pairs(g);
    std::vector<double> labels;
    for (std::size_t i = 0; i < pairs.size(); ++i) labels.push_back(static_cast<double>(i % 2));
    const auto report = gradient_check(m, g, sample_neighbors(g, 2, 0, 0), pairs, labels);
    CHECK(report.max_relative_error < 1e-4);
    CHECK(report.passed);
    CHECK(report.tensors.size() == m.size());
  }
}

TEST_CASE("linear-only gradient check is near exact") {
  ModelConfig c = tiny_config(true);
  c.linear_only = true;
  const GraphInput g = random_graph(2, 2, 3, 0.7, 77);
  const Model m = jittered(c, 5);
  GradientCheckOptions o;
  o.tolerance = 1e-6;
  const auto report = gradient_check(m, g, sample_neighbors(g, 2, 0, 0), all_pairs(g), {1, 0, 0, 1}, o);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("corrupted gradients fail the check") {
  const GraphInput g = random_graph(2, 3, 3, 0.6, 41);
  const Model m = jittered(tiny_config(), 1);
  GradientCheckOptions o;
  o.tamper = [&](std::vector<Matrix>& grads) { grads[m.index_of(Model::mlp_weight(2))](0, 0) += 0.05; };
  const auto report = gradient_check(m, g, sample_neighbors(g, 2, 0, 0), all_pairs(g), {1, 0, 1, 0, 1, 0}, o);
  CHECK_FALSE(report.passed);
  CHECK(report.worst_tensor == Model::mlp_weight(2));
}

TEST_CASE("relabeling nodes leaves scores unchanged") {
  const GraphInput g = random_graph(3, 5, 3, 0.5, 12);
  const Model m = jittered(tiny_config(), 12);
  const std::vector<std::size_t> rp = {2, 0, 1};
  const std::vector<std::size_t> cp = {3, 1, 4, 0, 2};  // old index -> new index
  GraphInput h = g;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    h.req_ids[rp[i]] = g.req_ids[i];
    h.x_req.row(static_cast<Eigen::Index>(rp[i])) = g.x_req.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t i = 0; i < cp.size(); ++i) {
    h.code_ids[cp[i]] = g.code_ids[i];
    h.x_code.row(static_cast<Eigen::Index>(cp[i])) = g.x_code.row(static_cast<Eigen::Index>(i));
  }
  const auto& rels = relations();
  for (std::size_t r = 0; r < kRelations; ++r) {
    h.edges[r].clear();
    for (const auto& [s, t] : g.edges[r]) {
      const auto map = [&](NodeType ty, std::size_t i) { return ty == NodeType::Requirement ? rp[i] : cp[i]; };
      h.edges[r].emplace_back(map(rels[r].source, s), map(rels[r].target, t));
    }
    std::sort(h.edges[r].begin(), h.edges[r].end());
  }
  PairIndex a = all_pairs(g), b;
  for (const auto& [r, c] : a) b.emplace_back(rp[r], cp[c]);
  const auto la = pair_logits(m, g, sample_neighbors(g, 2, 0, 0), a);
  const auto lb = pair_logits(m, h, sample_neighbors(h, 2, 0, 0), b);
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(std::abs(la[i] - lb[i]) < 1e-12);
}

TEST_CASE("model checkpoint round trip") {
  const Model m = jittered(tiny_config(true), 9);
  tlr::testing::TempDir dir("ckpt");
  save_model(m, dir / "model.json");
  const Model back = load_model(dir / "model.json");
  CHECK(back == m);
  CHECK(back.config() == m.config());
  CHECK(model_config_from_json(to_json(m.config())) == m.config());
  TrainConfig t;
  t.epochs = 3;
  t.seed = 5;
  CHECK(train_config_from_json(to_json(t)) == t);
  CHECK(Model::init(tiny_config(), 4) == Model::init(tiny_config(), 4));
  CHECK_FALSE(Model::init(tiny_config(), 4) == Model::init(tiny_config(), 5));
}

TEST_CASE("invalid configurations are rejected") {
  ModelConfig c = tiny_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_config();
  c.mlp_dims = {4, 4, 4};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_config();
  c.mlp_dims.back() = 5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.scalar_head = true;
  CHECK_NOTHROW(c.validate());
  TrainConfig t;
  t.learning_rate = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  const GraphInput g = random_graph(2, 2, 5, 0.5, 1);
  CHECK_THROWS_AS(forward(Model::init(tiny_config(), 1), g, sample_neighbors(g, 2, 0, 0)), ValidationError);
}

TEST_CASE("predict gives scores in the open interval and thresholded labels") {
  const auto s = tlr::testing::make_synthetic();
  const GraphInput g = compile(s.graph, s.embeddings);
  ModelConfig c = tiny_config();
  c.input_dim = 16;
  Model m = Model::init(c, 3);
  TrainConfig t;
  t.threshold = 0.5;
  const auto pairs = tlr::testing::held_out_pairs(s);
  const auto preds = predict(m, g, pairs, t);
  REQUIRE(preds.size() == pairs.size());
  for (const auto& p : preds) {
    CHECK(p.score > 0.0);
    CHECK(p.score < 1.0);
    CHECK(p.label == (p.score >= 0.5));
  }
  CHECK(predict(m, g, pairs, t).front().score == preds.front().score);

  // a zero final layer makes both halves zero, so the inner product is zero
  m.param(Model::mlp_weight(4)).setZero();
  for (const auto& p : predict(m, g, pairs, t)) CHECK(p.score == 0.5);
}

TEST_CASE("compile rejects missing embeddings") {
  const auto s = tlr::testing::make_synthetic();
  EmbeddingTable e = s.embeddings;
  e.vectors.erase(e.vectors.begin());
  CHECK_THROWS_AS(compile(s.graph, e), ValidationError);
  const GraphInput g = compile(s.graph, s.embeddings);
  std::size_t total = 0;
  for (const auto& l : g.edges) total += l.size();
  std::size_t non_supervision = 0;
  for (const auto& edge : s.graph.edges()) non_supervision += edge.type != strategies::EdgeType::Supervision;
  CHECK(total == 2 * non_supervision);
}

TEST_CASE("negative split partitions the non-links") {
  const auto s = tlr::testing::make_synthetic();
  const auto& n = s.negatives;
  LinkSet all;
  for (const auto* part : {&n.train, &n.validation, &n.test}) {
    for (const auto& l : *part) {
      CHECK(s.project.ground_truth().count(l) == 0);
      all.insert(l);
    }
  }
  const std::size_t pool = 20 * 40 - s.project.ground_truth().size();
  CHECK(all.size() == pool);
  CHECK(n.train.size() + n.validation.size() + n.test.size() == pool);
  CHECK(n.train.size() == static_cast<std::size_t>(std::llround(0.6 * pool)));
  CHECK(hgt::split_negatives(s.project, 5).test == hgt::split_negatives(s.project, 5).test);
}

TEST_CASE("training is deterministic and lowers the loss") {
  const auto s = tlr::testing::make_synthetic();
  const GraphInput g = compile(s.graph, s.embeddings);
  ModelConfig c = tiny_config();
  c.input_dim = 16;
  c.hidden_dim = 8;
  c.mlp_dims = {8, 8, 8, 8};
  TrainConfig t;
  t.epochs = 3;
  t.learning_rate = 0.05;
  t.neighbor_samples = 4;
  const auto a = train(c, g, s.split, s.negatives, t);
  const auto b = train(c, g, s.split, s.negatives, t);
  CHECK(a.model == b.model);
  REQUIRE(a.log.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.log[i].loss == b.log[i].loss);

  // epoch 1 loss is measured before the first update; compare the next one
  t.epochs = 1;
  const auto one = train(c, g, s.split, s.negatives, t);
  std::vector<double> labels;
  PairIndex pairs;
  const auto edges = sample_neighbors(g, c.layers, t.neighbor_samples, derive_seed(t.seed, 2000001));
  for (const auto& l : s.split.train) {
    pairs.emplace_back(g.req_index(l.req_id), g.code_index(l.code_id));
    labels.push_back(1.0);
  }
  Rng rng(derive_seed(t.seed, 1001));
  const auto picks = rng.sample_distinct(s.negatives.train.size(), std::min(pairs.size(), s.negatives.train.size()));
  for (auto i : picks) {
    const auto& l = s.negatives.train[i];
    pairs.emplace_back(g.req_index(l.req_id), g.code_index(l.code_id));
    labels.push_back(0.0);
  }
  CHECK(batch_loss(one.model, g, edges, pairs, labels) < one.initial_loss);
}

TEST_CASE("zero epochs return the initial model") {
  const auto s = tlr::testing::make_synthetic();
  const GraphInput g = compile(s.graph, s.embeddings);
  ModelConfig c = tiny_config();
  c.input_dim = 16;
  TrainConfig t;
  t.epochs = 0;
  const auto r = train(c, g, s.split, s.negatives, t);
  CHECK(r.model == Model::init(c, derive_seed(t.seed, 0)));
  CHECK(r.log.empty());
}

TEST_CASE("divergence keeps the last finite model") {
  const auto s = tlr::testing::make_synthetic();
  const GraphInput g = compile(s.graph, s.embeddings);
  ModelConfig c = tiny_config();
  c.input_dim = 16;
  TrainConfig t;
  t.epochs = 20;
  t.learning_rate = 1e306;
  t.clip_norm = 1e306;
  bool thrown = false;
  try {
    train(c, g, s.split, s.negatives, t);
  } catch (const TrainingDiverged& ex) {
    thrown = true;
    CHECK(ex.last_good().all_finite());
    CHECK(ex.last_good().size() == Model::init(c, 0).size());
  }
  CHECK(thrown);
}

namespace {

struct RandomCorpus {
  Project project;
  Vocabulary vocab;
  std::vector<Artifact> arts;
};

RandomCorpus random_corpus(std::size_t n_words, std::uint64_t seed) {
  RandomCorpus rc;
  Rng rng(seed);
  for (int i = 0; i < 60; ++i) {
    std::vector<std::string> toks;
    const auto len = 5 + rng.uniform_below(15);
    for (std::uint64_t k = 0; k < len; ++k) toks.push_back("w" + std::to_string(rng.uniform_below(n_words)));
    rc.arts.push_back({"A" + std::to_string(100 + i), ArtifactKind::Requirement, "", "", toks});
  }
  std::vector<Artifact> all = rc.arts;
  all.push_back({"Copy", ArtifactKind::Requirement, "", "", rc.arts[0].tokens});
  all.push_back({"Empty", ArtifactKind::Code, "", "", {}});
  rc.project = Project("jl", all, {}, ProjectConfig{});
  std::vector<std::vector<std::string>> docs;
  for (const auto& a : rc.project.artifacts()) docs.push_back(a.tokens);
  rc.vocab = build_vocabulary(docs);
  return rc;
}

// Largest |embedding cosine - TF-IDF cosine| over 50 random pairs.
double projection_error(const RandomCorpus& rc, const EmbeddingTable& table, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto& a = rc.arts[rng.uniform_below(rc.arts.size())];
    const auto& b = rc.arts[rng.uniform_below(rc.arts.size())];
    const double exact = cosine(tfidf(a.tokens, rc.vocab), tfidf(b.tokens, rc.vocab));
    const auto& ea = table.vectors.at(a.id);
    const auto& eb = table.vectors.at(b.id);
    worst = std::max(worst, std::abs(std::inner_product(ea.begin(), ea.end(), eb.begin(), 0.0) - exact));
  }
  return worst;
}

}  // namespace

TEST_CASE("substitute embeddings") {
  const auto rc = random_corpus(40, 31);
  const auto sub = substitute_embeddings(rc.project, rc.vocab, 256, 11);
  CHECK(sub.table.vectors.at("Copy") == sub.table.vectors.at("A100"));
  CHECK(sub.zero_vector_ids == std::vector<std::string>{"Empty"});
  const auto& noise = sub.table.vectors.at("Empty");
  CHECK(std::any_of(noise.begin(), noise.end(), [](double x) { return x != 0.0; }));
  const auto& v = sub.table.vectors.at("A105");
  CHECK(std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)) == doctest::Approx(1.0));
  CHECK(substitute_embeddings(rc.project, rc.vocab, 256, 11).table.vectors == sub.table.vectors);
  CHECK_FALSE(substitute_embeddings(rc.project, rc.vocab, 256, 12).table.vectors == sub.table.vectors);
  // orthonormal rows preserve cosines
  CHECK(projection_error(rc, sub.table, 5) < 1e-9);
  CHECK_THROWS_AS(substitute_embeddings(rc.project, Vocabulary{}, 8, 1), ValidationError);
}

TEST_CASE("projected cosines approximate TF-IDF cosines") {
  const auto rc = random_corpus(300, 32);
  REQUIRE(rc.vocab.size() > 256);
  CHECK(projection_error(rc, substitute_embeddings(rc.project, rc.vocab, 256, 11).table, 6) < 0.15);
}
