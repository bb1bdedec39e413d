#include <gtest/gtest.h>

#include <numeric>

#include "gsid/model.hpp"
#include "gsid/num/gradcheck.hpp"
#include "gsid/pipeline.hpp"

using namespace gsid;

namespace {

ModelConfig small_config(Variant v, int n = 8, int heads = 2, int layers = 1, int iters = 1) {
  ModelConfig c;
  c.variant = v;
  c.hidden = n;
  c.heads = heads;
  c.encoder_layers = layers;
  c.decoder_iters = iters;
  return c;
}

BipartiteGraph baseline_graph(std::uint64_t seed) { return generate_graph(TopologySpec{}, {}, seed); }

// Entities R0, R1, AS0 and facts connected(R0, R1), eBGP(R1, AS0).
BipartiteGraph five_node_graph() {
  BipartiteGraph g;
  g.seed = 1;
  g.entities = {{0, EntityKind::router, "R0"}, {1, EntityKind::router, "R1"}, {2, EntityKind::external_as, "AS0"}};
  FactNode link;
  link.index = 3;
  link.predicate = Predicate::connected;
  link.args = {0, 1};
  link.ospf_weight = 4;
  FactNode peer;
  peer.index = 4;
  peer.predicate = Predicate::ebgp;
  peer.args = {1, 2};
  g.facts = {link, peer};
  g.edges = {{3, 0, 0}, {3, 1, 1}, {4, 1, 0}, {4, 2, 1}};
  g.features = featurize(g);
  check_graph(g);
  return augment(std::move(g));
}

// Router-only graph with hand-written messages, for single-layer checks.
BipartiteGraph message_graph(int nodes, std::vector<Message> messages) {
  BipartiteGraph g;
  for (int i = 0; i < nodes; ++i) g.entities.push_back({i, EntityKind::router, "R" + std::to_string(i)});
  g.features = featurize(g);
  g.messages = std::move(messages);
  return g;
}

num::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  num::Tensor t(shape, 0.0);
  Rng rng(seed);
  for (double& v : t.values) v = 2.0 * uniform_real(rng) - 1.0;
  return t;
}

num::Tensor layer_output(const ModelConfig& cfg, const num::ParameterSet& params, const BipartiteGraph& g,
                         const num::Tensor& h, AttentionTrace* trace = nullptr) {
  num::Tape tape;
  auto b = num::bind_parameters(tape, params);
  MessageIndex mi(g, cfg.heads);
  ForwardOptions opt;
  opt.trace = trace;
  return tape.value(message_layer(tape, b, cfg, mi, tape.constant(h), 0, opt));
}

num::Tensor h0_of(const ModelConfig& cfg, const num::ParameterSet& params, const BipartiteGraph& g,
                  const FeatureMatrix& observed) {
  num::Tape tape;
  auto b = num::bind_parameters(tape, params);
  return tape.value(encode(tape, b, encoder_inputs(cfg, g, observed)));
}

int first_fact_with(const BipartiteGraph& g, Param p) {
  for (const auto& f : g.facts) {
    if (f.param(p)) return f.index;
  }
  return -1;
}

}  // namespace

TEST(Variants, NamesAndParsing) {
  for (Variant v : kVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  try {
    parse_variant("GAT");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (Variant v : kVariants) EXPECT_NE(msg.find(variant_name(v)), std::string::npos);
  }
}

TEST(ModelConfig, DefaultsAndValidation) {
  const ModelConfig c;
  EXPECT_EQ(c.hidden, 128);
  EXPECT_EQ(c.heads, 8);
  EXPECT_EQ(c.encoder_layers, 2);
  EXPECT_EQ(c.decoder_iters, 3);
  EXPECT_DOUBLE_EQ(c.dropout, 0.2);
  ModelConfig bad = c;
  bad.gamma[1] = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.encoder_layers = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Ace, NumericalFeatureMap) {
  const auto g = baseline_graph(1);
  ModelConfig cfg = small_config(Variant::gsid);
  cfg.gamma[0] = 10.0;
  const int v = first_fact_with(g, Param::local_pref);
  FeatureMatrix x = g.features;
  x[v][dim::kLocalPref] = 5.0;
  const auto in = encoder_inputs(cfg, g, x);
  const auto& phi = in.blocks[0].second;
  EXPECT_EQ(in.blocks[0].first, "ace.num.d04");
  EXPECT_DOUBLE_EQ(phi(v, 0), 0.5);
  EXPECT_DOUBLE_EQ(phi(v, 1), 0.25);
}

TEST(Ace, IdentityProjectionAtGammaGivesEpsilons) {
  const auto g = baseline_graph(2);
  ModelConfig cfg = small_config(Variant::gsid, 2);
  cfg.eps1 = 0.7;
  cfg.eps2 = 1.3;
  auto params = init_parameters(cfg, 1);
  for (auto& [name, t] : params) {
    if (name.starts_with("ace.")) std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  params["ace.num.d10"] = num::Tensor({2, 2}, std::vector<double>{1, 0, 0, 1});
  const int v = first_fact_with(g, Param::ospf_weight);
  FeatureMatrix x = g.features;
  x[v][dim::kOspfWeight] = cfg.gamma[3];
  const auto h = h0_of(cfg, params, g, x);
  EXPECT_DOUBLE_EQ(h(v, 0), 0.7);
  EXPECT_DOUBLE_EQ(h(v, 1), 1.3);
}

TEST(Ace, ZeroValueContributesNothing) {
  const auto g = baseline_graph(3);
  const ModelConfig cfg = small_config(Variant::gsid);
  const int v = first_fact_with(g, Param::med);
  FeatureMatrix x = g.features;
  x[v][dim::kMed] = 0.0;
  const auto in = encoder_inputs(cfg, g, x);
  EXPECT_EQ(in.blocks[2].second(v, 0), 0.0);
  EXPECT_EQ(in.blocks[2].second(v, 1), 0.0);
}

TEST(Ace, SingleActiveTableGivesThatSubEncoder) {
  const auto g = baseline_graph(4);
  const ModelConfig cfg = small_config(Variant::gsid);
  auto params = init_parameters(cfg, 2);
  for (auto& [name, t] : params) {
    if (name.starts_with("ace.") && name != "ace.num.d04") std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  const int v = first_fact_with(g, Param::local_pref);
  const auto h = h0_of(cfg, params, g, g.features);
  const double z = g.features[v][dim::kLocalPref] / cfg.gamma[0];
  const auto& th = params["ace.num.d04"];
  for (int r = 0; r < cfg.hidden; ++r) EXPECT_NEAR(h(v, r), th(r, 0) * z + th(r, 1) * z * z, 1e-14);
}

TEST(Ace, SensitivityGrowsSuperlinearly) {
  // ||f(x + 1) - f(x)|| for a positive projection
  const ModelConfig cfg = small_config(Variant::gsid);
  num::Tensor th({cfg.hidden, 2}, 0.0);
  for (int r = 0; r < cfg.hidden; ++r) {
    th(r, 0) = 0.1 * (r + 1);
    th(r, 1) = 0.2 + 0.05 * r;
  }
  auto f = [&](double x) {
    std::vector<double> out(cfg.hidden);
    const double z = x / cfg.gamma[0];
    for (int r = 0; r < cfg.hidden; ++r) out[r] = th(r, 0) * cfg.eps1 * z + th(r, 1) * cfg.eps2 * z * z;
    return out;
  };
  double prev = 0.0;
  for (int x = 0; x < 9; ++x) {
    const auto a = f(x), b = f(x + 1);
    double d = 0.0;
    for (int r = 0; r < cfg.hidden; ++r) d += (b[r] - a[r]) * (b[r] - a[r]);
    d = std::sqrt(d);
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(Lookup, ColumnSelectionEqualsDenseProduct) {
  const auto g = baseline_graph(5);
  const ModelConfig cfg = small_config(Variant::lkp_ida);
  auto params = init_parameters(cfg, 3);
  for (auto& [name, t] : params) {
    if (name.starts_with("ace.") && name != "ace.lkp.d04") std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  const int v = first_fact_with(g, Param::local_pref);
  for (int x : {0, 3, 9}) {
    FeatureMatrix obs = g.features;
    obs[v][dim::kLocalPref] = x;
    const auto h = h0_of(cfg, params, g, obs);
    const auto& th = params["ace.lkp.d04"];
    for (int r = 0; r < cfg.hidden; ++r) {
      double dense = 0.0;
      for (int k = 0; k <= cfg.theta_max[0]; ++k) dense += th(r, k) * (k == x ? 1.0 : 0.0);
      EXPECT_EQ(h(v, r), th(r, x));
      EXPECT_NEAR(h(v, r), dense, 1e-15);
    }
  }
}

TEST(Lookup, OutOfVocabularyRejected) {
  const auto g = baseline_graph(6);
  const ModelConfig cfg = small_config(Variant::lkp_gat);
  FeatureMatrix obs = g.features;
  obs[first_fact_with(g, Param::local_pref)][dim::kLocalPref] = 12.0;
  EXPECT_THROW(encoder_inputs(cfg, g, obs), EncodingError);
  obs = g.features;
  obs[g.entity_count()][dim::kPredicate] = 3.5;
  EXPECT_THROW(encoder_inputs(small_config(Variant::gsid), g, obs), EncodingError);
}

TEST(Ida, SingleNeighborWithoutSelfLoop) {
  const ModelConfig cfg = small_config(Variant::gsid, 3, 2);
  const auto params = init_parameters(cfg, 4);
  const auto g = message_graph(2, {{0, 1, 2}});
  const auto h = random_tensor({2, 3}, 5);
  AttentionTrace tr;
  const auto out = layer_output(cfg, params, g, h, &tr);
  for (double a : tr.alpha[0]) EXPECT_DOUBLE_EQ(a, 1.0);
  // mean over heads of W_{tau=2,h} h_0
  const auto& w = params.at("layer0.w_src");
  for (int r = 0; r < 3; ++r) {
    double expect = 0.0;
    for (int head = 0; head < 2; ++head) {
      const int block = 2 * cfg.heads + head;
      for (int k = 0; k < 3; ++k) expect += w(block * 3 + r, k) * h(0, k);
    }
    EXPECT_NEAR(out(1, r), expect / 2.0, 1e-14);
    EXPECT_EQ(out(0, r), 0.0);
  }
}

TEST(Ida, IdenticalNeighborsShareAttention) {
  const ModelConfig cfg = small_config(Variant::gsid, 4, 2);
  const auto params = init_parameters(cfg, 6);
  const auto g = message_graph(3, {{0, 2, 1}, {1, 2, 1}});
  auto h = random_tensor({3, 4}, 7);
  for (int k = 0; k < 4; ++k) h(1, k) = h(0, k);
  AttentionTrace tr;
  layer_output(cfg, params, g, h, &tr);
  for (double a : tr.alpha[0]) EXPECT_DOUBLE_EQ(a, 0.5);
}

TEST(Gcn, UniformWeightsRegardlessOfEmbeddings) {
  const ModelConfig cfg = small_config(Variant::ace_gcn, 4, 2);
  const auto params = init_parameters(cfg, 8);
  EXPECT_EQ(params.count("layer0.att"), 0u);
  const auto g = message_graph(3, {{0, 2, 1}, {1, 2, 1}});
  AttentionTrace tr;
  layer_output(cfg, params, g, random_tensor({3, 4}, 9), &tr);
  for (double a : tr.alpha[0]) EXPECT_DOUBLE_EQ(a, 0.5);
}

TEST(Gcn, MatchesIdaWhenScoresForcedEqual) {
  const auto g = baseline_graph(7);
  const ModelConfig ida = small_config(Variant::gsid);
  const ModelConfig gcn = small_config(Variant::ace_gcn);
  auto pi = init_parameters(ida, 10);
  for (auto& [name, t] : pi) {
    if (name.ends_with(".att")) std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  num::ParameterSet pg;
  for (const auto& [name, shape] : parameter_layout(gcn)) pg.emplace(name, pi.at(name));
  const auto a = predict_logits(pi, ida, g, g.features);
  const auto b = predict_logits(pg, gcn, g, g.features);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(StaticVsDynamic, SeparationWitness) {
  // Neighbors u1=0, u2=1 feed both v=2 and v'=3 under one edge type.
  const auto g = message_graph(4, {{0, 2, 0}, {1, 2, 0}, {0, 3, 0}, {1, 3, 0}});
  const ModelConfig dyn = small_config(Variant::gsid, 4, 1);
  const ModelConfig stat = small_config(Variant::ace_gat, 4, 1);
  int dynamic_flips = 0, static_flips = 0;
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    const auto params = init_parameters(dyn, trial);
    const auto h = random_tensor({4, 4}, 1000 + trial);
    AttentionTrace td, ts;
    layer_output(dyn, params, g, h, &td);
    layer_output(stat, params, g, h, &ts);
    auto flips = [](const std::vector<double>& a) { return (a[0] > a[1]) != (a[2] > a[3]); };
    dynamic_flips += flips(td.alpha[0]);
    static_flips += flips(ts.alpha[0]);
  }
  EXPECT_GT(dynamic_flips, 0);
  EXPECT_EQ(static_flips, 0);
}

TEST(Attention, GroupSumsForEveryVariant) {
  const auto g = baseline_graph(8);
  for (Variant v : kVariants) {
    const ModelConfig cfg = small_config(v, 8, 2, 2, 1);
    AttentionTrace tr;
    predict_logits(init_parameters(cfg, 11), cfg, g, g.features, &tr);
    ASSERT_EQ(tr.alpha.size(), 3u);
    const MessageIndex mi(g, cfg.heads);
    for (const auto& alpha : tr.alpha) {
      std::vector<double> sums(static_cast<std::size_t>(mi.nodes) * kEdgeTypeCount * cfg.heads, 0.0);
      std::vector<bool> used(sums.size(), false);
      for (std::size_t m = 0; m < alpha.size(); ++m) {
        sums[mi.segment[m]] += alpha[m];
        used[mi.segment[m]] = true;
      }
      for (std::size_t s = 0; s < sums.size(); ++s) {
        if (used[s]) {
          EXPECT_NEAR(sums[s], 1.0, 1e-9) << variant_name(v);
        }
      }
    }
  }
}

TEST(Forward, ShapesAndProbabilities) {
  const auto g = baseline_graph(9);
  for (Variant v : kVariants) {
    const ModelConfig cfg = small_config(v);
    const auto z = predict_logits(init_parameters(cfg, 12), cfg, g, inject(g, {0.4, {}, 1}).observed);
    EXPECT_EQ(z.shape, (std::vector<int>{g.fact_count(), 2 * kParamCount}));
    for (const auto& row : class_probabilities(z)) {
      for (const auto& p : row) EXPECT_NEAR(p[0] + p[1], 1.0, 1e-9);
    }
  }
}

TEST(Forward, HiddenWidthPreservedByEveryLayer) {
  const auto g = baseline_graph(10);
  const ModelConfig cfg = small_config(Variant::gsid, 6, 3);
  const auto params = init_parameters(cfg, 1);
  const auto out = layer_output(cfg, params, g, random_tensor({g.node_count(), 6}, 2));
  EXPECT_EQ(out.shape, (std::vector<int>{g.node_count(), 6}));
}

TEST(Forward, NoDecoderIterationsReducesToEncoderStack) {
  const auto g = baseline_graph(11);
  const ModelConfig with = small_config(Variant::gsid, 8, 2, 2, 1);
  const ModelConfig without = small_config(Variant::gsid, 8, 2, 2, 0);
  auto p = init_parameters(with, 13);
  std::fill(p["layer2.w_src"].values.begin(), p["layer2.w_src"].values.end(), 0.0);
  num::ParameterSet q;
  for (const auto& [name, shape] : parameter_layout(without)) q.emplace(name, p.at(name));
  EXPECT_EQ(q.count("layer2.w_src"), 0u);
  const auto a = predict_logits(p, with, g, g.features);
  const auto b = predict_logits(q, without, g, g.features);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Forward, LkpIdaAndGsidDifferOnlyInEncoder) {
  const auto g = baseline_graph(12);
  const ModelConfig gs = small_config(Variant::gsid);
  const ModelConfig lk = small_config(Variant::lkp_ida);
  const auto pg = init_parameters(gs, 14);
  num::ParameterSet pl = init_parameters(lk, 15);
  for (auto& [name, t] : pl) {
    if (!name.starts_with("ace.")) t = pg.at(name);
  }
  const auto h0 = random_tensor({g.node_count(), gs.hidden}, 16);
  auto run = [&](const ModelConfig& cfg, const num::ParameterSet& p) {
    num::Tape tape;
    auto b = num::bind_parameters(tape, p);
    ForwardOptions opt;
    opt.h0_override = &h0;
    return tape.value(forward(tape, b, cfg, MessageIndex(g, cfg.heads), encoder_inputs(cfg, g, g.features), opt));
  };
  EXPECT_EQ(run(gs, pg), run(lk, pl));
  EXPECT_NE(predict_logits(pg, gs, g, g.features), predict_logits(pl, lk, g, g.features));
}

TEST(Forward, MaskedDimsDoNotMatter) {
  const auto g = baseline_graph(13);
  for (Variant v : kVariants) {
    const ModelConfig cfg = small_config(v);
    const auto params = init_parameters(cfg, 17);
    const auto s = inject(g, {0.4, {}, 2});
    FeatureMatrix noisy = s.observed;
    Rng rng(3);
    for (int node = 0; node < g.node_count(); ++node) {
      for (int d = 0; d < kFeatureDim; ++d) {
        if (g.features[node][d] == -1.0) noisy[node][d] = uniform_int(rng, -50, 50) + 0.5;
      }
    }
    auto run = [&](const FeatureMatrix& x) {
      num::Tape tape;
      auto b = num::bind_parameters(tape, params);
      ForwardOptions opt;
      opt.training = true;
      opt.seed = 99;
      return tape.value(forward(tape, b, cfg, MessageIndex(g, cfg.heads), encoder_inputs(cfg, g, x), opt));
    };
    EXPECT_EQ(run(s.observed), run(noisy)) << variant_name(v);
  }
}

TEST(Forward, PermutationEquivariance) {
  const auto g = baseline_graph(14);
  const int ne = g.entity_count(), nf = g.fact_count();
  Rng rng(21);
  std::vector<int> pe(ne), pf(nf);
  std::iota(pe.begin(), pe.end(), 0);
  std::iota(pf.begin(), pf.end(), 0);
  std::shuffle(pe.begin(), pe.end(), rng);
  std::shuffle(pf.begin(), pf.end(), rng);

  BipartiteGraph h;
  h.seed = g.seed;
  h.entities.resize(ne);
  h.facts.resize(nf);
  for (int i = 0; i < ne; ++i) h.entities[pe[i]] = {pe[i], g.entities[i].kind, g.entities[i].source_id};
  for (int j = 0; j < nf; ++j) {
    FactNode f = g.facts[j];
    f.index = ne + pf[j];
    for (int& a : f.args) a = pe[a];
    h.facts[pf[j]] = f;
  }
  for (const auto& f : h.facts) {
    for (std::size_t p = 0; p < f.args.size(); ++p) h.edges.push_back({f.index, f.args[p], static_cast<int>(p)});
  }
  h.features = featurize(h);
  check_graph(h);
  h = augment(std::move(h));

  const auto s = inject(g, {0.4, {}, 5});
  FeatureMatrix obs(h.node_count());
  auto new_index = [&](int v) { return v < ne ? pe[v] : ne + pf[v - ne]; };
  for (int v = 0; v < g.node_count(); ++v) {
    obs[new_index(v)] = s.observed[v];
    obs[new_index(v)][dim::kNodeIndex] = new_index(v);
  }
  const ModelConfig cfg = small_config(Variant::gsid);
  const auto params = init_parameters(cfg, 22);
  const auto a = predict_logits(params, cfg, g, s.observed);
  const auto b = predict_logits(params, cfg, h, obs);
  for (int j = 0; j < nf; ++j) {
    for (int c = 0; c < 2 * kParamCount; ++c) EXPECT_NEAR(a(j, c), b(pf[j], c), 1e-9);
  }
}

TEST(Forward, VariantParameterMismatchIsConfigError) {
  const auto g = baseline_graph(15);
  const auto lkp = init_parameters(small_config(Variant::lkp_gat), 1);
  EXPECT_THROW(predict_logits(lkp, small_config(Variant::gsid), g, g.features), ConfigError);
  EXPECT_THROW(check_parameters(small_config(Variant::gsid), lkp), ConfigError);
  EXPECT_NO_THROW(check_parameters(small_config(Variant::lkp_gat), lkp));
}

TEST(Forward, UnknownNodeInMessageIsGraphError) {
  auto g = message_graph(2, {{0, 5, 0}});
  EXPECT_THROW(MessageIndex(g, 2), GraphError);
  g = message_graph(2, {{0, 1, 7}});
  EXPECT_THROW(MessageIndex(g, 2), GraphError);
}

TEST(Gradients, FiveNodeGraphAllVariants) {
  const auto g = five_node_graph();
  ASSERT_EQ(g.node_count(), 5);
  const int f = g.fact_count();
  std::vector<std::uint8_t> labels(f * kParamCount), mask(f * kParamCount, 1);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3 == 0;
  const std::vector<double> w{1.2, 0.9, 1.0, 0.9};
  for (Variant v : kVariants) {
    const ModelConfig cfg = small_config(v);
    auto params = init_parameters(cfg, 31);
    const MessageIndex mi(g, cfg.heads);
    const auto in = encoder_inputs(cfg, g, g.features);
    auto loss = [&](num::Tape& tape, const num::Bindings& b) {
      ForwardOptions opt;
      opt.training = true;
      opt.seed = 5;
      return num::masked_cross_entropy(forward(tape, b, cfg, mi, in, opt), labels, mask, w).loss;
    };
    const auto rep = num::finite_difference_check(loss, params, 1e-5, 200, 7);
    EXPECT_EQ(rep.checked, 200u);
    EXPECT_LT(rep.max_rel_error, 1e-3) << variant_name(v) << " worst " << rep.worst << " analytic "
                                       << rep.worst_analytic << " numeric " << rep.worst_numeric;
  }
}

TEST(Checkpoint, RoundTripExact) {
  for (Variant v : kVariants) {
    const ModelConfig cfg = small_config(v);
    const auto p = init_parameters(cfg, 41);
    const auto [c2, p2] = decode_checkpoint(encode_checkpoint(cfg, p));
    EXPECT_EQ(c2, cfg);
    EXPECT_EQ(p2, p);
  }
  const auto path = std::filesystem::temp_directory_path() / "gsid_test.gsck";
  const ModelConfig cfg = small_config(Variant::gsid);
  const auto p = init_parameters(cfg, 42);
  save_checkpoint(path, cfg, p);
  EXPECT_EQ(load_checkpoint(path).second, p);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionAndMismatchRejected) {
  const ModelConfig cfg = small_config(Variant::gsid);
  const auto p = init_parameters(cfg, 43);
  std::string bytes = encode_checkpoint(cfg, p);
  std::string bad = bytes;
  bad[bad.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(bad), DatasetError);
  bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), DatasetError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 30)), DatasetError);
  EXPECT_THROW(encode_checkpoint(small_config(Variant::ace_gcn), p), ConfigError);
}
