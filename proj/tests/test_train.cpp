#include <gtest/gtest.h>

#include "gsid/pipeline.hpp"
#include "gsid/train.hpp"

using namespace gsid;

namespace {

ModelConfig desk_model(Variant v = Variant::gsid, int n = 16) {
  ModelConfig c;
  c.variant = v;
  c.hidden = n;
  c.heads = 2;
  c.encoder_layers = 1;
  c.decoder_iters = 1;
  return c;
}

TrainConfig quick_train(int epochs, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = epochs;
  t.seed = seed;
  t.repeats = 1;
  return t;
}

std::vector<Sample> clean_set(int count, std::uint64_t seed) {
  return generate_dataset(TopologySpec{}, {}, count, seed, std::nullopt, 1);
}

double param_distance(const num::ParameterSet& a, const num::ParameterSet& b) {
  double d = 0.0;
  for (const auto& [name, t] : a) {
    const auto& u = b.at(name);
    for (std::size_t i = 0; i < t.values.size(); ++i) d += (t.values[i] - u.values[i]) * (t.values[i] - u.values[i]);
  }
  return std::sqrt(d);
}

double mean_loss(const MetricsRow& m) {
  double s = 0.0;
  for (const auto& p : m) s += p.loss;
  return s / kParamCount;
}

}  // namespace

TEST(Dwa, FirstTwoEpochsAreUniform) {
  EXPECT_EQ(dwa_weights({}, 2.0).weights, (ParamArray{1, 1, 1, 1}));
  EXPECT_EQ(dwa_weights({{0.5, 0.4, 0.3, 0.2}}, 2.0).weights, (ParamArray{1, 1, 1, 1}));
}

TEST(Dwa, EqualRatiosGiveUnitWeights) {
  const auto r = dwa_weights({{1.0, 2.0, 3.0, 4.0}, {0.5, 1.0, 1.5, 2.0}}, 2.0);
  for (double w : r.weights) EXPECT_NEAR(w, 1.0, 1e-12);
}

TEST(Dwa, ArithmeticOracle) {
  // ratios (2,1,1,1), T=2
  const auto r = dwa_weights({{1.0, 1.0, 1.0, 1.0}, {2.0, 1.0, 1.0, 1.0}}, 2.0);
  const double a = std::exp(1.0), b = std::exp(0.5);
  const double z = a + 3 * b;
  EXPECT_NEAR(r.weights[0], 4 * a / z, 1e-12);
  EXPECT_NEAR(r.weights[0], 1.4186, 1e-4);
  for (int c = 1; c < 4; ++c) EXPECT_NEAR(r.weights[c], 4 * b / z, 1e-12);
}

TEST(Dwa, PositiveAndSumToParameterCount) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<ParamArray> h(2 + trial % 3);
    for (auto& row : h) {
      for (double& v : row) v = 10.0 * uniform_real(rng);
    }
    const auto r = dwa_weights(h, 0.5 + uniform_real(rng) * 3);
    double s = 0.0;
    for (double w : r.weights) {
      EXPECT_GT(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 4.0, 1e-12);
  }
}

TEST(Dwa, ZeroPriorLossClamped) {
  const auto r = dwa_weights({{0.0, 1.0, 1.0, 1.0}, {0.0, 1.0, 1.0, 1.0}}, 2.0);
  EXPECT_TRUE(r.clamped);
  for (double w : r.weights) EXPECT_NEAR(w, 1.0, 1e-12);
}

TEST(LearningRate, LinearThenFlat) {
  const TrainConfig t;
  EXPECT_DOUBLE_EQ(learning_rate(t, 0), 5e-4);
  EXPECT_NEAR(learning_rate(t, 5), 3e-4, 1e-15);
  EXPECT_DOUBLE_EQ(learning_rate(t, 10), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate(t, 300), 1e-4);
  for (int e = 0; e < 20; ++e) EXPECT_GT(learning_rate(t, e), 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.injection_rate = 1.2;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_THROW(train({}, desk_model(), quick_train(1, 1)), ConfigError);
}

TEST(Metrics, DefinitionCases) {
  ParamMetrics m;
  m.tp = 1;
  m.fp = 1;
  finalize(m);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-15);
  ParamMetrics perfect{5, 0, 0, 7};
  finalize(perfect);
  EXPECT_EQ(perfect.f1, 1.0);
  EXPECT_EQ(perfect.accuracy, 1.0);
  ParamMetrics none{0, 0, 0, 9};
  finalize(none);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_TRUE(none.f1_undefined);
  EXPECT_EQ(none.accuracy, 1.0);
}

TEST(Evaluate, MatchesIndependentRecount) {
  const auto data = inject_dataset(clean_set(6, 3), 0.4, 9, {}, 1);
  const ModelConfig cfg = desk_model();
  const auto params = init_parameters(cfg, 5);
  const MetricsRow m = evaluate(params, cfg, data);
  for (int c = 0; c < kParamCount; ++c) {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (const auto& s : data) {
      const auto z = predict_logits(params, cfg, s.graph, s.labeled->observed);
      for (int f = 0; f < s.graph.fact_count(); ++f) {
        if (!s.labeled->eligible[f][c]) continue;
        const bool pred = z(f, 2 * c + 1) > z(f, 2 * c);
        const bool y = s.labeled->labels[f][c];
        tp += pred && y;
        fp += pred && !y;
        fn += !pred && y;
        tn += !pred && !y;
      }
    }
    EXPECT_EQ(m[c].tp, tp);
    EXPECT_EQ(m[c].fp, fp);
    EXPECT_EQ(m[c].fn, fn);
    EXPECT_EQ(m[c].tn, tn);
    const double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
    EXPECT_NEAR(m[c].f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0, 1e-12);
    EXPECT_NEAR(m[c].accuracy, double(tp + tn) / (tp + fp + fn + tn), 1e-12);
    EXPECT_GE(m[c].f1, 0.0);
    EXPECT_LE(m[c].f1, 1.0);
  }
}

TEST(Evaluate, SideEffectFreeAndWorkerIndependent) {
  const auto data = inject_dataset(clean_set(5, 4), 0.4, 1, {}, 1);
  const ModelConfig cfg = desk_model();
  const auto params = init_parameters(cfg, 6);
  const auto copy = params;
  const auto a = evaluate(params, cfg, data);
  const auto b = evaluate(params, cfg, data, nullptr, 3);
  EXPECT_EQ(params, copy);
  for (int c = 0; c < kParamCount; ++c) {
    EXPECT_EQ(a[c].tp, b[c].tp);
    EXPECT_EQ(a[c].fp, b[c].fp);
    EXPECT_EQ(a[c].loss, b[c].loss);
  }
}

TEST(Evaluate, UnlabeledSampleRejected) {
  const auto data = clean_set(1, 5);
  EXPECT_THROW(evaluate(init_parameters(desk_model(), 1), desk_model(), data), DatasetError);
}

TEST(Train, OneEpochChangesParameters) {
  const auto data = clean_set(4, 6);
  const ModelConfig cfg = desk_model();
  const TrainConfig t = quick_train(1, 7);
  const auto init = init_parameters(cfg, 8);
  const auto r = train(data, cfg, t, {}, {}, init);
  EXPECT_GT(param_distance(init, r.params), 0.0);
  EXPECT_EQ(r.steps, 1);
  EXPECT_EQ(r.dwa_history.size(), 1u);
}

TEST(Train, DeterministicAcrossRunsAndWorkers) {
  const auto data = clean_set(6, 9);
  const auto val = inject_dataset(clean_set(2, 10), 0.4, 3, {}, 1);
  const ModelConfig cfg = desk_model(Variant::ace_gat);
  TrainConfig t = quick_train(3, 11);
  t.batch_size = 3;
  const auto a = train(data, cfg, t, val);
  const auto b = train(data, cfg, t, val);
  const auto c = train(data, cfg, t, val, {}, std::nullopt, 2);
  EXPECT_EQ(a.step_loss, b.step_loss);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.step_loss, c.step_loss);
  EXPECT_EQ(a.params, c.params);
  EXPECT_EQ(a.epoch_param_loss, c.epoch_param_loss);
  ASSERT_EQ(a.evals.size(), 3u);
  t.seed = 12;
  EXPECT_NE(train(data, cfg, t).step_loss, a.step_loss);
}

TEST(Train, DwaScalingKeepsGradientDirection) {
  const auto g = generate_graph(TopologySpec{}, {}, 13);
  const auto s = inject(g, {0.4, {}, 2});
  const ModelConfig cfg = desk_model();
  const auto params = init_parameters(cfg, 14);
  const ParamArray w{1.3, 0.7, 1.1, 0.9};
  const double k = 2.5;
  auto run = [&](const ParamArray& weights) {
    num::Tape tape;
    auto b = num::bind_parameters(tape, params);
    ForwardOptions fo;
    fo.training = true;
    fo.seed = 3;
    auto z = forward(tape, b, cfg, MessageIndex(g, cfg.heads), encoder_inputs(cfg, g, s.observed), fo);
    auto ce = num::masked_cross_entropy(z, detail::flatten(s.labels), detail::flatten(s.eligible), weights);
    tape.backward(ce.loss);
    return std::make_pair(tape.value(ce.loss).values[0], num::collect_gradients(tape, b));
  };
  ParamArray wk = w;
  for (double& x : wk) x *= k;
  const auto [l1, g1] = run(w);
  const auto [l2, g2] = run(wk);
  EXPECT_NEAR(l2, k * l1, 1e-12 * std::abs(l2));
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (const auto& [name, t] : g1) {
    const auto& u = g2.at(name);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      dot += t.values[i] * u.values[i];
      n1 += t.values[i] * t.values[i];
      n2 += u.values[i] * u.values[i];
      EXPECT_NEAR(u.values[i], k * t.values[i], 1e-9 * (1.0 + std::abs(u.values[i])));
    }
  }
  EXPECT_NEAR(dot / std::sqrt(n1 * n2), 1.0, 1e-12);
}

TEST(Train, EvaluationLossDecreasesOverTwentyEpochs) {
  // fixed evaluation batch, three seeds, majority must improve
  const auto data = clean_set(24, 15);
  const auto fixed = inject_dataset(clean_set(6, 16), 0.4, 17, {}, 1);
  const ModelConfig cfg = desk_model(Variant::gsid, 32);
  int improved = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig t = quick_train(20, seed);
    const auto r = train(data, cfg, t, fixed);
    ASSERT_EQ(r.evals.size(), 20u);
    const double first = mean_loss(r.evals.front().metrics), last = mean_loss(r.evals.back().metrics);
    improved += last < first;
  }
  EXPECT_GE(improved, 2);
}

TEST(Train, NonFiniteLossNamesTheBatch) {
  const auto data = clean_set(2, 18);
  const ModelConfig cfg = desk_model();
  auto params = init_parameters(cfg, 19);
  params.at("readout.local_pref.b2").values[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(data, cfg, quick_train(1, 1), {}, {}, params);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0 of epoch 0"), std::string::npos);
  }
}

TEST(Summary, MeanStdAndFirstStep) {
  const auto ms = mean_std({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(ms.mean, 2.0);
  EXPECT_DOUBLE_EQ(ms.std, 1.0);
  EXPECT_EQ(mean_std({4.0}).std, 0.0);
  std::vector<EvalRecord> ev(3);
  for (int i = 0; i < 3; ++i) {
    ev[i].step = 10 * (i + 1);
    ev[i].metrics[1].f1 = 0.4 * i;
  }
  EXPECT_EQ(first_step_reaching(ev, 1, 0.8), 30);
  EXPECT_EQ(first_step_reaching(ev, 0, 0.8), -1);
}
