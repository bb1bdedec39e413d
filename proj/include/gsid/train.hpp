#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gsid/anomaly.hpp"
#include "gsid/dataset.hpp"
#include "gsid/model.hpp"
#include "gsid/num/adam.hpp"
#include "gsid/num/ops.hpp"
#include "gsid/parallel.hpp"

namespace gsid {

using ParamArray = std::array<double, kParamCount>;

struct TrainConfig {
  int epochs = 400;
  int batch_size = 4;
  double lr_start = 5e-4;
  double lr_end = 1e-4;
  int lr_decay_epochs = 10;
  double weight_decay = 1e-5;
  double dwa_temperature = 2.0;
  double injection_rate = 0.4;
  std::uint64_t seed = 0;
  int repeats = 3;
  int eval_every = 0;  // steps between validation passes; 0 = once per epoch
  ParameterRanges ranges{};

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (!(lr_start > 0.0 && lr_end > 0.0)) throw ConfigError("learning rates must be positive");
    if (lr_decay_epochs < 0) throw ConfigError("lr decay length must be non-negative");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (!(dwa_temperature > 0.0)) throw ConfigError("DWA temperature must be positive");
    if (!(injection_rate >= 0.0 && injection_rate <= 1.0)) throw ConfigError("injection rate must lie in [0,1]");
    if (repeats < 1) throw ConfigError("repeat count must be at least 1");
    if (eval_every < 0) throw ConfigError("evaluation interval must be non-negative");
    ranges.validate();
  }
};

/// Linear warm-down from lr_start to lr_end over lr_decay_epochs, then flat.
inline double learning_rate(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_decay_epochs == 0 || epoch >= cfg.lr_decay_epochs) return cfg.lr_end;
  const double f = static_cast<double>(epoch) / cfg.lr_decay_epochs;
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * f;
}

struct DwaResult {
  ParamArray weights{1.0, 1.0, 1.0, 1.0};
  bool clamped = false;  // some prior loss was zero
};

/// Dynamic weight averaging from per-epoch, per-parameter losses of the
/// completed epochs. Weights sum to the parameter count.
inline DwaResult dwa_weights(const std::vector<ParamArray>& history, double temperature) {
  DwaResult r;
  if (history.size() < 2) return r;
  const ParamArray& last = history[history.size() - 1];
  const ParamArray& prev = history[history.size() - 2];
  ParamArray ratio{};
  for (int c = 0; c < kParamCount; ++c) {
    if (prev[c] == 0.0) {
      ratio[c] = 1.0;
      r.clamped = true;
    } else {
      ratio[c] = last[c] / prev[c];
    }
  }
  const double mx = *std::max_element(ratio.begin(), ratio.end()) / temperature;
  double z = 0.0;
  for (int c = 0; c < kParamCount; ++c) z += std::exp(ratio[c] / temperature - mx);
  for (int c = 0; c < kParamCount; ++c) r.weights[c] = kParamCount * std::exp(ratio[c] / temperature - mx) / z;
  return r;
}

struct ParamMetrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;
  bool f1_undefined = false;  // no positive labels and no positive predictions
};

using MetricsRow = std::array<ParamMetrics, kParamCount>;

inline void finalize(ParamMetrics& m) {
  const long total = m.tp + m.fp + m.fn + m.tn;
  m.accuracy = total ? static_cast<double>(m.tp + m.tn) / total : 0.0;
  if (m.tp + m.fp + m.fn == 0) {
    m.f1 = 0.0;
    m.f1_undefined = true;
  } else {
    m.f1 = 2.0 * m.tp / (2.0 * m.tp + m.fp + m.fn);
  }
}

/// Graph-level inputs reused across epochs.
struct PreparedGraph {
  const BipartiteGraph* graph = nullptr;
  MessageIndex index;
};

inline std::vector<PreparedGraph> prepare(const std::vector<Sample>& data, int heads) {
  std::vector<PreparedGraph> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back({&s.graph, MessageIndex(s.graph, heads)});
  return out;
}

namespace detail {

inline std::vector<std::uint8_t> flatten(const std::vector<LabelRow>& rows) {
  std::vector<std::uint8_t> out;
  out.reserve(rows.size() * kParamCount);
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace detail

/// Per-parameter F1 / accuracy / loss over eligible entries of
/// pre-injected samples; dropout disabled, no state touched.
inline MetricsRow evaluate(const num::ParameterSet& params, const ModelConfig& cfg, const std::vector<Sample>& data,
                           const std::vector<PreparedGraph>* prepared = nullptr, unsigned workers = 1) {
  struct Partial {
    MetricsRow m{};
    std::array<double, kParamCount> loss{};
  };
  std::vector<Partial> parts(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const Sample& s = data[i];
    if (!s.labeled) throw DatasetError("evaluation sample " + std::to_string(i) + " carries no labels");
    num::Tape tape;
    num::Bindings b;
    for (const auto& [name, t] : params) b.emplace(name, tape.constant(t));
    const MessageIndex local = prepared ? MessageIndex{} : MessageIndex(s.graph, cfg.heads);
    const MessageIndex& mi = prepared ? (*prepared)[i].index : local;
    const num::Tensor& z = tape.value(forward(tape, b, cfg, mi, encoder_inputs(cfg, s.graph, s.labeled->observed)));
    Partial& out = parts[i];
    for (int f = 0; f < s.graph.fact_count(); ++f) {
      for (int c = 0; c < kParamCount; ++c) {
        if (!s.labeled->eligible[f][c]) continue;
        const double l0 = z(f, 2 * c), l1 = z(f, 2 * c + 1);
        const bool pred = l1 > l0;
        const bool y = s.labeled->labels[f][c] != 0;
        ParamMetrics& pm = out.m[c];
        (pred ? (y ? pm.tp : pm.fp) : (y ? pm.fn : pm.tn))++;
        const double mx = std::max(l0, l1);
        out.loss[c] += mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx)) - (y ? l1 : l0);
      }
    }
  }, workers);
  MetricsRow m{};
  std::array<double, kParamCount> loss_sum{};
  for (const auto& p : parts) {
    for (int c = 0; c < kParamCount; ++c) {
      m[c].tp += p.m[c].tp;
      m[c].fp += p.m[c].fp;
      m[c].fn += p.m[c].fn;
      m[c].tn += p.m[c].tn;
      loss_sum[c] += p.loss[c];
    }
  }
  for (int c = 0; c < kParamCount; ++c) {
    const long n = m[c].tp + m[c].fp + m[c].fn + m[c].tn;
    m[c].loss = n ? loss_sum[c] / n : 0.0;
    finalize(m[c]);
  }
  return m;
}

struct EvalRecord {
  int epoch = 0;
  long step = 0;  // optimizer steps taken so far
  MetricsRow metrics{};
};

struct TrainResult {
  num::ParameterSet params;
  std::vector<double> step_loss;             // weighted batch loss per optimizer step
  std::vector<ParamArray> epoch_param_loss;  // unweighted per-parameter training loss
  std::vector<ParamArray> dwa_history;       // weights used in each epoch
  std::vector<EvalRecord> evals;
  long steps = 0;
  int dwa_clamps = 0;
};

struct TrainHooks {
  std::function<void(const EvalRecord&)> on_eval;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

/// Mini-batch training with fresh anomalies injected into every batch
/// graph, DWA-weighted masked cross-entropy and Adam. `validation` holds
/// pre-injected samples scored on the eval schedule (may be empty).
inline TrainResult train(const std::vector<Sample>& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const std::vector<Sample>& validation = {}, const TrainHooks& hooks = {},
                         std::optional<num::ParameterSet> init = std::nullopt, unsigned workers = 1) {
  mcfg.validate();
  tcfg.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  TrainResult res;
  res.params = init ? std::move(*init) : init_parameters(mcfg, mix_seed(tcfg.seed, 0x6d6f64ULL));
  check_parameters(mcfg, res.params);
  num::Adam opt({0.9, 0.999, 1e-8, tcfg.weight_decay});
  const auto prepared = prepare(data, mcfg.heads);
  const auto prepared_val = prepare(validation, mcfg.heads);
  const int nb = static_cast<int>((data.size() + tcfg.batch_size - 1) / tcfg.batch_size);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(mix_seed(tcfg.seed, 0x73687566ULL));

  auto run_eval = [&](int epoch) {
    if (validation.empty()) return;
    EvalRecord rec{epoch, res.steps, evaluate(res.params, mcfg, validation, &prepared_val, workers)};
    res.evals.push_back(rec);
    if (hooks.on_eval) hooks.on_eval(rec);
  };

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const DwaResult dwa = dwa_weights(res.epoch_param_loss, tcfg.dwa_temperature);
    if (dwa.clamped) ++res.dwa_clamps;
    res.dwa_history.push_back(dwa.weights);
    const double lr = learning_rate(tcfg, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    ParamArray param_loss{};
    std::array<int, kParamCount> param_batches{};
    double epoch_loss = 0.0;

    for (int bi = 0; bi < nb; ++bi) {
      const std::size_t lo = static_cast<std::size_t>(bi) * tcfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + tcfg.batch_size);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      struct GraphStep {
        num::Gradients grads;
        double loss = 0.0;
        num::CrossEntropyResult ce;
      };
      std::vector<GraphStep> part(hi - lo);
      try {
        parallel_for(part.size(), [&](std::size_t k) {
          const std::size_t gi = order[lo + k];
          const Sample& s = data[gi];
          const std::uint64_t gseed = mix_seed(tcfg.seed, epoch, gi);
          const LabeledSample ls = inject(s.graph, {tcfg.injection_rate, tcfg.ranges, gseed});
          num::Tape tape;
          num::Bindings b = num::bind_parameters(tape, res.params);
          ForwardOptions fo;
          fo.training = true;
          fo.seed = mix_seed(gseed, 0x64726f70ULL);
          num::Var z = forward(tape, b, mcfg, prepared[gi].index, encoder_inputs(mcfg, s.graph, ls.observed), fo);
          part[k].ce = num::masked_cross_entropy(z, detail::flatten(ls.labels), detail::flatten(ls.eligible), dwa.weights);
          part[k].loss = tape.value(part[k].ce.loss).values[0];
          if (!std::isfinite(part[k].loss)) throw NumericError("loss is not finite");
          if (part[k].ce.empty_mask) return;
          tape.backward(part[k].ce.loss);
          part[k].grads = num::collect_gradients(tape, b);
        }, workers);
      } catch (const NumericError& e) {
        throw TrainingError("batch " + std::to_string(bi) + " of epoch " + std::to_string(epoch) + " (graphs " +
                            std::to_string(order[lo]) + ".." + std::to_string(order[hi - 1]) + "): " + e.what());
      }
      // merged in batch order so results do not depend on the worker count
      num::Gradients grads;
      double batch_loss = 0.0;
      ParamArray batch_param{};
      std::array<int, kParamCount> batch_param_n{};
      for (const auto& st : part) {
        batch_loss += st.loss * inv;
        for (int c = 0; c < kParamCount; ++c) {
          if (st.ce.per_param_count[c]) {
            batch_param[c] += st.ce.per_param[c];
            ++batch_param_n[c];
          }
        }
        if (!st.grads.empty()) num::accumulate(grads, st.grads, inv);
      }
      if (!grads.empty()) opt.step(res.params, grads, lr);
      ++res.steps;
      res.step_loss.push_back(batch_loss);
      epoch_loss += batch_loss;
      for (int c = 0; c < kParamCount; ++c) {
        if (batch_param_n[c]) {
          param_loss[c] += batch_param[c] / batch_param_n[c];
          ++param_batches[c];
        }
      }
      if (tcfg.eval_every > 0 && res.steps % tcfg.eval_every == 0) run_eval(epoch);
    }
    for (int c = 0; c < kParamCount; ++c) {
      if (param_batches[c]) param_loss[c] /= param_batches[c];
    }
    res.epoch_param_loss.push_back(param_loss);
    if (hooks.on_epoch) hooks.on_epoch(epoch, epoch_loss / nb);
    if (tcfg.eval_every == 0) run_eval(epoch);
  }
  return res;
}

/// First optimizer step at which a parameter's validation F1 reaches
/// `threshold`; -1 if it never does.
inline long first_step_reaching(const std::vector<EvalRecord>& evals, int param, double threshold) {
  for (const auto& e : evals) {
    if (e.metrics[param].f1 >= threshold) return e.step;
  }
  return -1;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / (xs.size() - 1));
  }
  return r;
}

struct RepeatSummary {
  std::array<MeanStd, kParamCount> f1, accuracy, loss;
};

inline RepeatSummary summarize(const std::vector<MetricsRow>& runs) {
  RepeatSummary s;
  for (int c = 0; c < kParamCount; ++c) {
    std::vector<double> f1, acc, loss;
    for (const auto& r : runs) {
      f1.push_back(r[c].f1);
      acc.push_back(r[c].accuracy);
      loss.push_back(r[c].loss);
    }
    s.f1[c] = mean_std(f1);
    s.accuracy[c] = mean_std(acc);
    s.loss[c] = mean_std(loss);
  }
  return s;
}

}  // namespace gsid
