#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gsid/model.hpp"
#include "gsid/pipeline.hpp"
#include "gsid/train.hpp"

namespace gsid::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "GSID_OUT_DIR";

/// Output location problems (exit code 2).
struct OutputError : Error {
  using Error::Error;
};

inline std::filesystem::path default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return (env && *env) ? std::filesystem::path(env) : std::filesystem::path("gsid_out");
}

inline std::vector<double> default_sweep_rates() { return {0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8}; }

inline void ensure_parent(const std::filesystem::path& p) {
  const auto dir = p.parent_path();
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw OutputError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError("cannot open " + p.string() + " for writing");
  out << content;
  if (!out) throw OutputError("write failed for " + p.string());
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json to_json(const IntRange& r) { return {r.lo, r.hi}; }

inline nlohmann::json to_json(const ParameterRanges& r) {
  return {{"local_pref", to_json(r.local_pref)},
          {"as_path_len", to_json(r.as_path_len)},
          {"med", to_json(r.med)},
          {"ospf_weight", to_json(r.ospf_weight)}};
}

inline nlohmann::json to_json(const TopologySpec& s) {
  return {{"routers", to_json(s.router_range)},          {"gateways", to_json(s.gateway_count_range)},
          {"dest_networks", to_json(s.dest_network_range)}, {"fwd_queries", to_json(s.fwd_query_range)},
          {"reach_queries", to_json(s.reach_query_range)},  {"iso_queries", to_json(s.iso_query_range)}};
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"variant", std::string(variant_name(m.variant))},
          {"hidden", m.hidden},
          {"heads", m.heads},
          {"encoder_layers", m.encoder_layers},
          {"decoder_iters", m.decoder_iters},
          {"dropout", m.dropout},
          {"eps1", m.eps1},
          {"eps2", m.eps2},
          {"gamma", m.gamma},
          {"theta_max", m.theta_max}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr_start", t.lr_start},
          {"lr_end", t.lr_end},
          {"lr_decay_epochs", t.lr_decay_epochs},
          {"weight_decay", t.weight_decay},
          {"dwa_temperature", t.dwa_temperature},
          {"injection_rate", t.injection_rate},
          {"seed", t.seed},
          {"repeats", t.repeats},
          {"eval_every", t.eval_every},
          {"ranges", to_json(t.ranges)}};
}

inline nlohmann::json to_json(const ParamMetrics& m) {
  return {{"f1", m.f1},
          {"accuracy", m.accuracy},
          {"loss", m.loss},
          {"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"f1_undefined", m.f1_undefined}};
}

inline nlohmann::json to_json(const MetricsRow& row) {
  nlohmann::json j;
  for (int c = 0; c < kParamCount; ++c) j[std::string(param_name(kParams[c]))] = to_json(row[c]);
  return j;
}

/// Collects artifacts and writes manifest.json next to them.
class Manifest {
 public:
  Manifest(std::string command, int argc, const char* const* argv)
      : start_(std::chrono::steady_clock::now()), started_(std::time(nullptr)) {
    j_["command"] = std::move(command);
    j_["argv"] = std::vector<std::string>(argv, argv + argc);
    j_["tool_version"] = kToolVersion;
    j_["artifacts"] = nlohmann::json::array();
  }

  nlohmann::json& operator[](const std::string& key) { return j_[key]; }

  void artifact(const std::filesystem::path& p, const std::string& role) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(p, ec);
    j_["artifacts"].push_back({{"path", p.string()}, {"role", role}, {"bytes", ec ? 0 : bytes}});
  }

  void write(const std::filesystem::path& p) {
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&started_));
    j_["started_at"] = stamp;
    j_["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["artifacts"].push_back({{"path", p.string()}, {"role", "manifest"}});
    write_file(p, j_.dump(2) + "\n");
  }

 private:
  nlohmann::json j_;
  std::chrono::steady_clock::time_point start_;
  std::time_t started_;
};

inline std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

/// One row per (rate, parameter, metric).
inline void append_rate_rows(std::string& csv, double rate, const MetricsRow& m) {
  for (int c = 0; c < kParamCount; ++c) {
    const std::string p(param_name(kParams[c]));
    csv += fmt(rate) + "," + p + ",f1," + fmt(m[c].f1) + "\n";
    csv += fmt(rate) + "," + p + ",accuracy," + fmt(m[c].accuracy) + "\n";
    csv += fmt(rate) + "," + p + ",loss," + fmt(m[c].loss) + "\n";
  }
}

inline void print_metrics(std::ostream& out, const MetricsRow& m) {
  out << std::left << std::setw(14) << "parameter" << std::setw(10) << "f1" << std::setw(10) << "accuracy"
      << "loss\n";
  for (int c = 0; c < kParamCount; ++c) {
    out << std::left << std::setw(14) << param_name(kParams[c]) << std::setw(10) << fmt(m[c].f1) << std::setw(10)
        << fmt(m[c].accuracy) << fmt(m[c].loss) << "\n";
  }
}

/// Samples that already carry labels are kept; clean ones are injected.
inline std::vector<Sample> labeled_copy(const std::vector<Sample>& data, double rate, std::uint64_t seed,
                                        const ParameterRanges& ranges) {
  std::vector<Sample> out = inject_dataset(data, rate, seed, ranges);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].labeled) out[i].labeled = data[i].labeled;
  }
  return out;
}

inline constexpr std::uint64_t kValidationSalt = 0x76616c6964ULL;

struct Options {
  // generate
  std::string preset = "baseline";
  int count = 4096;
  std::string out;
  std::string graphml;
  std::string jsonl;
  // shared
  std::uint64_t seed = 0;
  std::string data;
  std::string out_dir;
  unsigned workers = default_workers();
  // train
  std::string variant = "GSID";
  std::string val;
  bool progress = false;
  ModelConfig model{};
  TrainConfig train{};
  // eval / sweep
  std::string checkpoint;
  double rate = 0.4;
  std::vector<double> rates = default_sweep_rates();
};

inline std::filesystem::path resolve_out_dir(const Options& o) {
  return o.out_dir.empty() ? default_out_dir() : std::filesystem::path(o.out_dir);
}

inline int cmd_generate(const Options& o, int argc, const char* const* argv, std::ostream& out) {
  const Preset preset = parse_preset(o.preset);
  const TopologySpec spec = preset_spec(preset);
  std::optional<std::string> doc;
  if (!o.graphml.empty()) {
    doc = read_file(o.graphml);
  } else if (preset == Preset::real_world) {
    throw ConfigError("the real-world preset needs --graphml");
  }
  const std::filesystem::path path = o.out.empty() ? resolve_out_dir(o) / "dataset.gsds" : std::filesystem::path(o.out);
  Manifest man("generate", argc, argv);
  man["config"] = {{"preset", o.preset}, {"count", o.count}, {"topology", to_json(spec)},
                   {"ranges", to_json(o.train.ranges)}, {"graphml", o.graphml}};
  man["seeds"] = {{"dataset", o.seed}};

  std::optional<std::string_view> view;
  if (doc) view = *doc;
  if (o.count < 0) throw ConfigError("--count must be non-negative");
  const std::vector<Sample> samples = generate_dataset(spec, o.train.ranges, o.count, o.seed, view, o.workers);
  ensure_parent(path);
  try {
    write_dataset(samples, path);
  } catch (const DatasetError& e) {
    throw OutputError(e.what());
  }
  man.artifact(path, "dataset");
  if (!o.jsonl.empty()) {
    std::ostringstream js;
    write_jsonl(samples, js);
    write_file(o.jsonl, js.str());
    man.artifact(o.jsonl, "jsonl");
  }
  man.write(path.string() + ".manifest.json");
  out << "wrote " << samples.size() << " samples to " << path.string() << "\n";
  return 0;
}

inline int cmd_train(Options o, int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  o.model.variant = parse_variant(o.variant);
  o.model.validate();
  o.train.validate();
  const auto dir = resolve_out_dir(o);
  const std::vector<Sample> data = read_dataset(o.data);
  if (data.empty()) throw ConfigError("training dataset " + o.data + " is empty");
  const std::uint64_t val_seed = mix_seed(o.train.seed, kValidationSalt);
  const std::vector<Sample> val = o.val.empty()
                                      ? inject_dataset(data, o.train.injection_rate, val_seed, o.train.ranges)
                                      : labeled_copy(read_dataset(o.val), o.train.injection_rate, val_seed,
                                                     o.train.ranges);

  Manifest man("train", argc, argv);
  man["config"] = {{"model", to_json(o.model)}, {"train", to_json(o.train)}, {"data", o.data}, {"val", o.val},
                   {"out_dir", dir.string()}, {"workers", o.workers}};
  nlohmann::json seeds = {{"base", o.train.seed}, {"validation", val_seed}, {"runs", nlohmann::json::array()}};

  std::string csv = "run_id,variant,epoch,step,parameter,f1,accuracy,loss\n";
  const std::string vname(variant_name(o.model.variant));
  std::vector<MetricsRow> finals;
  nlohmann::json runs = nlohmann::json::array();
  for (int r = 0; r < o.train.repeats; ++r) {
    TrainConfig tc = o.train;
    tc.seed = o.train.seed + static_cast<std::uint64_t>(r);
    seeds["runs"].push_back(tc.seed);
    TrainHooks hooks;
    hooks.on_eval = [&](const EvalRecord& rec) {
      for (int c = 0; c < kParamCount; ++c) {
        csv += std::to_string(r) + "," + vname + "," + std::to_string(rec.epoch) + "," + std::to_string(rec.step) +
               "," + std::string(param_name(kParams[c])) + "," + fmt(rec.metrics[c].f1) + "," +
               fmt(rec.metrics[c].accuracy) + "," + fmt(rec.metrics[c].loss) + "\n";
      }
    };
    if (o.progress) {
      hooks.on_epoch = [&](int epoch, double loss) {
        err << "run " << r << " epoch " << epoch << " loss " << fmt(loss) << "\n";
      };
    }
    TrainResult res = train(data, o.model, tc, val, hooks, std::nullopt, o.workers);
    const auto ckpt = dir / (o.train.repeats == 1 ? std::string("checkpoint.gsck")
                                                  : "checkpoint_run" + std::to_string(r) + ".gsck");
    ensure_parent(ckpt);
    try {
      save_checkpoint(ckpt, o.model, res.params);
    } catch (const DatasetError& e) {
      throw OutputError(e.what());
    }
    man.artifact(ckpt, "checkpoint");
    const MetricsRow last = res.evals.empty() ? MetricsRow{} : res.evals.back().metrics;
    finals.push_back(last);
    nlohmann::json first = nlohmann::json::object();
    for (int c = 0; c < kParamCount; ++c) first[std::string(param_name(kParams[c]))] = first_step_reaching(res.evals, c, 0.8);
    runs.push_back({{"run_id", r}, {"seed", tc.seed}, {"steps", res.steps}, {"final", to_json(last)},
                    {"first_step_f1_0.8", first}, {"dwa_clamps", res.dwa_clamps}});
  }
  man["seeds"] = seeds;

  const RepeatSummary sum = summarize(finals);
  nlohmann::json agg;
  for (int c = 0; c < kParamCount; ++c) {
    agg[std::string(param_name(kParams[c]))] = {
        {"f1_mean", sum.f1[c].mean},           {"f1_std", sum.f1[c].std},
        {"accuracy_mean", sum.accuracy[c].mean}, {"accuracy_std", sum.accuracy[c].std},
        {"loss_mean", sum.loss[c].mean},       {"loss_std", sum.loss[c].std}};
  }
  const auto csv_path = dir / "metrics.csv";
  const auto sum_path = dir / "summary.json";
  write_file(csv_path, csv);
  man.artifact(csv_path, "metrics");
  write_file(sum_path, nlohmann::json{{"variant", vname}, {"runs", runs}, {"aggregate", agg}}.dump(2) + "\n");
  man.artifact(sum_path, "summary");
  man.write(dir / "manifest.json");
  out << vname << " trained for " << o.train.epochs << " epochs x " << o.train.repeats << " run(s); outputs in "
      << dir.string() << "\n";
  print_metrics(out, finals.back());
  return 0;
}

/// Loads a checkpoint and dataset; encoding failures are schema mismatches.
inline std::pair<std::pair<ModelConfig, num::ParameterSet>, std::vector<Sample>> load_eval_inputs(const Options& o) {
  auto ck = load_checkpoint(o.checkpoint);
  auto data = read_dataset(o.data);
  return {std::move(ck), std::move(data)};
}

inline int cmd_eval(const Options& o, int argc, const char* const* argv, std::ostream& out) {
  if (!(o.rate >= 0.0 && o.rate <= 1.0)) throw ConfigError("--rate must lie in [0,1]");
  auto [ck, data] = load_eval_inputs(o);
  const auto& [mcfg, params] = ck;
  const auto dir = resolve_out_dir(o);
  const auto test = inject_dataset(data, o.rate, o.seed, o.train.ranges);
  const MetricsRow m = evaluate(params, mcfg, test, nullptr, o.workers);
  std::string csv = "rate,parameter,metric,value\n";
  append_rate_rows(csv, o.rate, m);
  Manifest man("eval", argc, argv);
  man["config"] = {{"checkpoint", o.checkpoint}, {"data", o.data}, {"rate", o.rate}, {"model", to_json(mcfg)},
                   {"ranges", to_json(o.train.ranges)}, {"out_dir", dir.string()}};
  man["seeds"] = {{"injection", o.seed}};
  const auto csv_path = dir / "eval.csv";
  write_file(csv_path, csv);
  man.artifact(csv_path, "metrics");
  man.write(dir / "eval.manifest.json");
  print_metrics(out, m);
  return 0;
}

inline int cmd_sweep(const Options& o, int argc, const char* const* argv, std::ostream& out) {
  if (o.rates.empty()) throw ConfigError("--rates needs at least one value");
  for (double r : o.rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sweep rate " + fmt(r) + " outside [0,1]");
  }
  auto [ck, data] = load_eval_inputs(o);
  const auto& [mcfg, params] = ck;
  const auto dir = resolve_out_dir(o);
  std::string csv = "rate,parameter,metric,value\n";
  for (std::size_t k = 0; k < o.rates.size(); ++k) {
    const auto test = inject_dataset(data, o.rates[k], mix_seed(o.seed, k), o.train.ranges);
    const MetricsRow m = evaluate(params, mcfg, test, nullptr, o.workers);
    append_rate_rows(csv, o.rates[k], m);
    out << "rate " << fmt(o.rates[k]) << "\n";
    print_metrics(out, m);
  }
  Manifest man("sweep", argc, argv);
  man["config"] = {{"checkpoint", o.checkpoint}, {"data", o.data}, {"rates", o.rates}, {"model", to_json(mcfg)},
                   {"ranges", to_json(o.train.ranges)}, {"out_dir", dir.string()}};
  man["seeds"] = {{"base", o.seed}, {"per_rate", "mix(base, rate index)"}};
  const auto csv_path = dir / "sweep.csv";
  write_file(csv_path, csv);
  man.artifact(csv_path, "metrics");
  man.write(dir / "sweep.manifest.json");
  return 0;
}

inline int cmd_export(const Options& o, std::ostream& out) {
  const auto data = read_dataset(o.data);
  if (o.out.empty() || o.out == "-") {
    write_jsonl(data, out);
    return 0;
  }
  std::ostringstream js;
  write_jsonl(data, js);
  write_file(o.out, js.str());
  return 0;
}

/// Entry point; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  o.train.repeats = 1;
  CLI::App app{"Configuration anomaly detection on routing fact graphs", "gsid"};
  app.set_version_flag("--version", kToolVersion);
  app.set_config("--config", "", "key=value file; keys are prefixed by the subcommand (train.epochs=5) or grouped under [train]");
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "generate a clean dataset");
  gen->add_option("--preset", o.preset, "baseline | larger-scale | real-world")->capture_default_str();
  gen->add_option("--count", o.count, "number of networks")->capture_default_str();
  gen->add_option("--seed", o.seed, "dataset seed")->capture_default_str();
  gen->add_option("--out", o.out, "dataset path (default $" + std::string(kOutDirEnv) + "/dataset.gsds)");
  gen->add_option("--graphml", o.graphml, "GraphML topology (required for real-world)");
  gen->add_option("--jsonl", o.jsonl, "also write a JSONL debug export here");

  auto* tr = app.add_subcommand("train", "train a detector");
  tr->add_option("--data", o.data, "training dataset")->required();
  tr->add_option("--val", o.val, "validation dataset (default: injected copy of the training set)");
  tr->add_option("--variant", o.variant, "GSID | LKP-GAT | LKP-IDA | ACE-GAT | ACE-GCN")->capture_default_str();
  tr->add_option("--hidden", o.model.hidden)->capture_default_str();
  tr->add_option("--heads", o.model.heads)->capture_default_str();
  tr->add_option("--encoder-layers", o.model.encoder_layers)->capture_default_str();
  tr->add_option("--decoder-iters", o.model.decoder_iters)->capture_default_str();
  tr->add_option("--dropout", o.model.dropout)->capture_default_str();
  tr->add_option("--eps1", o.model.eps1)->capture_default_str();
  tr->add_option("--eps2", o.model.eps2)->capture_default_str();
  tr->add_option("--epochs", o.train.epochs)->capture_default_str();
  tr->add_option("--batch-size", o.train.batch_size)->capture_default_str();
  tr->add_option("--lr-start", o.train.lr_start)->capture_default_str();
  tr->add_option("--lr-end", o.train.lr_end)->capture_default_str();
  tr->add_option("--lr-decay-epochs", o.train.lr_decay_epochs)->capture_default_str();
  tr->add_option("--weight-decay", o.train.weight_decay)->capture_default_str();
  tr->add_option("--temperature", o.train.dwa_temperature, "DWA temperature")->capture_default_str();
  tr->add_option("--rate", o.train.injection_rate, "anomaly injection rate")->capture_default_str();
  tr->add_option("--seed", o.train.seed)->capture_default_str();
  tr->add_option("--repeats", o.train.repeats, "independent runs with seeds seed, seed+1, ...")->capture_default_str();
  tr->add_option("--eval-every", o.train.eval_every, "steps between validation passes (0 = each epoch)")
      ->capture_default_str();
  tr->add_flag("--progress", o.progress, "print per-epoch loss to stderr");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint at one anomaly rate");
  ev->add_option("--checkpoint", o.checkpoint)->required();
  ev->add_option("--data", o.data)->required();
  ev->add_option("--rate", o.rate)->capture_default_str();
  ev->add_option("--seed", o.seed, "injection seed")->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "zero-shot evaluation over anomaly rates");
  sw->add_option("--checkpoint", o.checkpoint)->required();
  sw->add_option("--data", o.data)->required();
  sw->add_option("--rates", o.rates, "anomaly rates")->delimiter(',')->capture_default_str();
  sw->add_option("--seed", o.seed, "injection seed")->capture_default_str();

  auto* ex = app.add_subcommand("export", "dump a dataset as JSONL");
  ex->add_option("--data", o.data)->required();
  ex->add_option("--out", o.out, "output path (default stdout)");

  for (auto* sub : {gen, tr, ev, sw}) {
    sub->add_option("--out-dir", o.out_dir, "output directory (default $" + std::string(kOutDirEnv) + " or gsid_out)");
    sub->add_option("--workers", o.workers, "worker threads")->capture_default_str();
  }
  for (auto* sub : {gen, tr, ev, sw, ex}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (o.workers == 0) o.workers = 1;

  try {
    if (gen->parsed()) return cmd_generate(o, argc, argv, out);
    if (tr->parsed()) return cmd_train(o, argc, argv, out, err);
    if (ev->parsed()) return cmd_eval(o, argc, argv, out);
    if (sw->parsed()) return cmd_sweep(o, argc, argv, out);
    if (ex->parsed()) return cmd_export(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const EncodingError& e) {
    err << "error: dataset does not match the checkpoint: " << e.what() << "\n";
    return 2;
  } catch (const IngestError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const OutputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace gsid::cli
