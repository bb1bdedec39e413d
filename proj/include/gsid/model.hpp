#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsid/bytes.hpp"
#include "gsid/graph.hpp"
#include "gsid/num/ops.hpp"
#include "gsid/num/tape.hpp"

namespace gsid {

enum class Variant : std::uint8_t { gsid = 0, lkp_gat = 1, lkp_ida = 2, ace_gat = 3, ace_gcn = 4 };

inline constexpr std::array<Variant, 5> kVariants{Variant::gsid, Variant::lkp_gat, Variant::lkp_ida, Variant::ace_gat,
                                                  Variant::ace_gcn};

inline constexpr std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::gsid: return "GSID";
    case Variant::lkp_gat: return "LKP-GAT";
    case Variant::lkp_ida: return "LKP-IDA";
    case Variant::ace_gat: return "ACE-GAT";
    case Variant::ace_gcn: return "ACE-GCN";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kVariants) {
    if (variant_name(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) + "' (valid: GSID, LKP-GAT, LKP-IDA, ACE-GAT, ACE-GCN)");
}

enum class Attention : std::uint8_t { dynamic, fixed, uniform };

/// Encoder and layer family of each variant.
inline bool uses_ace(Variant v) { return v == Variant::gsid || v == Variant::ace_gat || v == Variant::ace_gcn; }
inline Attention attention_of(Variant v) {
  switch (v) {
    case Variant::gsid:
    case Variant::lkp_ida: return Attention::dynamic;
    case Variant::lkp_gat:
    case Variant::ace_gat: return Attention::fixed;
    case Variant::ace_gcn: return Attention::uniform;
  }
  return Attention::dynamic;
}

struct ModelConfig {
  int hidden = 128;
  int heads = 8;
  int encoder_layers = 2;
  int decoder_iters = 3;
  double dropout = 0.2;
  double eps1 = 1.0;
  double eps2 = 1.0;
  std::array<double, kParamCount> gamma{9.0, 9.0, 9.0, 9.0};  // numerical scale per parameter
  std::array<int, kParamCount> theta_max{9, 9, 9, 9};          // lookup vocabulary is theta_max + 1
  Variant variant = Variant::gsid;

  void validate() const {
    if (hidden < 1 || heads < 1) throw ConfigError("hidden dim and head count must be positive");
    if (encoder_layers < 1) throw ConfigError("at least one encoder layer is required");
    if (decoder_iters < 0) throw ConfigError("decoder iterations must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
    if (!(eps1 > 0.0 && eps2 > 0.0)) throw ConfigError("eps1 and eps2 must be positive");
    for (int c = 0; c < kParamCount; ++c) {
      if (!(gamma[c] > 0.0) || !std::isfinite(gamma[c])) throw ConfigError("gamma must be positive");
      if (theta_max[c] < 0) throw ConfigError("theta_max must be non-negative");
    }
  }

  static ModelConfig for_ranges(const ParameterRanges& r) {
    ModelConfig m;
    for (int c = 0; c < kParamCount; ++c) {
      m.theta_max[c] = param_range(r, kParams[c]).hi;
      m.gamma[c] = std::max(1, m.theta_max[c]);
    }
    return m;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Lookup vocabularies of the categorical dims. Node index (dim 1) and the
// reserved dims 7-9 are never encoded.
struct LookupDim {
  int dim;
  int vocab;
};
inline constexpr std::array<LookupDim, 7> kCategoricalDims{{{dim::kNodeType, 2},
                                                           {dim::kPredicate, 11},
                                                           {dim::kHolds, 2},
                                                           {dim::kExternalAs, 2},
                                                           {dim::kDestNetwork, 2},
                                                           {dim::kRouteReflector, 2},
                                                           {dim::kRouter, 2}}};

inline std::string dim_tag(int d) { return "d" + std::string(d < 10 ? "0" : "") + std::to_string(d); }

namespace detail {

inline int layer_count(const ModelConfig& c) { return c.encoder_layers + c.decoder_iters; }
inline std::string layer_prefix(int k) { return "layer" + std::to_string(k) + "."; }
inline std::string readout_prefix(int c) { return "readout." + std::string(param_name(kParams[c])) + "."; }

}  // namespace detail

/// Names and shapes of every parameter tensor for a configuration.
inline std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int n = cfg.hidden;
  const int th = kEdgeTypeCount * cfg.heads;
  std::vector<std::pair<std::string, std::vector<int>>> out;
  for (int c = 0; c < kParamCount; ++c) {
    if (uses_ace(cfg.variant)) {
      out.push_back({"ace.num." + dim_tag(kParamDims[c]), {n, 2}});
    } else {
      out.push_back({"ace.lkp." + dim_tag(kParamDims[c]), {n, cfg.theta_max[c] + 1}});
    }
  }
  for (const auto& ld : kCategoricalDims) out.push_back({"ace.lkp." + dim_tag(ld.dim), {n, ld.vocab}});
  const Attention att = attention_of(cfg.variant);
  for (int k = 0; k < detail::layer_count(cfg); ++k) {
    const std::string p = detail::layer_prefix(k);
    out.push_back({p + "w_src", {th * n, n}});
    if (att != Attention::uniform) {
      out.push_back({p + "w_dst", {th * n, n}});
      out.push_back({p + "att", {th, n}});
    }
  }
  for (int c = 0; c < kParamCount; ++c) {
    const std::string p = detail::readout_prefix(c);
    out.push_back({p + "w1", {n, n}});
    out.push_back({p + "b1", {n}});
    out.push_back({p + "w2", {2, n}});
    out.push_back({p + "b2", {2}});
  }
  return out;
}

inline num::ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  num::ParameterSet params;
  Rng rng(mix_seed(seed, 0x696e6974ULL));
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    if (shape.size() == 1) {
      params.emplace(name, num::Tensor(shape, 0.0));
    } else if (name.ends_with("w_src") || name.ends_with("w_dst")) {
      // stacked per (type, head) blocks of n x n; scale as a single block
      num::Tensor t(shape, 0.0);
      const double limit = std::sqrt(6.0 / (2.0 * shape[1]));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& v : t.values) v = dist(rng);
      params.emplace(name, std::move(t));
    } else {
      params.emplace(name, num::glorot_uniform(shape[0], shape[1], rng));
    }
  }
  return params;
}

/// Throws ConfigError unless `params` has exactly the layout of `cfg`.
inline void check_parameters(const ModelConfig& cfg, const num::ParameterSet& params) {
  const auto layout = parameter_layout(cfg);
  if (layout.size() != params.size()) {
    throw ConfigError("parameter set does not match variant " + std::string(variant_name(cfg.variant)));
  }
  for (const auto& [name, shape] : layout) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("missing parameter " + name + " for variant " + std::string(variant_name(cfg.variant)));
    if (it->second.shape != shape) throw ConfigError("parameter " + name + " has shape " + it->second.shape_string());
  }
}

/// Precomputed message-passing index arrays for one augmented graph. Entry
/// m = e * H + h is message e seen by head h.
struct MessageIndex {
  int nodes = 0;
  int heads = 0;
  std::vector<int> src_row, dst_row, block, att_row, segment, target;
  std::vector<int> fact_nodes;
  std::vector<double> uniform_alpha;  // 1 / |group|

  MessageIndex() = default;
  MessageIndex(const BipartiteGraph& g, int h) : nodes(g.node_count()), heads(h) {
    if (!g.augmented()) throw GraphError("message passing needs an augmented graph");
    const std::size_t m = g.messages.size() * h;
    src_row.reserve(m);
    for (const auto& msg : g.messages) {
      if (msg.src < 0 || msg.src >= nodes || msg.dst < 0 || msg.dst >= nodes) {
        throw GraphError("message references unknown node");
      }
      if (msg.type < 0 || msg.type >= kEdgeTypeCount) throw GraphError("message with unknown edge type");
      for (int k = 0; k < h; ++k) {
        src_row.push_back(msg.src);
        dst_row.push_back(msg.dst);
        block.push_back(msg.type * h + k);
        att_row.push_back(msg.type * h + k);
        segment.push_back((msg.dst * kEdgeTypeCount + msg.type) * h + k);
        target.push_back(msg.dst);
      }
    }
    std::vector<int> group_size(static_cast<std::size_t>(nodes) * kEdgeTypeCount * h, 0);
    for (int s : segment) ++group_size[s];
    uniform_alpha.reserve(m);
    for (int s : segment) uniform_alpha.push_back(1.0 / group_size[s]);
    for (int v = g.entity_count(); v < nodes; ++v) fact_nodes.push_back(v);
  }
};

/// Attention weights per layer (before dropout), aligned with MessageIndex.
struct AttentionTrace {
  std::vector<std::vector<double>> alpha;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;                  // dropout stream
  const num::Tensor* h0_override = nullptr;
  AttentionTrace* trace = nullptr;
};

namespace detail {

inline const num::Var& param(const num::Bindings& b, const std::string& name) {
  auto it = b.find(name);
  if (it == b.end()) throw ConfigError("parameter " + name + " is not bound");
  return it->second;
}

inline int lookup_index(double x, int vocab, int d) {
  const double r = std::round(x);
  if (r != x || r < 0 || r >= vocab) {
    throw EncodingError("value " + std::to_string(x) + " outside vocabulary of size " + std::to_string(vocab) +
                        " at feature dim " + std::to_string(d));
  }
  return static_cast<int>(r);
}

}  // namespace detail

/// Design matrices of the encoder; row v is zero wherever the dim is
/// inapplicable to v in the graph layout, whatever the observed value.
struct EncoderInputs {
  std::vector<std::pair<std::string, num::Tensor>> blocks;  // parameter name -> |V| x width
};

inline EncoderInputs encoder_inputs(const ModelConfig& cfg, const BipartiteGraph& g, const FeatureMatrix& observed) {
  if (observed.size() != g.features.size()) throw ShapeError("observed feature matrix does not match the graph");
  const auto app = applicability(g);
  const int nv = g.node_count();
  EncoderInputs in;
  for (int c = 0; c < kParamCount; ++c) {
    const int d = kParamDims[c];
    if (uses_ace(cfg.variant)) {
      num::Tensor phi = num::Tensor::matrix(nv, 2);
      for (int v = 0; v < nv; ++v) {
        if (!app[v][d]) continue;
        const double z = observed[v][d] / cfg.gamma[c];
        phi(v, 0) = cfg.eps1 * z;
        phi(v, 1) = cfg.eps2 * z * z;
      }
      in.blocks.emplace_back("ace.num." + dim_tag(d), std::move(phi));
    } else {
      const int vocab = cfg.theta_max[c] + 1;
      num::Tensor phi = num::Tensor::matrix(nv, vocab);
      for (int v = 0; v < nv; ++v) {
        if (app[v][d]) phi(v, detail::lookup_index(observed[v][d], vocab, d)) = 1.0;
      }
      in.blocks.emplace_back("ace.lkp." + dim_tag(d), std::move(phi));
    }
  }
  for (const auto& ld : kCategoricalDims) {
    num::Tensor phi = num::Tensor::matrix(nv, ld.vocab);
    for (int v = 0; v < nv; ++v) {
      if (app[v][ld.dim]) phi(v, detail::lookup_index(observed[v][ld.dim], ld.vocab, ld.dim)) = 1.0;
    }
    in.blocks.emplace_back("ace.lkp." + dim_tag(ld.dim), std::move(phi));
  }
  return in;
}

/// H0 = sum over dims of (design block) * Theta_d^T.
inline num::Var encode(num::Tape& tape, const num::Bindings& b, const EncoderInputs& in) {
  std::optional<num::Var> h;
  for (const auto& [name, phi] : in.blocks) {
    num::Var part = num::linear(tape.constant(phi), detail::param(b, name));
    h = h ? num::add(*h, part) : part;
  }
  return *h;
}

/// One message-passing layer of the configured family; heads averaged.
inline num::Var message_layer(num::Tape& tape, const num::Bindings& b, const ModelConfig& cfg, const MessageIndex& mi,
                              num::Var h, int layer, const ForwardOptions& opt) {
  const std::string p = detail::layer_prefix(layer);
  const int n = cfg.hidden;
  const Attention att = attention_of(cfg.variant);
  num::Var zs = num::linear(h, detail::param(b, p + "w_src"));
  num::Var src = num::gather_blocks(zs, mi.src_row, mi.block, n);
  num::Var alpha;
  if (att == Attention::uniform) {
    alpha = tape.constant(num::Tensor({static_cast<int>(mi.uniform_alpha.size())}, mi.uniform_alpha));
  } else {
    num::Var zd = num::linear(h, detail::param(b, p + "w_dst"));
    num::Var dst = num::gather_blocks(zd, mi.dst_row, mi.block, n);
    num::Var a = num::gather_rows(detail::param(b, p + "att"), mi.att_row);
    num::Var joint = num::add(src, dst);
    num::Var score = att == Attention::dynamic ? num::rowwise_dot(num::leaky_relu(joint, 0.2), a)
                                               : num::leaky_relu(num::rowwise_dot(joint, a), 0.2);
    alpha = num::segment_softmax(score, mi.segment);
  }
  if (opt.trace) opt.trace->alpha.push_back(tape.value(alpha).values);
  if (att != Attention::uniform) {
    alpha = num::dropout(alpha, cfg.dropout, mix_seed(opt.seed, layer, 0x61ULL), opt.training);
  }
  num::Var out = num::scatter_add_rows(num::row_scale(src, alpha), mi.target, mi.nodes);
  return num::scale(out, 1.0 / cfg.heads);
}

/// Fact-node logits, F x 2|C| (columns 2c, 2c+1 are the class pair of c).
inline num::Var forward(num::Tape& tape, const num::Bindings& b, const ModelConfig& cfg, const MessageIndex& mi,
                        const EncoderInputs& in, const ForwardOptions& opt = {}) {
  if (mi.heads != cfg.heads) throw ConfigError("message index built for a different head count");
  num::Var h;
  if (opt.h0_override) {
    const auto& t = *opt.h0_override;
    if (t.rank() != 2 || t.shape[0] != mi.nodes || t.shape[1] != cfg.hidden) {
      throw ShapeError("H0 override has shape " + t.shape_string());
    }
    h = tape.constant(t);
  } else {
    h = encode(tape, b, in);
  }
  int layer = 0;
  for (; layer < cfg.encoder_layers; ++layer) h = message_layer(tape, b, cfg, mi, h, layer, opt);
  for (int it = 0; it < cfg.decoder_iters; ++it, ++layer) {
    h = num::add(h, message_layer(tape, b, cfg, mi, h, layer, opt));
  }
  num::Var hf = num::gather_rows(h, mi.fact_nodes);
  std::optional<num::Var> logits;
  for (int c = 0; c < kParamCount; ++c) {
    const std::string p = detail::readout_prefix(c);
    const num::Var& b1 = detail::param(b, p + "b1");
    const num::Var& b2 = detail::param(b, p + "b2");
    num::Var hid = num::relu(num::linear(hf, detail::param(b, p + "w1"), &b1));
    hid = num::dropout(hid, cfg.dropout, mix_seed(opt.seed, 0x726fULL, c), opt.training);
    num::Var lc = num::linear(hid, detail::param(b, p + "w2"), &b2);
    logits = logits ? num::concat(*logits, lc) : lc;
  }
  return *logits;
}

/// Evaluation-mode logits without gradient bookkeeping.
inline num::Tensor predict_logits(const num::ParameterSet& params, const ModelConfig& cfg, const BipartiteGraph& g,
                                  const FeatureMatrix& observed, AttentionTrace* trace = nullptr) {
  num::Tape tape;
  num::Bindings b;
  for (const auto& [name, t] : params) b.emplace(name, tape.constant(t));
  MessageIndex mi(g, cfg.heads);
  ForwardOptions opt;
  opt.trace = trace;
  return tape.value(forward(tape, b, cfg, mi, encoder_inputs(cfg, g, observed), opt));
}

/// Two-class probabilities per (fact, parameter): [F][C][2].
inline std::vector<std::array<std::array<double, 2>, kParamCount>> class_probabilities(const num::Tensor& logits) {
  std::vector<std::array<std::array<double, 2>, kParamCount>> out(logits.rows());
  for (int i = 0; i < logits.rows(); ++i) {
    for (int c = 0; c < kParamCount; ++c) {
      const double p1 = num::positive_probability(logits(i, 2 * c), logits(i, 2 * c + 1));
      out[i][c] = {1.0 - p1, p1};
    }
  }
  return out;
}

// Checkpoint: "GSCK" | u32 version | config | u32 count | (name, rank, dims, values)*
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const ModelConfig& cfg, const num::ParameterSet& params) {
  check_parameters(cfg, params);
  io::ByteWriter w;
  w.raw("GSCK", 4);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(cfg.variant));
  w.i32(cfg.hidden);
  w.i32(cfg.heads);
  w.i32(cfg.encoder_layers);
  w.i32(cfg.decoder_iters);
  w.f64(cfg.dropout);
  w.f64(cfg.eps1);
  w.f64(cfg.eps2);
  for (double g : cfg.gamma) w.f64(g);
  for (int t : cfg.theta_max) w.i32(t);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.i32(d);
    for (double v : t.values) w.f64(v);
  }
  const std::string body = w.bytes();
  io::ByteWriter out;
  out.raw(body.data(), body.size());
  out.u32(io::crc32_of(body));
  return out.bytes();
}

inline std::pair<ModelConfig, num::ParameterSet> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "GSCK") != 0) throw DatasetError("not a checkpoint file (bad magic)");
  const std::string body = bytes.substr(0, bytes.size() - 4);
  io::ByteReader tail(bytes.data() + bytes.size() - 4, 4, "checkpoint");
  if (tail.u32() != io::crc32_of(body)) throw DatasetError("checkpoint checksum mismatch");
  io::ByteReader r(body.data() + 4, body.size() - 4, "checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DatasetError("unsupported checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  const auto variant = r.u8();
  if (variant >= kVariants.size()) throw DatasetError("checkpoint names an unknown variant");
  cfg.variant = static_cast<Variant>(variant);
  cfg.hidden = r.i32();
  cfg.heads = r.i32();
  cfg.encoder_layers = r.i32();
  cfg.decoder_iters = r.i32();
  cfg.dropout = r.f64();
  cfg.eps1 = r.f64();
  cfg.eps2 = r.f64();
  for (double& g : cfg.gamma) g = r.f64();
  for (int& t : cfg.theta_max) t = r.i32();
  num::ParameterSet params;
  const std::size_t count = r.count(4);
  for (std::size_t i = 0; i < count; ++i) {
    std::string name = r.str();
    std::vector<int> shape(r.count(4));
    for (int& d : shape) {
      d = r.i32();
      if (d < 0) throw DatasetError("negative dimension in checkpoint tensor " + name);
    }
    std::vector<double> values(num::Tensor::count(shape));
    for (double& v : values) v = r.f64();
    params.emplace(std::move(name), num::Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw DatasetError("trailing bytes in checkpoint");
  try {
    check_parameters(cfg, params);
  } catch (const ConfigError& e) {
    throw DatasetError(std::string("checkpoint does not match its configuration: ") + e.what());
  }
  return {cfg, std::move(params)};
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const num::ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(cfg, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError("write failed for " + path.string());
}

inline std::pair<ModelConfig, num::ParameterSet> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace gsid
