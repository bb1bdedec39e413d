#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "gsid/anomaly.hpp"
#include "gsid/bytes.hpp"
#include "gsid/graph.hpp"
#include "json.hpp"

// Binary dataset file:
//
//   header : "GSDS" | u32 version
//   record : u64 payload length | payload | u32 CRC-32 of payload
//
// Records repeat until end of file. All integers are little-endian, doubles
// are IEEE-754 bit patterns. One record holds one graph and, optionally, an
// injected observation with its labels.

namespace gsid {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr char kDatasetMagic[4] = {'G', 'S', 'D', 'S'};

struct Sample {
  BipartiteGraph graph;
  std::optional<LabeledSample> labeled;

  friend bool operator==(const Sample&, const Sample&) = default;
};

namespace io {

inline void put_opt(ByteWriter& w, const std::optional<int>& v) {
  w.u8(v.has_value());
  if (v) w.i32(*v);
}

inline std::optional<int> get_opt(ByteReader& r) {
  if (r.u8()) return r.i32();
  return std::nullopt;
}

inline void put_matrix(ByteWriter& w, const FeatureMatrix& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (const auto& row : m) {
    for (double x : row) w.f64(x);
  }
}

inline FeatureMatrix get_matrix(ByteReader& r) {
  FeatureMatrix m(r.count(8 * kFeatureDim));
  for (auto& row : m) {
    for (double& x : row) x = r.f64();
  }
  return m;
}

inline void put_labels(ByteWriter& w, const std::vector<LabelRow>& rows) {
  w.u32(static_cast<std::uint32_t>(rows.size()));
  for (const auto& row : rows) {
    for (auto b : row) w.u8(b);
  }
}

inline std::vector<LabelRow> get_labels(ByteReader& r) {
  std::vector<LabelRow> rows(r.count(kParamCount));
  for (auto& row : rows) {
    for (auto& b : row) b = r.u8();
  }
  return rows;
}

inline std::string encode_sample(const Sample& s) {
  ByteWriter w;
  const auto& g = s.graph;
  w.u64(g.seed);
  w.u32(static_cast<std::uint32_t>(g.entities.size()));
  for (const auto& e : g.entities) {
    w.i32(e.index);
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.str(e.source_id);
  }
  w.u32(static_cast<std::uint32_t>(g.facts.size()));
  for (const auto& f : g.facts) {
    w.i32(f.index);
    w.u8(static_cast<std::uint8_t>(f.predicate));
    w.u32(static_cast<std::uint32_t>(f.args.size()));
    for (int a : f.args) w.i32(a);
    w.i32(f.holds);
    put_opt(w, f.local_pref);
    put_opt(w, f.as_path_len);
    put_opt(w, f.med);
    put_opt(w, f.ospf_weight);
  }
  w.u32(static_cast<std::uint32_t>(g.edges.size()));
  for (const auto& e : g.edges) {
    w.i32(e.fact);
    w.i32(e.entity);
    w.i32(e.type);
  }
  put_matrix(w, g.features);
  w.u8(g.augmented() && g.node_count() > 0);
  w.u8(s.labeled.has_value());
  if (s.labeled) {
    put_matrix(w, s.labeled->observed);
    put_matrix(w, s.labeled->truth);
    put_labels(w, s.labeled->labels);
    put_labels(w, s.labeled->eligible);
  }
  return w.bytes();
}

inline Sample decode_sample(ByteReader& r) {
  Sample s;
  auto& g = s.graph;
  g.seed = r.u64();
  g.entities.resize(r.count(9));
  for (auto& e : g.entities) {
    e.index = r.i32();
    const auto kind = r.u8();
    if (kind > 3) throw DatasetError("unknown entity kind " + std::to_string(kind));
    e.kind = static_cast<EntityKind>(kind);
    e.source_id = r.str();
  }
  g.facts.resize(r.count(13));
  for (auto& f : g.facts) {
    f.index = r.i32();
    f.predicate = static_cast<Predicate>(r.u8());
    f.args.resize(r.count(4));
    for (int& a : f.args) a = r.i32();
    f.holds = r.i32();
    f.local_pref = get_opt(r);
    f.as_path_len = get_opt(r);
    f.med = get_opt(r);
    f.ospf_weight = get_opt(r);
  }
  g.edges.resize(r.count(12));
  for (auto& e : g.edges) {
    e.fact = r.i32();
    e.entity = r.i32();
    e.type = r.i32();
  }
  g.features = get_matrix(r);
  const bool augmented = r.u8() != 0;
  try {
    check_graph(g);
  } catch (const GraphError& e) {
    throw DatasetError(std::string("invalid graph in record: ") + e.what());
  }
  if (augmented) g = augment(std::move(g));
  if (r.u8()) {
    LabeledSample l;
    l.observed = get_matrix(r);
    l.truth = get_matrix(r);
    l.labels = get_labels(r);
    l.eligible = get_labels(r);
    s.labeled = std::move(l);
  }
  if (!r.done()) throw DatasetError("trailing bytes in record");
  return s;
}

}  // namespace io

inline std::string encode_dataset(const std::vector<Sample>& samples) {
  io::ByteWriter w;
  w.raw(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  for (const auto& s : samples) {
    const std::string payload = io::encode_sample(s);
    w.u64(payload.size());
    w.raw(payload.data(), payload.size());
    w.u32(io::crc32_of(payload));
  }
  return w.bytes();
}

inline std::vector<Sample> decode_dataset(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kDatasetMagic, 4) != 0) {
    throw DatasetError("not a dataset file (bad magic)");
  }
  io::ByteReader header(bytes.data() + 4, 4, "header");
  const std::uint32_t version = header.u32();
  if (version != kDatasetVersion) {
    throw DatasetError("unsupported dataset version " + std::to_string(version) + " (expected " +
                       std::to_string(kDatasetVersion) + ")");
  }
  std::vector<Sample> out;
  std::size_t pos = 8;
  while (pos < bytes.size()) {
    const std::string ctx = "record " + std::to_string(out.size());
    io::ByteReader len_reader(bytes.data() + pos, bytes.size() - pos, ctx);
    const std::uint64_t len = len_reader.u64();
    pos += 8;
    if (bytes.size() - pos < len + 4) throw DatasetError(ctx + ": truncated");
    const std::string payload = bytes.substr(pos, len);
    io::ByteReader crc_reader(bytes.data() + pos + len, 4, ctx);
    if (crc_reader.u32() != io::crc32_of(payload)) throw DatasetError(ctx + ": checksum mismatch");
    io::ByteReader r(payload.data(), payload.size(), ctx);
    out.push_back(io::decode_sample(r));
    pos += len + 4;
  }
  return out;
}

inline void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_dataset(samples);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError("write failed for " + path.string());
}

inline std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

/// Debug export: one JSON object per line.
inline nlohmann::json sample_to_json(const Sample& s) {
  using nlohmann::json;
  const auto& g = s.graph;
  json j;
  j["seed"] = g.seed;
  json ents = json::array();
  for (const auto& e : g.entities) {
    ents.push_back({{"index", e.index}, {"kind", entity_kind_name(e.kind)}, {"id", e.source_id}});
  }
  j["entities"] = std::move(ents);
  json facts = json::array();
  for (const auto& f : g.facts) {
    json jf{{"index", f.index}, {"predicate", predicate_name(f.predicate)}, {"args", f.args}, {"holds", f.holds}};
    for (Param p : kParams) {
      if (auto v = f.param(p)) jf[std::string(param_name(p))] = *v;
    }
    facts.push_back(std::move(jf));
  }
  j["facts"] = std::move(facts);
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.fact, e.entity, e.type});
  j["edges"] = std::move(edges);
  j["features"] = g.features;
  if (s.labeled) {
    j["observed"] = s.labeled->observed;
    j["labels"] = s.labeled->labels;
    j["eligible"] = s.labeled->eligible;
  }
  return j;
}

inline void write_jsonl(const std::vector<Sample>& samples, std::ostream& out) {
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

}  // namespace gsid
