// Copyright 2026 The petridish Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Ingestion (MNIST IDX files, the character corpus) and persistence (ground
// truth records, curves, run directories).

#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "petridish/autodiff.hpp"
#include "petridish/error.hpp"
#include "petridish/motif.hpp"

#ifndef PETRIDISH_DATA_DIR
#define PETRIDISH_DATA_DIR "data"
#endif

namespace petridish {

namespace fs = std::filesystem;

/// %.17g: enough digits to round-trip any double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataUnavailable("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// IDX.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> payload;
};

/// Parses an unsigned-byte IDX file. The header must announce exactly as
/// many bytes as follow it.
inline IdxFile parse_idx(const std::string& bytes, const std::string& name = "idx") {
  if (bytes.size() < 4) throw TruncatedPayload(name + ": shorter than an IDX header");
  auto be32 = [&](std::size_t off) {
    return std::uint32_t(std::uint8_t(bytes[off])) << 24 | std::uint32_t(std::uint8_t(bytes[off + 1])) << 16 |
           std::uint32_t(std::uint8_t(bytes[off + 2])) << 8 | std::uint32_t(std::uint8_t(bytes[off + 3]));
  };
  IdxFile f;
  f.magic = be32(0);
  if (f.magic != kIdxImageMagic && f.magic != kIdxLabelMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08x", f.magic);
    throw BadMagic(name + buf);
  }
  const std::size_t rank = f.magic & 0xff;
  if (bytes.size() < 4 + 4 * rank) throw TruncatedPayload(name + ": header cut short");
  std::size_t expected = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    f.dims.push_back(be32(4 + 4 * d));
    expected *= f.dims.back();
  }
  const std::size_t have = bytes.size() - 4 - 4 * rank;
  if (have < expected)
    throw TruncatedPayload(name + ": header promises " + std::to_string(expected) + " bytes, file has " +
                           std::to_string(have));
  if (have > expected)
    throw DimensionMismatch(name + ": " + std::to_string(have - expected) +
                            " bytes beyond the announced dimensions");
  f.payload.assign(bytes.begin() + std::ptrdiff_t(4 + 4 * rank), bytes.end());
  return f;
}

inline std::string encode_idx(std::uint32_t magic, const std::vector<std::size_t>& dims,
                              const std::vector<std::uint8_t>& payload) {
  std::string out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(char((v >> s) & 0xff));
  };
  put(magic);
  for (auto d : dims) put(std::uint32_t(d));
  out.append(payload.begin(), payload.end());
  return out;
}

/// Images as (n, rows*cols) in [0, 1] or labels as (n,) class indices,
/// depending on the magic number.
inline Array read_idx(const fs::path& path) {
  const IdxFile f = parse_idx(read_file(path), path.string());
  if (f.magic == kIdxImageMagic) {
    if (f.dims.size() != 3) throw DimensionMismatch(path.string() + ": images must be n x rows x cols");
    Array a({f.dims[0], f.dims[1] * f.dims[2]});
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] = f.payload[i] / 255.0;
    return a;
  }
  if (f.dims.size() != 1) throw DimensionMismatch(path.string() + ": labels must be one-dimensional");
  Array a({f.dims[0]});
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (f.payload[i] > 9) throw DimensionMismatch(path.string() + ": label out of range 0-9");
    a.data[i] = f.payload[i];
  }
  return a;
}

struct LabeledImages {
  Array images;             ///< (n, 784)
  std::vector<int> labels;  ///< n
};

struct MnistData {
  LabeledImages train, valid;
};

/// MNIST directory: explicit argument, else $PETRIDISH_MNIST_DIR, else the
/// bundled subset.
inline fs::path mnist_dir(const std::string& configured = "") {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("PETRIDISH_MNIST_DIR"); env && *env) return env;
  return fs::path(PETRIDISH_DATA_DIR) / "mnist";
}

inline LabeledImages read_labeled(const fs::path& images, const fs::path& labels) {
  LabeledImages out{read_idx(images), {}};
  const Array l = read_idx(labels);
  if (l.shape[0] != out.images.shape[0])
    throw DimensionMismatch(images.string() + " and " + labels.string() + " disagree on sample count");
  for (double v : l.data) out.labels.push_back(int(v));
  return out;
}

/// Loads train-* and t10k-* files; the latter serve as validation data.
inline MnistData load_mnist(const std::string& dir = "") {
  const fs::path d = mnist_dir(dir);
  for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                        "t10k-labels-idx1-ubyte"})
    if (!fs::exists(d / f))
      throw DataUnavailable("MNIST file " + (d / f).string() +
                            " not found; set PETRIDISH_MNIST_DIR or mnist_dir in the config");
  return {read_labeled(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte"),
          read_labeled(d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte")};
}

// ---------------------------------------------------------------------------
// Character corpus.

struct Corpus {
  std::string text;
  std::string vocab;  ///< sorted distinct characters
  std::vector<int> ids;

  std::size_t vocab_size() const { return vocab.size(); }
};

inline Corpus make_corpus(std::string text) {
  if (text.size() < 2) throw DataUnavailable("corpus is empty");
  Corpus c;
  c.text = std::move(text);
  std::vector<bool> seen(256, false);
  for (unsigned char ch : c.text) seen[ch] = true;
  int lookup[256];
  for (int i = 0; i < 256; ++i)
    if (seen[std::size_t(i)]) {
      lookup[i] = int(c.vocab.size());
      c.vocab.push_back(char(i));
    }
  c.ids.reserve(c.text.size());
  for (unsigned char ch : c.text) c.ids.push_back(lookup[ch]);
  return c;
}

inline fs::path corpus_path(const std::string& configured = "") {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("PETRIDISH_CORPUS"); env && *env) return env;
  return fs::path(PETRIDISH_DATA_DIR) / "corpus" / "corpus.txt";
}

inline Corpus load_corpus(const std::string& path = "") { return make_corpus(read_file(corpus_path(path))); }

// ---------------------------------------------------------------------------
// Ground-truth records.

enum class MetricKind { accuracy, loss };

inline const char* to_string(MetricKind k) { return k == MetricKind::accuracy ? "accuracy" : "loss"; }

struct GroundTruthRecord {
  Motif motif = Motif::slope(1.0);
  double metric = 0.0;
  MetricKind metric_kind = MetricKind::loss;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  /// Seeds actually trained (one per repeat) when the metric is a mean.
  std::vector<std::uint64_t> repeat_seeds;

  /// Lower is better; accuracies become 1 - accuracy.
  double loss() const { return metric_kind == MetricKind::accuracy ? 1.0 - metric : metric; }

  nlohmann::json to_json() const {
    return {{"motif", motif.to_json()},
            {"metric", metric},
            {"metric_kind", to_string(metric_kind)},
            {"seed", seed},
            {"config_fingerprint", config_fingerprint},
            {"repeat_seeds", repeat_seeds}};
  }
  static GroundTruthRecord from_json(const nlohmann::json& j) {
    GroundTruthRecord r;
    r.motif = Motif::from_json(j.at("motif"));
    r.metric = j.at("metric").get<double>();
    const auto kind = j.at("metric_kind").get<std::string>();
    if (kind != "accuracy" && kind != "loss") throw Error("unknown metric kind '" + kind + "'");
    r.metric_kind = kind == "accuracy" ? MetricKind::accuracy : MetricKind::loss;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.repeat_seeds = j.value("repeat_seeds", std::vector<std::uint64_t>{});
    return r;
  }

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

inline std::string records_to_jsonl(const std::vector<GroundTruthRecord>& records) {
  std::string out;
  for (const auto& r : records) out += r.to_json().dump() + "\n";
  return out;
}

inline std::vector<GroundTruthRecord> records_from_jsonl(const std::string& text) {
  std::vector<GroundTruthRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(GroundTruthRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error("ledger line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curves.

struct Curve {
  std::string series;
  std::vector<double> x, y;

  void validate() const {
    if (x.empty()) throw EmptySeries("curve '" + series + "' has no points");
    if (x.size() != y.size()) throw ShapeError("curve '" + series + "': x and y lengths differ");
    for (std::size_t i = 1; i < x.size(); ++i)
      if (!(x[i] > x[i - 1])) throw Error("curve '" + series + "': x must be strictly increasing");
  }

  friend bool operator==(const Curve&, const Curve&) = default;
};

/// Long-format CSV: series,x,y.
inline std::string curves_to_csv(const std::vector<Curve>& curves) {
  if (curves.empty()) throw EmptySeries("no curves to emit");
  std::string out = "series,x,y\n";
  for (const auto& c : curves) {
    c.validate();
    if (c.series.find_first_of(",\n\"") != std::string::npos)
      throw Error("series label '" + c.series + "' cannot contain commas, quotes or newlines");
    for (std::size_t i = 0; i < c.x.size(); ++i)
      out += c.series + "," + format_double(c.x[i]) + "," + format_double(c.y[i]) + "\n";
  }
  return out;
}

inline std::vector<Curve> curves_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "series,x,y") throw Error("curve CSV lacks its header");
  std::vector<Curve> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) throw Error("malformed curve row: " + line);
    const std::string series = line.substr(0, a);
    if (out.empty() || out.back().series != series) out.push_back({series, {}, {}});
    out.back().x.push_back(std::strtod(line.substr(a + 1, b - a - 1).c_str(), nullptr));
    out.back().y.push_back(std::strtod(line.substr(b + 1).c_str(), nullptr));
  }
  for (const auto& c : out) c.validate();
  if (out.empty()) throw EmptySeries("curve CSV has no rows");
  return out;
}

inline nlohmann::json curves_to_json(const std::vector<Curve>& curves) {
  if (curves.empty()) throw EmptySeries("no curves to emit");
  auto j = nlohmann::json::array();
  for (const auto& c : curves) {
    c.validate();
    j.push_back({{"series", c.series}, {"x", c.x}, {"y", c.y}});
  }
  return j;
}

inline std::vector<Curve> curves_from_json(const nlohmann::json& j) {
  std::vector<Curve> out;
  for (const auto& e : j) {
    Curve c{e.at("series").get<std::string>(), e.at("x").get<std::vector<double>>(),
            e.at("y").get<std::vector<double>>()};
    c.validate();
    out.push_back(std::move(c));
  }
  if (out.empty()) throw EmptySeries("curve JSON has no series");
  return out;
}

enum class CurveFormat { csv, json };

inline void emit_curve(const fs::path& path, const std::vector<Curve>& curves, CurveFormat format) {
  write_file(path, format == CurveFormat::csv ? curves_to_csv(curves) : curves_to_json(curves).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Run directories: runs/<id>/{config.json, ledger.jsonl, petri_model.json, curves/*.csv}.

struct RunArtifact {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<GroundTruthRecord> records;
  std::optional<nlohmann::json> petri_model;
  std::map<std::string, std::vector<Curve>> curves;

  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    nlohmann::json cfg = {{"config", config}, {"seeds", seeds}};
    write_file(dir / "config.json", cfg.dump(2) + "\n");
    write_file(dir / "ledger.jsonl", records_to_jsonl(records));
    if (petri_model) write_file(dir / "petri_model.json", petri_model->dump() + "\n");
    for (const auto& [name, cs] : curves) emit_curve(dir / "curves" / (name + ".csv"), cs, CurveFormat::csv);
  }

  static RunArtifact load(const fs::path& dir) {
    RunArtifact a;
    const auto cfg = nlohmann::json::parse(read_file(dir / "config.json"));
    a.config = cfg.at("config");
    a.seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
    a.records = records_from_jsonl(read_file(dir / "ledger.jsonl"));
    if (fs::exists(dir / "petri_model.json"))
      a.petri_model = nlohmann::json::parse(read_file(dir / "petri_model.json"));
    if (fs::exists(dir / "curves"))
      for (const auto& e : fs::directory_iterator(dir / "curves"))
        if (e.path().extension() == ".csv") a.curves[e.path().stem().string()] = curves_from_csv(read_file(e.path()));
    return a;
  }

  friend bool operator==(const RunArtifact&, const RunArtifact&) = default;
};

}  // namespace petridish
