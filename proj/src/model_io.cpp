// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/model_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

namespace csc::io {

using json = nlohmann::json;

std::string_view to_string(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::io: return "io";
    case FormatErrorCode::bad_magic: return "bad_magic";
    case FormatErrorCode::truncated: return "truncated";
    case FormatErrorCode::bad_header: return "bad_header";
    case FormatErrorCode::inconsistent: return "inconsistent";
    case FormatErrorCode::unknown_dtype: return "unknown_dtype";
    case FormatErrorCode::missing_tensor: return "missing_tensor";
  }
  return "?";
}

FormatError::FormatError(FormatErrorCode code, const std::string& message)
    : Error(std::string(to_string(code)) + ": " + message), code_(code) {}

namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', '1'};
constexpr std::size_t kPrefix = 12;

std::size_t dtype_bytes(DType d) { return d == DType::f32 ? 4 : 8; }
std::string_view dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_values(std::vector<std::uint8_t>& out, const Tensor& t, DType dtype) {
  for (double x : t.data()) {
    if (dtype == DType::f64) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      put_u64(out, bits);
    } else {
      const float f = static_cast<float>(x);
      if (static_cast<double>(f) != x && std::isfinite(x)) {
        throw FormatError(FormatErrorCode::inconsistent, "value not representable as f32");
      }
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
}

Tensor read_values(const std::uint8_t* p, const Shape& shape, DType dtype) {
  Tensor t(shape);
  auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (dtype == DType::f64) {
      const std::uint64_t bits = get_u64(p + 8 * i);
      std::memcpy(&data[i], &bits, 8);
    } else {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
      float f;
      std::memcpy(&f, &bits, 4);
      data[i] = f;
    }
  }
  return t;
}

std::size_t align8(std::size_t n) { return (n + 7) / 8 * 8; }

}  // namespace

std::vector<std::uint8_t> encode_container(const Container& c) {
  json header = json::object();
  header["__config__"] = c.config;
  std::size_t offset = 0;
  for (const auto& [name, st] : c.tensors) {
    if (name == "__config__") throw FormatError(FormatErrorCode::bad_header, "tensor name '__config__' is reserved");
    header[name] = {{"dtype", dtype_name(st.dtype)}, {"shape", st.value.shape()}, {"offset", offset}};
    offset = align8(offset + st.value.size() * dtype_bytes(st.dtype));
  }
  std::string text = header.dump();
  text.append(align8(kPrefix + text.size()) - kPrefix - text.size(), ' ');

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload = out.size();
  for (const auto& [name, st] : c.tensors) {
    append_values(out, st.value, st.dtype);
    out.resize(payload + align8(out.size() - payload), 0);
  }
  return out;
}

Container decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw FormatError(FormatErrorCode::truncated, "file shorter than the magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(FormatErrorCode::bad_magic, "expected \"CSC1\"");
  if (bytes.size() < kPrefix) throw FormatError(FormatErrorCode::truncated, "file shorter than the header length");
  const std::uint64_t header_len = get_u64(bytes.data() + 4);
  if (header_len > bytes.size() - kPrefix) {
    throw FormatError(FormatErrorCode::truncated, "header length " + std::to_string(header_len) + " past end of file");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<long>(kPrefix + header_len));
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorCode::bad_header, e.what());
  }
  if (!header.is_object()) throw FormatError(FormatErrorCode::bad_header, "header is not a JSON object");

  const std::size_t payload = kPrefix + header_len;
  if (payload % 8 != 0) throw FormatError(FormatErrorCode::inconsistent, "payload start not 8-byte aligned");
  const std::size_t payload_size = bytes.size() - payload;

  Container c;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__config__") {
      c.config = entry;
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") || !entry.contains("offset") ||
        !entry["dtype"].is_string() || !entry["shape"].is_array() || !entry["offset"].is_number_unsigned()) {
      throw FormatError(FormatErrorCode::bad_header, "malformed entry for '" + name + "'");
    }
    const std::string dt = entry["dtype"];
    DType dtype;
    if (dt == "f32") {
      dtype = DType::f32;
    } else if (dt == "f64") {
      dtype = DType::f64;
    } else {
      throw FormatError(FormatErrorCode::unknown_dtype, "'" + name + "' has dtype '" + dt + "'");
    }
    Shape shape;
    for (const json& e : entry["shape"]) {
      if (!e.is_number_unsigned()) throw FormatError(FormatErrorCode::bad_header, "bad shape for '" + name + "'");
      shape.push_back(e.get<std::size_t>());
    }
    const std::size_t offset = entry["offset"].get<std::size_t>();
    const std::size_t n = shape_numel(shape) * dtype_bytes(dtype);
    if (offset % 8 != 0) throw FormatError(FormatErrorCode::inconsistent, "'" + name + "' offset not 8-byte aligned");
    if (offset > payload_size || n > payload_size - offset) {
      throw FormatError(FormatErrorCode::truncated, "'" + name + "' extends past end of file");
    }
    spans.emplace_back(offset, offset + n);
    c.tensors[name] = {dtype, read_values(bytes.data() + payload + offset, shape, dtype)};
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) throw FormatError(FormatErrorCode::inconsistent, "overlapping tensors");
  }
  return c;
}

void write_container(const std::string& path, const Container& c) {
  const std::vector<std::uint8_t> bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorCode::io, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorCode::io, "write to '" + path + "' failed");
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::io, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(FormatErrorCode::io, "read from '" + path + "' failed");
  try {
    return decode_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path + ": " + std::string(e.what()).substr(to_string(e.code()).size() + 2));
  }
}

namespace {

std::string_view norm_name(NormKind k) { return k == NormKind::layernorm ? "layernorm" : "rmsnorm"; }
std::string_view activation_name(Activation a) { return a == Activation::silu ? "silu" : "gelu"; }
std::string_view positional_name(PositionalEncoding p) {
  switch (p) {
    case PositionalEncoding::none: return "none";
    case PositionalEncoding::learned_absolute: return "learned_absolute";
    case PositionalEncoding::rotary: return "rotary";
  }
  return "?";
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config: missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: '") + key + "' has the wrong type");
  }
}

std::size_t count_field(const json& j, const char* key) {
  if (j.contains(key) && !j.at(key).is_number_unsigned()) {
    throw ConfigError(std::string("config: '") + key + "' must be a non-negative integer");
  }
  return field<std::size_t>(j, key);
}

}  // namespace

json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},
          {"d_model", c.d_model},
          {"d_ff", c.d_ff},
          {"n_heads", c.n_heads},
          {"d_query", c.d_query},
          {"d_attn", c.d_attn},
          {"vocab_size", c.vocab_size},
          {"max_positions", c.max_positions},
          {"norm", norm_name(c.norm)},
          {"activation", activation_name(c.activation)},
          {"positional", positional_name(c.positional)},
          {"precision", to_string(c.precision)},
          {"norm_eps", c.norm_eps},
          {"rope_base", c.rope_base}};
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected an object");
  ModelConfig c;
  c.n_layers = count_field(j, "n_layers");
  c.d_model = count_field(j, "d_model");
  c.d_ff = count_field(j, "d_ff");
  c.n_heads = count_field(j, "n_heads");
  c.d_query = count_field(j, "d_query");
  c.d_attn = count_field(j, "d_attn");
  c.vocab_size = count_field(j, "vocab_size");
  c.max_positions = count_field(j, "max_positions");

  const auto norm = field<std::string>(j, "norm");
  if (norm == "layernorm") {
    c.norm = NormKind::layernorm;
  } else if (norm == "rmsnorm") {
    c.norm = NormKind::rmsnorm;
  } else {
    throw ConfigError("config: unknown norm '" + norm + "'");
  }
  const auto act = field<std::string>(j, "activation");
  if (act == "silu") {
    c.activation = Activation::silu;
  } else if (act == "gelu") {
    c.activation = Activation::gelu;
  } else {
    throw ConfigError("config: unknown activation '" + act + "'");
  }
  const auto pos = field<std::string>(j, "positional");
  if (pos == "none") {
    c.positional = PositionalEncoding::none;
  } else if (pos == "learned_absolute") {
    c.positional = PositionalEncoding::learned_absolute;
  } else if (pos == "rotary") {
    c.positional = PositionalEncoding::rotary;
  } else {
    throw ConfigError("config: unknown positional encoding '" + pos + "'");
  }
  const auto prec = parse_precision(field<std::string>(j, "precision"));
  if (!prec) throw ConfigError("config: precision must be f32 or f64");
  c.precision = *prec;
  c.norm_eps = field<double>(j, "norm_eps");
  c.rope_base = field<double>(j, "rope_base");
  c.validate();
  return c;
}

Container model_container(const ModelWeights& weights) {
  weights.validate();
  Container c;
  c.config = config_to_json(weights.config);
  const DType dtype = weights.config.precision == Precision::f32 ? DType::f32 : DType::f64;
  for (const auto& [name, t] : weights.named_tensors()) c.tensors[name] = {dtype, *t};
  return c;
}

ModelWeights model_from_container(const Container& c) {
  ModelConfig config;
  try {
    config = config_from_json(c.config);
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorCode::bad_header, e.what());
  }
  ModelWeights w = ModelWeights::zeros(config);
  std::set<std::string> expected;
  for (auto& [name, t] : w.named_tensors()) {
    expected.insert(name);
    auto it = c.tensors.find(name);
    if (it == c.tensors.end()) throw FormatError(FormatErrorCode::missing_tensor, "model file lacks '" + name + "'");
    if (it->second.value.shape() != t->shape()) {
      throw FormatError(FormatErrorCode::inconsistent, "'" + name + "' has shape " +
                                                           shape_string(it->second.value.shape()) + ", config implies " +
                                                           shape_string(t->shape()));
    }
    *t = it->second.value;
  }
  for (const auto& [name, st] : c.tensors) {
    if (!expected.count(name)) throw FormatError(FormatErrorCode::inconsistent, "unexpected tensor '" + name + "'");
  }
  return w;
}

void save_model(const ModelWeights& weights, const std::string& path) { write_container(path, model_container(weights)); }

ModelWeights load_model(const std::string& path) {
  const Container c = read_container(path);
  try {
    return model_from_container(c);
  } catch (const FormatError& e) {
    throw FormatError(e.code(), path + ": " + std::string(e.what()).substr(to_string(e.code()).size() + 2));
  }
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t tensor_checksum(const Tensor& t, DType dtype) {
  std::vector<std::uint8_t> bytes;
  append_values(bytes, t, dtype);
  return fnv1a64(bytes.data(), bytes.size());
}

std::vector<std::pair<std::string, std::uint64_t>> tensor_checksums(const ModelWeights& weights) {
  const DType dtype = weights.config.precision == Precision::f32 ? DType::f32 : DType::f64;
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const auto& [name, t] : weights.named_tensors()) out.emplace_back(name, tensor_checksum(*t, dtype));
  return out;
}

std::uint64_t model_checksum(const ModelWeights& weights) {
  const DType dtype = weights.config.precision == Precision::f32 ? DType::f32 : DType::f64;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::string config = config_to_json(weights.config).dump();
  h = fnv1a64(reinterpret_cast<const std::uint8_t*>(config.data()), config.size(), h);
  for (const auto& [name, t] : weights.named_tensors()) {
    h = fnv1a64(reinterpret_cast<const std::uint8_t*>(name.data()), name.size(), h);
    std::vector<std::uint8_t> bytes;
    append_values(bytes, *t, dtype);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    s = z ^ (z >> 31);
  }
}

std::uint64_t Rng::next() {
  auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelWeights random_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelWeights w = ModelWeights::zeros(config);
  Rng rng(seed);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (auto& [name, t] : w.named_tensors()) {
    const bool gain = ends_with(name, ".gain");
    const bool embedding = name == "tok_emb" || name == "pos_emb";
    const bool bias = ends_with(name, ".bias");
    for (double& v : t->data()) {
      const double u = rng.uniform(-0.1, 0.1);
      v = gain ? 1.0 + u : (embedding || bias) ? u : u * proj_scale;
      if (config.precision == Precision::f32) v = static_cast<float>(v);
    }
  }
  return w;
}

std::vector<EdgeScoreMatrix> ScoreFile::matrices(double alpha) const {
  std::vector<EdgeScoreMatrix> out;
  const std::size_t block = n_sources * n_destinations;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].alpha != alpha) continue;
    EdgeScoreMatrix m;
    m.sample_id = rows[r].sample_id;
    m.method = method;
    m.n_sources = n_sources;
    m.n_destinations = n_destinations;
    m.t_cut = rows[r].t_cut;
    m.loss = rows[r].loss;
    const auto data = edge_scores.data();
    m.scores.assign(data.begin() + static_cast<long>(r * block), data.begin() + static_cast<long>((r + 1) * block));
    out.push_back(std::move(m));
  }
  return out;
}

ScoreFile make_score_file(std::string model, Method method,
                          const std::vector<std::pair<double, std::vector<EdgeScoreMatrix>>>& by_alpha,
                          std::size_t n_sources, std::size_t n_destinations) {
  ScoreFile f;
  f.model = std::move(model);
  f.method = method;
  f.n_sources = n_sources;
  f.n_destinations = n_destinations;
  std::vector<double> data;
  for (const auto& [alpha, mats] : by_alpha) {
    for (const EdgeScoreMatrix& m : mats) {
      if (m.n_sources != n_sources || m.n_destinations != n_destinations) {
        throw DimensionError("score file: matrix for '" + m.sample_id + "' has the wrong extents");
      }
      f.rows.push_back({m.sample_id, alpha, m.t_cut, m.loss});
      data.insert(data.end(), m.scores.begin(), m.scores.end());
    }
  }
  f.edge_scores = Tensor({f.rows.size(), n_sources, n_destinations}, std::move(data));
  return f;
}

std::string sidecar_json(const ScoreFile& scores) {
  json rows = json::array();
  for (const ScoreRow& r : scores.rows) {
    rows.push_back({{"sample_id", r.sample_id}, {"alpha", r.alpha}, {"T_cut", r.t_cut}, {"loss", r.loss}});
  }
  json j = {{"model", scores.model},
            {"method", to_string(scores.method)},
            {"n_sources", scores.n_sources},
            {"n_destinations", scores.n_destinations},
            {"tensor", "edge_scores"},
            {"rows", rows}};
  return j.dump(2) + "\n";
}

void save_scores(const ScoreFile& scores, const std::string& path) {
  Container c;
  c.config = {{"kind", "edge_scores"}, {"model", scores.model}, {"method", to_string(scores.method)}};
  c.tensors["edge_scores"] = {DType::f64, scores.edge_scores};
  write_container(path, c);
  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw FormatError(FormatErrorCode::io, "cannot open '" + path + ".json' for writing");
  side << sidecar_json(scores);
  if (!side) throw FormatError(FormatErrorCode::io, "write to '" + path + ".json' failed");
}

ScoreFile load_scores(const std::string& path) {
  const Container c = read_container(path);
  auto it = c.tensors.find("edge_scores");
  if (it == c.tensors.end()) throw FormatError(FormatErrorCode::missing_tensor, path + ": no 'edge_scores'");
  std::ifstream side(path + ".json");
  if (!side) throw FormatError(FormatErrorCode::io, "cannot open sidecar '" + path + ".json'");
  json j;
  try {
    j = json::parse(side);
    ScoreFile f;
    f.model = j.at("model").get<std::string>();
    const auto method = parse_method(j.at("method").get<std::string>());
    if (!method) throw FormatError(FormatErrorCode::bad_header, path + ".json: unknown method");
    f.method = *method;
    f.n_sources = j.at("n_sources").get<std::size_t>();
    f.n_destinations = j.at("n_destinations").get<std::size_t>();
    for (const json& r : j.at("rows")) {
      f.rows.push_back({r.at("sample_id").get<std::string>(), r.at("alpha").get<double>(),
                        r.at("T_cut").get<std::size_t>(), r.at("loss").get<double>()});
    }
    f.edge_scores = it->second.value;
    if (f.edge_scores.shape() != Shape{f.rows.size(), f.n_sources, f.n_destinations}) {
      throw FormatError(FormatErrorCode::inconsistent, path + ": edge_scores shape disagrees with the sidecar");
    }
    return f;
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorCode::bad_header, path + ".json: " + e.what());
  }
}

}  // namespace csc::io
