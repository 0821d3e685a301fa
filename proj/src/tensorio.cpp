// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "trisim/tensorio.hpp"

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "trisim/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace trisim {

static_assert(std::endian::native == std::endian::little,
              "array payloads are copied without byte swapping");

namespace {

constexpr std::uint8_t kMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y', 0x01, 0x00};
constexpr std::size_t kPreambleSize = 10;  // magic + 2-byte header length

std::size_t item_size(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

// Minimal reader for the Python-literal dict in the array header.
class HeaderParser {
 public:
  explicit HeaderParser(std::string_view text) : text_(text) {}

  void parse(std::string& descr, bool& fortran_order, std::vector<std::size_t>& shape) {
    bool have_descr = false, have_order = false, have_shape = false;
    expect('{');
    while (true) {
      skip_ws();
      if (peek() == '}') break;
      const std::string key = parse_string();
      expect(':');
      if (key == "descr") {
        descr = parse_string();
        have_descr = true;
      } else if (key == "fortran_order") {
        fortran_order = parse_bool();
        have_order = true;
      } else if (key == "shape") {
        shape = parse_shape();
        have_shape = true;
      } else {
        fail("unexpected key '" + key + "'");
      }
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      skip_ws();
      if (peek() != '}') fail("expected ',' or '}'");
    }
    if (!have_descr || !have_order || !have_shape) fail("missing descr/fortran_order/shape");
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("array header: " + what + " at offset " + std::to_string(pos_));
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string parse_string() {
    skip_ws();
    const char quote = peek();
    if (quote != '\'' && quote != '"') fail("expected string");
    const auto end = text_.find(quote, pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(text_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  bool parse_bool() {
    skip_ws();
    if (text_.substr(pos_, 4) == "True") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "False") {
      pos_ += 5;
      return false;
    }
    fail("expected True or False");
  }

  std::vector<std::size_t> parse_shape() {
    std::vector<std::size_t> dims;
    expect('(');
    while (true) {
      skip_ws();
      if (peek() == ')') {
        ++pos_;
        return dims;
      }
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected dimension");
      std::size_t v = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + static_cast<std::size_t>(text_[pos_] - '0');
        ++pos_;
      }
      dims.push_back(v);
      skip_ws();
      if (peek() == ',') ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string shape_literal(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s.empty() ? "scalar" : s;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

json read_manifest(const fs::path& dir, std::string_view kind) {
  const fs::path path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw ValidationError("missing " + path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (m.value("format_version", 0) != 1) {
    throw FormatError(path.string() + ": unsupported format_version");
  }
  if (m.value("kind", std::string{}) != kind) {
    throw ValidationError(path.string() + ": expected kind '" + std::string(kind) + "', found '" +
                          m.value("kind", std::string{}) + "'");
  }
  if (!m.contains("layers") || !m["layers"].is_array()) {
    throw FormatError(path.string() + ": missing layers list");
  }
  return m;
}

json manifest_header(std::string_view kind, const std::string& model_id,
                     const std::string& dataset_id) {
  return json{{"format_version", 1},
              {"kind", kind},
              {"model_id", model_id},
              {"dataset_id", dataset_id},
              {"layers", json::array()}};
}

Tensor load_manifest_entry(const fs::path& dir, const json& entry) {
  const std::string file = entry.at("file").get<std::string>();
  const fs::path path = dir / file;
  if (!fs::exists(path)) throw ValidationError("manifest lists missing file " + path.string());
  Tensor t = read_array(path);
  if (entry.contains("shape")) {
    const auto declared = entry["shape"].get<std::vector<std::size_t>>();
    if (declared != t.shape) {
      throw ValidationError(path.string() + ": manifest declares shape " + shape_text(declared) +
                            " but file holds " + shape_text(t.shape));
    }
  }
  return t;
}

json manifest_entry(const std::string& name, const std::string& file, const Tensor& t) {
  return json{{"name", name}, {"file", file}, {"shape", t.shape}};
}

namespace {

// Writes the manifest and arrays into a staged directory, then moves it into
// place.
template <typename WriteFn>
void write_directory(const fs::path& dir, WriteFn&& write_contents) {
  const fs::path staged = staging_path(dir);
  fs::remove_all(staged);
  fs::create_directories(staged);
  try {
    write_contents(staged);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staged, ec);
    throw;
  }
  commit_directory(staged, dir);
}

}  // namespace

std::string_view dtype_descr(DType dtype) { return dtype == DType::f32 ? "<f4" : "<f8"; }

std::size_t element_count(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor parse_array(std::span<const std::uint8_t> bytes, const ReadOptions& options) {
  if (bytes.size() < kPreambleSize || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("not an NPY v1.0 file (bad magic)");
  }
  const std::size_t header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
  if (bytes.size() < kPreambleSize + header_len) throw FormatError("truncated array header");
  const std::string_view header(reinterpret_cast<const char*>(bytes.data()) + kPreambleSize,
                                header_len);

  std::string descr;
  bool fortran_order = false;
  Tensor t;
  HeaderParser(header).parse(descr, fortran_order, t.shape);

  if (descr == "<f4") {
    t.dtype = DType::f32;
  } else if (descr == "<f8") {
    t.dtype = DType::f64;
  } else {
    throw UnsupportedDtypeError("unsupported dtype '" + descr + "' (expected '<f4' or '<f8')");
  }

  const std::size_t count = element_count(t.shape);
  const std::size_t width = item_size(t.dtype);
  const auto payload = bytes.subspan(kPreambleSize + header_len);
  if (payload.size() != count * width) {
    throw FormatError("payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                      std::to_string(count * width));
  }

  std::vector<double> raw(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (t.dtype == DType::f32) {
      float v;
      std::memcpy(&v, payload.data() + i * 4, 4);
      raw[i] = v;
    } else {
      std::memcpy(&raw[i], payload.data() + i * 8, 8);
    }
  }

  if (fortran_order && t.shape.size() > 1) {
    // Column-major payload: the first index varies fastest.
    t.data.resize(count);
    const std::size_t rank = t.shape.size();
    std::vector<std::size_t> f_stride(rank, 1);
    for (std::size_t k = 1; k < rank; ++k) f_stride[k] = f_stride[k - 1] * t.shape[k - 1];
    std::vector<std::size_t> index(rank, 0);
    for (std::size_t c = 0; c < count; ++c) {
      std::size_t f = 0;
      for (std::size_t k = 0; k < rank; ++k) f += index[k] * f_stride[k];
      t.data[c] = raw[f];
      for (std::size_t k = rank; k-- > 0;) {
        if (++index[k] < t.shape[k]) break;
        index[k] = 0;
      }
    }
  } else {
    t.data = std::move(raw);
  }

  if (!options.allow_non_finite) {
    const auto bad = std::find_if(t.data.begin(), t.data.end(), [](double v) { return !std::isfinite(v); });
    if (bad != t.data.end()) {
      throw ValidationError("non-finite value at flat index " +
                            std::to_string(std::distance(t.data.begin(), bad)));
    }
  }
  return t;
}

std::vector<std::uint8_t> serialize_array(const Tensor& t) {
  if (element_count(t.shape) != t.data.size()) {
    throw ValidationError("tensor shape " + shape_text(t.shape) + " does not match " +
                          std::to_string(t.data.size()) + " elements");
  }
  std::string header = "{'descr': '" + std::string(dtype_descr(t.dtype)) +
                       "', 'fortran_order': False, 'shape': " + shape_literal(t.shape) + ", }";
  const std::size_t unpadded = kPreambleSize + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());

  const std::size_t width = item_size(t.dtype);
  const std::size_t offset = out.size();
  out.resize(offset + t.data.size() * width);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (t.dtype == DType::f32) {
      const float v = static_cast<float>(t.data[i]);
      std::memcpy(out.data() + offset + i * 4, &v, 4);
    } else {
      std::memcpy(out.data() + offset + i * 8, &t.data[i], 8);
    }
  }
  return out;
}

Tensor read_array(const fs::path& path, const ReadOptions& options) {
  const auto bytes = read_bytes(path);
  try {
    return parse_array(bytes, options);
  } catch (const FormatError& e) {
    if (dynamic_cast<const UnsupportedDtypeError*>(&e)) {
      throw UnsupportedDtypeError(path.string() + ": " + e.what());
    }
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_array(const Tensor& t, const fs::path& path) {
  const auto bytes = serialize_array(t);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  const Eigen::Index rows = t.shape.empty() ? 1 : static_cast<Eigen::Index>(t.shape[0]);
  const Eigen::Index cols =
      t.shape.size() < 2 ? 1 : static_cast<Eigen::Index>(element_count(std::span(t.shape).subspan(1)));
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const RowMajor>(t.data.data(), rows, cols);
}

Tensor vector_tensor(const Eigen::VectorXd& v, DType dtype) {
  Tensor t;
  t.dtype = dtype;
  t.shape = {static_cast<std::size_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  if (dtype == DType::f32) {
    for (double& x : t.data) x = static_cast<float>(x);
  }
  return t;
}

// ---------------------------------------------------------------------------

std::vector<std::string> ActivationSet::layer_names() const {
  std::vector<std::string> names;
  names.reserve(layers.size());
  for (const auto& l : layers) names.push_back(l.name);
  return names;
}

const Eigen::MatrixXd& ActivationSet::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l.values;
  }
  throw ValidationError("activation set '" + model_id + "' has no layer '" + std::string(name) + "'");
}

void validate(const ActivationSet& set) {
  std::set<std::string> seen;
  for (const auto& l : set.layers) {
    if (!seen.insert(l.name).second) {
      throw ValidationError("duplicate layer name '" + l.name + "'");
    }
    if (l.values.rows() != set.n_samples()) {
      throw ValidationError("layer '" + l.name + "' has " + std::to_string(l.values.rows()) +
                            " samples, expected " + std::to_string(set.n_samples()));
    }
    if (!l.values.allFinite()) throw ValidationError("layer '" + l.name + "' has non-finite values");
  }
}

void validate(const PredictionSet& set) {
  if (!set.probs.allFinite()) throw ValidationError("predictions contain non-finite values");
  for (Eigen::Index i = 0; i < set.probs.rows(); ++i) {
    const auto row = set.probs.row(i);
    if (row.minCoeff() < 0.0 || row.maxCoeff() > 1.0) {
      throw ValidationError("prediction row " + std::to_string(i) + " has entries outside [0,1]");
    }
    if (std::abs(row.sum() - 1.0) > 1e-5) {
      throw ValidationError("prediction row " + std::to_string(i) + " sums to " +
                            std::to_string(row.sum()));
    }
  }
}

void validate(const ArchSpec& arch) {
  if (arch.input_dim < 1) throw ValidationError("input_dim must be >= 1");
  if (arch.layer_dims.empty()) throw ValidationError("architecture needs at least one layer");
  for (int d : arch.layer_dims) {
    if (d < 1) throw ValidationError("layer widths must be >= 1");
  }
}

ArchSpec parse_arch(std::string_view text) {
  std::vector<int> dims;
  std::size_t start = 0;
  while (true) {
    const auto end = text.find(':', start);
    const auto token = text.substr(start, end == std::string_view::npos ? end : end - start);
    if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw ValidationError("invalid architecture '" + std::string(text) +
                            "': expected colon-separated positive integers like 8:64:5");
    }
    dims.push_back(std::stoi(std::string(token)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  if (dims.size() < 2) {
    throw ValidationError("invalid architecture '" + std::string(text) + "': need input and output widths");
  }
  ArchSpec arch{dims.front(), std::vector<int>(dims.begin() + 1, dims.end()), Activation::relu};
  validate(arch);
  return arch;
}

std::string format_arch(const ArchSpec& arch) {
  std::string s = std::to_string(arch.input_dim);
  for (int d : arch.layer_dims) s += ":" + std::to_string(d);
  return s;
}

void validate(const Checkpoint& ckpt) {
  validate(ckpt.arch);
  if (ckpt.layers.size() != ckpt.arch.depth()) {
    throw ValidationError("checkpoint has " + std::to_string(ckpt.layers.size()) +
                          " layers, architecture declares " + std::to_string(ckpt.arch.depth()));
  }
  int fan_in = ckpt.arch.input_dim;
  for (std::size_t i = 0; i < ckpt.layers.size(); ++i) {
    const auto& l = ckpt.layers[i];
    const int out = ckpt.arch.layer_dims[i];
    if (l.weight.rows() != out || l.weight.cols() != fan_in || l.bias.size() != out) {
      throw ValidationError("layer '" + l.name + "' weight is " + std::to_string(l.weight.rows()) + "x" +
                            std::to_string(l.weight.cols()) + ", architecture expects " +
                            std::to_string(out) + "x" + std::to_string(fan_in));
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw ValidationError("layer '" + l.name + "' has non-finite parameters");
    }
    fan_in = out;
  }
}

json arch_to_json(const ArchSpec& arch) {
  return json{{"input_dim", arch.input_dim},
              {"layer_dims", arch.layer_dims},
              {"activation", "relu"},
              {"output", "softmax"}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec arch;
  arch.input_dim = j.at("input_dim").get<int>();
  arch.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  if (j.value("activation", std::string("relu")) != "relu") {
    throw ValidationError("unsupported activation '" + j["activation"].get<std::string>() + "'");
  }
  validate(arch);
  return arch;
}

namespace {

// Wrongly typed manifest fields surface from nlohmann as type errors; report
// them as malformed files instead.
template <typename Fn>
auto guard_manifest(const fs::path& dir, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError((dir / kManifestName).string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace

ActivationSet load_activation_set(const fs::path& dir) {
  return guard_manifest(dir, [&]() -> ActivationSet {
    const json m = read_manifest(dir, "activations");
    ActivationSet set;
    set.model_id = m.value("model_id", std::string{});
    set.dataset_id = m.value("dataset_id", std::string{});
    for (const auto& entry : m["layers"]) {
      const Tensor t = load_manifest_entry(dir, entry);
      if (t.rank() < 1) throw ValidationError("layer '" + entry.at("name").get<std::string>() + "' is a scalar");
      set.layers.push_back({entry.at("name").get<std::string>(), to_matrix(t)});
    }
    validate(set);
    return set;
  });
}

void save_activation_set(const ActivationSet& set, const fs::path& dir, DType dtype) {
  validate(set);
  write_directory(dir, [&](const fs::path& staged) {
    json m = manifest_header("activations", set.model_id, set.dataset_id);
    for (std::size_t i = 0; i < set.layers.size(); ++i) {
      const auto& l = set.layers[i];
      const Tensor t = to_tensor(l.values, dtype);
      const std::string file = "layer" + std::to_string(i) + ".npy";
      write_array(t, staged / file);
      m["layers"].push_back(manifest_entry(l.name, file, t));
    }
    write_file_atomic(staged / kManifestName, m.dump(2) + "\n");
  });
}

PredictionSet load_prediction_set(const fs::path& dir) {
  return guard_manifest(dir, [&]() -> PredictionSet {
    const json m = read_manifest(dir, "predictions");
    if (m["layers"].size() != 1) throw FormatError("prediction manifest must list exactly one array");
    const Tensor t = load_manifest_entry(dir, m["layers"][0]);
    if (t.rank() != 2) throw ValidationError("predictions must be a samples x classes matrix");
    PredictionSet set{m.value("model_id", std::string{}), m.value("dataset_id", std::string{}), to_matrix(t)};
    validate(set);
    return set;
  });
}

void save_prediction_set(const PredictionSet& set, const fs::path& dir, DType dtype) {
  validate(set);
  write_directory(dir, [&](const fs::path& staged) {
    json m = manifest_header("predictions", set.model_id, set.dataset_id);
    const Tensor t = to_tensor(set.probs, dtype);
    write_array(t, staged / "probs.npy");
    m["layers"].push_back(manifest_entry("probs", "probs.npy", t));
    write_file_atomic(staged / kManifestName, m.dump(2) + "\n");
  });
}

Checkpoint load_checkpoint(const fs::path& dir) {
  return guard_manifest(dir, [&]() -> Checkpoint {
    const json m = read_manifest(dir, "checkpoint");
    if (!m.contains("arch")) throw FormatError("checkpoint manifest lacks 'arch'");
    Checkpoint ckpt;
    ckpt.model_id = m.value("model_id", std::string{});
    ckpt.arch = arch_from_json(m["arch"]);
    ckpt.provenance = m.value("provenance", json::object());

    const auto& entries = m["layers"];
    if (entries.size() != 2 * ckpt.arch.depth()) {
      throw ValidationError("checkpoint lists " + std::to_string(entries.size()) +
                            " parameter arrays, architecture needs " + std::to_string(2 * ckpt.arch.depth()));
    }
    for (std::size_t i = 0; i < ckpt.arch.depth(); ++i) {
      const auto& w_entry = entries[2 * i];
      const auto& b_entry = entries[2 * i + 1];
      const std::string w_name = w_entry.at("name").get<std::string>();
      const std::string b_name = b_entry.at("name").get<std::string>();
      constexpr std::string_view kW = ".weight", kB = ".bias";
      if (!w_name.ends_with(kW) || !b_name.ends_with(kB) ||
          w_name.substr(0, w_name.size() - kW.size()) != b_name.substr(0, b_name.size() - kB.size())) {
        throw FormatError("expected '<layer>.weight' followed by '<layer>.bias', found '" + w_name +
                          "', '" + b_name + "'");
      }
      const Tensor w = load_manifest_entry(dir, w_entry);
      const Tensor b = load_manifest_entry(dir, b_entry);
      if (w.rank() != 2 || b.rank() != 1) {
        throw ValidationError("layer '" + w_name + "' must be a matrix with a vector bias");
      }
      DenseParams p;
      p.name = w_name.substr(0, w_name.size() - kW.size());
      p.weight = to_matrix(w);
      p.bias = Eigen::Map<const Eigen::VectorXd>(b.data.data(), static_cast<Eigen::Index>(b.size()));
      ckpt.layers.push_back(std::move(p));
    }
    validate(ckpt);
    return ckpt;
  });
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  validate(ckpt);
  write_directory(dir, [&](const fs::path& staged) {
    json m = manifest_header("checkpoint", ckpt.model_id, "");
    m["arch"] = arch_to_json(ckpt.arch);
    m["provenance"] = ckpt.provenance;
    for (const auto& l : ckpt.layers) {
      const Tensor w = to_tensor(l.weight);
      const Tensor b = vector_tensor(l.bias);
      write_array(w, staged / (l.name + ".weight.npy"));
      write_array(b, staged / (l.name + ".bias.npy"));
      m["layers"].push_back(manifest_entry(l.name + ".weight", l.name + ".weight.npy", w));
      m["layers"].push_back(manifest_entry(l.name + ".bias", l.name + ".bias.npy", b));
    }
    write_file_atomic(staged / kManifestName, m.dump(2) + "\n");
  });
}

// ---------------------------------------------------------------------------

fs::path staging_path(const fs::path& dest) {
  fs::path name = dest.filename();
  if (name.empty()) name = dest.parent_path().filename();
  const fs::path parent = dest.filename().empty() ? dest.parent_path().parent_path() : dest.parent_path();
  return parent / ("." + name.string() + ".tmp-" + std::to_string(::getpid()));
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = staging_path(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path);
}

void commit_directory(const fs::path& staged, const fs::path& dest) {
  fs::path target = dest;
  if (target.filename().empty()) target = target.parent_path();
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  if (fs::exists(target)) fs::remove_all(target);
  fs::rename(staged, target);
}

}  // namespace trisim
