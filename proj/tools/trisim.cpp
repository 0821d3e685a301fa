// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// trisim command-line front end. Every report is a JSON envelope
//
//   {format_version, kind, tool{name, version}, config, inputs, report}
//
// where config holds the resolved options and inputs maps each input role to
// its path and SHA-256. Outputs are staged and renamed into place.
//
// Exit codes: 0 success, 2 usage, 3 invalid input, 4 numeric degeneracy.

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "trisim/errors.hpp"
#include "trisim/metrics.hpp"
#include "trisim/pruning.hpp"
#include "trisim/svg.hpp"
#include "trisim/tensorio.hpp"
#include "trisim/toymodel.hpp"
#include "trisim/triangle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace trisim;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kInvalidInput = 3, kDegenerate = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// hashing

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view s) { EVP_DigestUpdate(ctx_, s.data(), s.size()); }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Files of a directory are hashed in sorted relative-path order, each
// preceded by its path so renames change the digest.
std::string hash_path(const fs::path& path) {
  Sha256 h;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), path));
    }
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
      const std::string body = read_text(path / rel);
      h.update(rel.generic_string());
      h.update(std::string(1, '\0'));
      h.update(std::to_string(body.size()));
      h.update(std::string(1, '\0'));
      h.update(body);
    }
  } else {
    h.update(read_text(path));
  }
  return h.hex();
}

json input_ref(const std::string& path) { return json{{"path", path}, {"sha256", hash_path(path)}}; }

// ---------------------------------------------------------------------------
// options

struct Options {
  std::string config;

  std::string arch, model_id;
  std::uint64_t seed = 0;
  double lr = 0.1, momentum = 0.9;
  int epochs = 50, batch_size = 32;

  std::string data, blobs;
  std::uint64_t data_seed = 0;
  std::string probe, probe_blobs;
  std::uint64_t probe_seed = 1;

  std::string a, b, checkpoint, activations, predictions, dtype = "f64";
  std::string reports, report;
  std::string levels = "0:0.9:0.1";
  int alphas = kDefaultAlphaCount;
  std::string jsd_mode = "mean_dist";
  double threshold = kDisagreementThreshold;
  bool self_lmc = false;

  std::string out, svg, csv, log;
  bool timestamp = false;
};

// Wraps a subcommand and remembers every flag it registers, so the resolved
// configuration can be written back and config-file keys can be checked.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    entries_.push_back({name, false, [&var] { return json(var); }});
    return app_->add_option("--" + name, var, help);
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    entries_.push_back({name, true, [&var] { return json(var); }});
    return app_->add_flag("--" + name, var, help);
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }
  bool is_flag(const std::string& name) const { return find(name)->is_flag; }

  json resolved() const {
    json j = json::object();
    for (const auto& e : entries_) {
      json v = e.get();
      if (v.is_string() && v.get_ref<const std::string&>().empty()) continue;
      j[e.name] = std::move(v);
    }
    return j;
  }

  CLI::App* app() const { return app_; }

 private:
  struct Entry {
    std::string name;
    bool is_flag;
    std::function<json()> get;
  };

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  CLI::App* app_;
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------
// config files

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::vector<std::pair<std::string, std::string>> config_items(const fs::path& path, const std::string& command) {
  std::vector<std::pair<std::string, std::string>> items;
  const std::string text = read_text(path);
  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError("--config: " + std::string(e.what()));
    }
    if (!j.is_object()) throw UsageError("--config: expected a JSON object");
    for (const auto& [k, v] : j.items()) {
      std::string value;
      if (v.is_string()) {
        value = v.get<std::string>();
      } else if (v.is_array()) {
        for (const auto& x : v) value += (value.empty() ? "" : ",") + (x.is_string() ? x.get<std::string>() : x.dump());
      } else {
        value = v.dump();
      }
      items.emplace_back(k, value);
    }
    return items;
  }
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> parsed;
  try {
    parsed = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw UsageError("--config: " + std::string(e.what()));
  }
  for (const auto& item : parsed) {
    // Keys at top level or in a [<command>] table.
    if (!item.parents.empty() && item.parents != std::vector<std::string>{command}) continue;
    if (item.name == "++" || item.name == "--") continue;  // table markers
    std::string value;
    for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    items.emplace_back(item.name, value);
  }
  return items;
}

// Expands --config FILE into ordinary flags. Flags given on the command line
// win; keys naming no flag of the command are usage errors.
void apply_config_file(std::vector<std::string>& args, const std::map<std::string, std::unique_ptr<Flags>>& commands) {
  auto cmd = std::find_if(args.begin(), args.end(), [&](const std::string& a) { return commands.count(a) > 0; });
  if (cmd == args.end()) return;
  std::string file;
  for (auto it = cmd + 1; it != args.end(); ++it) {
    if (*it == "--config" && it + 1 != args.end()) file = *(it + 1);
    if (it->rfind("--config=", 0) == 0) file = it->substr(9);
  }
  if (file.empty()) return;
  if (!fs::is_regular_file(file)) throw UsageError("--config: no such file: " + file);

  const Flags& flags = *commands.at(*cmd);
  std::vector<std::string> extra;
  for (auto [key, value] : config_items(file, *cmd)) {
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config" || !flags.has(key)) {
      throw UsageError("--config: unknown key '" + key + "' for command " + *cmd);
    }
    if (given_on_command_line(args, key)) continue;
    if (flags.is_flag(key)) {
      if (value == "true" || value == "1") extra.push_back("--" + key);
      else if (value != "false" && value != "0") throw UsageError("--config: '" + key + "' expects true or false");
    } else {
      extra.push_back("--" + key);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
}

// ---------------------------------------------------------------------------
// flag values

std::pair<int, double> parse_blob_spec(const std::string& text, const std::string& flag) {
  const auto comma = text.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument("missing comma");
    std::size_t used = 0;
    const std::string n_text = text.substr(0, comma), s_text = text.substr(comma + 1);
    const int n = std::stoi(n_text, &used);
    if (used != n_text.size()) throw std::invalid_argument("trailing characters");
    const double spread = std::stod(s_text, &used);
    if (used != s_text.size()) throw std::invalid_argument("trailing characters");
    if (n < 1 || !(spread > 0.0) || !std::isfinite(spread)) throw std::invalid_argument("out of range");
    return {n, spread};
  } catch (const std::exception&) {
    throw UsageError(flag + ": expected N,SPREAD with N >= 1 and SPREAD > 0, got '" + text + "'");
  }
}

double parse_number(const std::string& text, const std::string& flag) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(flag + ": not a number: '" + text + "'");
}

// "start:stop:step" (stop inclusive) or a comma-separated list. Grid values
// are rounded to 12 decimals so 0.1 steps land on their decimal values.
std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  const auto round12 = [](double v) { return std::round(v * 1e12) / 1e12; };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw UsageError("--levels: expected start:stop:step, got '" + text + "'");
    const double start = parse_number(parts[0], "--levels");
    const double stop = parse_number(parts[1], "--levels");
    const double step = parse_number(parts[2], "--levels");
    if (!(step > 0.0) || stop < start) throw UsageError("--levels: need step > 0 and stop >= start");
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long i = 0; i < n; ++i) out.push_back(round12(start + static_cast<double>(i) * step));
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(round12(parse_number(p, "--levels")));
  }
  try {
    validate_levels(out);
  } catch (const ValidationError& e) {
    throw UsageError("--levels: " + std::string(e.what()));
  }
  return out;
}

ArchSpec arch_flag(const std::string& text) {
  try {
    return parse_arch(text);
  } catch (const ValidationError& e) {
    throw UsageError("--arch: " + std::string(e.what()));
  }
}

void check_alphas(int n) {
  if (n < 2) throw UsageError("--alphas: need at least 2 points, got " + std::to_string(n));
}

void check_threshold(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw UsageError("--threshold: must be a finite value >= 0");
}

// ---------------------------------------------------------------------------
// data sources

Dataset resolve_data(const Options& o, const ArchSpec& arch, json& inputs) {
  Dataset data;
  if (!o.data.empty()) {
    data = load_dataset(o.data);
    inputs["data"] = input_ref(o.data);
  } else if (!o.blobs.empty()) {
    const auto [n, spread] = parse_blob_spec(o.blobs, "--blobs");
    data = make_blobs(n, arch.input_dim, arch.output_dim(), spread, o.data_seed);
  } else {
    throw UsageError("a dataset is required: pass --data PATH or --blobs N,SPREAD");
  }
  if (data.X.cols() != arch.input_dim) {
    throw ValidationError("dataset has " + std::to_string(data.X.cols()) + " features but the model expects " +
                          std::to_string(arch.input_dim));
  }
  if (data.n_classes > arch.output_dim()) {
    throw ValidationError("dataset has " + std::to_string(data.n_classes) + " classes but the model has " +
                          std::to_string(arch.output_dim()) + " outputs");
  }
  return data;
}

// Probe inputs for activation capture. Never defaulted to the evaluation data:
// which inputs the representations are compared on is a deliberate choice.
Eigen::MatrixXd resolve_probe(const Options& o, const ArchSpec& arch, json& inputs) {
  Eigen::MatrixXd probe;
  if (!o.probe.empty()) {
    probe = load_dataset(o.probe).X;
    inputs["probe"] = input_ref(o.probe);
  } else if (!o.probe_blobs.empty()) {
    const auto [n, spread] = parse_blob_spec(o.probe_blobs, "--probe-blobs");
    probe = make_blobs(n, arch.input_dim, arch.output_dim(), spread, o.probe_seed).X;
  } else {
    throw UsageError("probe inputs are required: pass --probe PATH or --probe-blobs N,SPREAD");
  }
  if (probe.cols() != arch.input_dim) {
    throw ValidationError("probe has " + std::to_string(probe.cols()) + " features but the model expects " +
                          std::to_string(arch.input_dim));
  }
  return probe;
}

void check_compatible_io(const Checkpoint& a, const Checkpoint& b) {
  if (a.arch.input_dim != b.arch.input_dim || a.arch.output_dim() != b.arch.output_dim()) {
    throw ValidationError("models disagree on input/output width: " + format_arch(a.arch) + " vs " +
                          format_arch(b.arch));
  }
}

// ---------------------------------------------------------------------------
// output

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json envelope(const std::string& kind, const Flags& flags, json inputs, json report) {
  return json{{"format_version", 1},
              {"kind", kind},
              {"tool", {{"name", "trisim"}, {"version", TRISIM_VERSION}}},
              {"config", flags.resolved()},
              {"inputs", std::move(inputs)},
              {"report", std::move(report)}};
}

void write_svg(const json& doc, const std::string& path, bool timestamp) {
  if (path.empty()) return;
  if (timestamp) {
    json stamped = doc;
    stamped["generated_at"] = utc_now();
    write_file_atomic(path, svg::render_report(stamped));
  } else {
    write_file_atomic(path, svg::render_report(doc));
  }
}

void emit(const json& doc, const Options& o) {
  const std::string text = doc.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(o.out, text);
  }
}

void write_csv(const std::string& path, const std::string& text) {
  if (!path.empty()) write_file_atomic(path, text);
}

std::string csv_number(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// commands

int cmd_toy_train(const Options& o, const Flags& flags) {
  const ArchSpec arch = arch_flag(o.arch);
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  try {
    validate(cfg);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  if (o.out.empty()) throw UsageError("--out: checkpoint directory required");

  json inputs = json::object();
  const Dataset data = resolve_data(o, arch, inputs);
  Checkpoint init = init_mlp(arch, o.seed);
  if (!o.model_id.empty()) init.model_id = o.model_id;

  std::vector<EpochStats> log;
  const Checkpoint trained = train_sgd(init, data, cfg, &log);
  save_checkpoint(trained, o.out);

  json epochs = json::array();
  for (const auto& e : log) epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  const json doc = envelope("training_log", flags, inputs,
                            {{"model_id", trained.model_id},
                             {"dataset_id", data.id},
                             {"epochs", epochs},
                             {"final_accuracy", log.empty() ? accuracy(trained, data) : log.back().accuracy}});
  const fs::path log_path = o.log.empty() ? fs::path(o.out) / "training_log.json" : fs::path(o.log);
  write_file_atomic(log_path, doc.dump(2) + "\n");
  std::cout << trained.model_id << ": train accuracy " << doc["report"]["final_accuracy"].get<double>() << "\n";
  return kOk;
}

int cmd_extract_toy(const Options& o, const Flags&) {
  if (o.activations.empty() && o.predictions.empty()) {
    throw UsageError("extract-toy: pass --activations DIR and/or --predictions DIR");
  }
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  json inputs = json::object();
  const Dataset data = resolve_data(o, ckpt.arch, inputs);
  const DType dtype = o.dtype == "f32" ? DType::f32 : DType::f64;
  if (!o.activations.empty()) {
    save_activation_set(forward(ckpt, data.X, data.id).activations, o.activations, dtype);
  }
  if (!o.predictions.empty()) save_prediction_set(predict(ckpt, data.X, data.id), o.predictions, dtype);
  std::cout << ckpt.model_id << ": " << data.size() << " samples from " << data.id << "\n";
  return kOk;
}

int cmd_static(const Options& o, const Flags& flags) {
  const ActivationSet a = load_activation_set(o.a);
  const ActivationSet b = load_activation_set(o.b);
  if (a.dataset_id != b.dataset_id) {
    throw ValidationError("activation sets were recorded on different datasets ('" + a.dataset_id + "' vs '" +
                          b.dataset_id + "'); similarity needs the same inputs in the same order");
  }
  const StaticPanel panel = static_panel(a, b);
  json report = to_json(panel);
  report["model_a"] = a.model_id;
  report["model_b"] = b.model_id;
  report["dataset_id"] = a.dataset_id;
  const json doc = envelope("similarity_report", flags, {{"a", input_ref(o.a)}, {"b", input_ref(o.b)}}, report);
  emit(doc, o);
  write_svg(doc, o.svg, o.timestamp);

  std::string csv = "metric,layer_a,layer_b,score\n";
  for (const SimilarityMatrix* m : {&panel.cka, &panel.procrustes}) {
    for (std::size_t i = 0; i < m->layers_a.size(); ++i) {
      for (std::size_t j = 0; j < m->layers_b.size(); ++j) {
        csv += std::string(metric_name(m->metric)) + "," + m->layers_a[i] + "," + m->layers_b[j] + "," +
               csv_number(m->scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + "\n";
      }
    }
  }
  write_csv(o.csv, csv);
  return kOk;
}

int cmd_lmc(const Options& o, const Flags& flags) {
  check_alphas(o.alphas);
  const Checkpoint a = load_checkpoint(o.a);
  const Checkpoint b = load_checkpoint(o.b);
  if (!(a.arch == b.arch)) {
    throw ArchMismatchError("lmc needs identical architectures: " + format_arch(a.arch) + " vs " +
                            format_arch(b.arch) + " (use jsd for different architectures)");
  }
  json inputs = {{"a", input_ref(o.a)}, {"b", input_ref(o.b)}};
  const Dataset data = resolve_data(o, a.arch, inputs);
  const LmcCurve curve = lmc_curve(a, b, data, o.alphas);
  const json doc = envelope("lmc_report", flags, inputs,
                            {{"model_a", a.model_id},
                             {"model_b", b.model_id},
                             {"dataset_id", data.id},
                             {"curve", to_json(curve)},
                             {"barrier", barrier_height(curve)}});
  emit(doc, o);
  write_svg(doc, o.svg, o.timestamp);
  std::string csv = "alpha,accuracy\n";
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    csv += csv_number(curve.alphas[i]) + "," + csv_number(curve.accuracies[i]) + "\n";
  }
  write_csv(o.csv, csv);
  return kOk;
}

int cmd_jsd(const Options& o, const Flags& flags) {
  const PredictionSet a = load_prediction_set(o.a);
  const PredictionSet b = load_prediction_set(o.b);
  if (a.dataset_id != b.dataset_id) {
    throw ValidationError("prediction sets were recorded on different datasets ('" + a.dataset_id + "' vs '" +
                          b.dataset_id + "')");
  }
  const JsdMode mode = parse_jsd_mode(o.jsd_mode);
  const json doc = envelope("jsd_report", flags, {{"a", input_ref(o.a)}, {"b", input_ref(o.b)}},
                            {{"model_a", a.model_id},
                             {"model_b", b.model_id},
                             {"dataset_id", a.dataset_id},
                             {"mode", jsd_mode_name(mode)},
                             {"score", predictive_similarity(a, b, mode)}});
  emit(doc, o);
  return kOk;
}

json barrier_series(const std::vector<PruningBarrier>& series) {
  json out = json::array();
  for (const auto& p : series) out.push_back({{"sparsity", p.sparsity}, {"barrier", p.barrier}});
  return out;
}

int cmd_sweep(const Options& o, const Flags& flags) {
  const std::vector<double> levels = parse_levels(o.levels);
  check_alphas(o.alphas);
  const Checkpoint a = load_checkpoint(o.a);
  const Checkpoint b = load_checkpoint(o.b);
  check_compatible_io(a, b);
  json inputs = {{"a", input_ref(o.a)}, {"b", input_ref(o.b)}};
  const Dataset data = resolve_data(o, a.arch, inputs);
  const Eigen::MatrixXd probe = resolve_probe(o, a.arch, inputs);

  const SparsitySweepResult sweep = sparsity_sweep(a, b, data, probe, levels);
  json report = to_json(sweep);
  report["model_a"] = a.model_id;
  report["model_b"] = b.model_id;
  report["dataset_id"] = data.id;
  if (o.self_lmc) {
    report["self_lmc"] = {{"a", barrier_series(self_lmc_under_pruning(a, data, levels, o.alphas))},
                          {"b", barrier_series(self_lmc_under_pruning(b, data, levels, o.alphas))}};
  }
  const json doc = envelope("sweep_report", flags, inputs, report);
  emit(doc, o);
  write_svg(doc, o.svg, o.timestamp);
  write_csv(o.csv, to_csv(sweep));
  return kOk;
}

int cmd_triangle(const Options& o, const Flags& flags) {
  TriangleConfig cfg;
  cfg.levels = parse_levels(o.levels);
  check_alphas(o.alphas);
  check_threshold(o.threshold);
  cfg.n_alphas = o.alphas;
  cfg.jsd_mode = parse_jsd_mode(o.jsd_mode);
  cfg.threshold = o.threshold;

  const Checkpoint a = load_checkpoint(o.a);
  const Checkpoint b = load_checkpoint(o.b);
  check_compatible_io(a, b);
  json inputs = {{"a", input_ref(o.a)}, {"b", input_ref(o.b)}};
  const Dataset data = resolve_data(o, a.arch, inputs);
  const Eigen::MatrixXd probe = resolve_probe(o, a.arch, inputs);

  const TriangleReport r = build_triangle_report(a, b, data, probe, cfg);
  const json doc = envelope("triangle_report", flags, inputs, to_json(r));
  emit(doc, o);
  write_svg(doc, o.svg, o.timestamp);
  return kOk;
}

int cmd_crossview(const Options& o, const Flags& flags) {
  check_threshold(o.threshold);
  if (!fs::is_directory(o.reports)) throw ValidationError("--reports: not a directory: " + o.reports);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.reports)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  // Only triangle reports are consumed; anything else in the directory
  // (a previous crossview output, say) is skipped and left out of the hash.
  std::vector<TriangleReport> reports;
  Sha256 h;
  json used = json::array();
  for (const auto& f : files) {
    const std::string text = read_text(f);
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
    if (!doc.is_object() || doc.value("kind", std::string{}) != "triangle_report") continue;
    try {
      reports.push_back(triangle_report_from_json(doc.at("report")));
    } catch (const json::exception& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
    h.update(f.filename().string());
    h.update(std::string(1, '\0'));
    h.update(text);
    used.push_back(f.filename().string());
  }

  const CrossViewStats stats = crossview_stats(reports, o.threshold);
  const json inputs = {{"reports", {{"path", o.reports}, {"files", used}, {"sha256", h.hex()}}}};
  const json doc = envelope("crossview_report", flags, inputs, to_json(stats));
  emit(doc, o);
  write_svg(doc, o.svg, o.timestamp);

  std::string csv = "pair,cka,procrustes,disagreement\n";
  for (std::size_t i = 0; i < stats.pair_ids.size(); ++i) {
    const bool flagged = std::find(stats.disagreements.begin(), stats.disagreements.end(), stats.pair_ids[i]) !=
                         stats.disagreements.end();
    csv += stats.pair_ids[i] + "," + csv_number(stats.cka_scores[i]) + "," + csv_number(stats.procrustes_scores[i]) +
           "," + (flagged ? "1" : "0") + "\n";
  }
  write_csv(o.csv, csv);
  return kOk;
}

int cmd_plot(const Options& o, const Flags&) {
  json doc;
  try {
    doc = json::parse(read_text(o.report));
  } catch (const json::parse_error& e) {
    throw FormatError(o.report + ": " + e.what());
  }
  try {
    write_svg(doc, o.out, o.timestamp);
  } catch (const json::exception& e) {
    throw FormatError(o.report + ": " + e.what());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

using Handler = int (*)(const Options&, const Flags&);

int run(int argc, char** argv) {
  Options o;
  CLI::App app{"Static, functional and sparsity views of model similarity.", "trisim"};
  app.set_version_flag("--version", TRISIM_VERSION);
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 2 usage, 3 invalid input, 4 numeric degeneracy.\n"
             "TRISIM_THREADS caps worker threads.");

  std::map<std::string, std::unique_ptr<Flags>> commands;
  std::map<std::string, Handler> handlers;
  const auto command = [&](const std::string& name, const std::string& help, Handler h) -> Flags& {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "TOML or JSON file of flag values; flags on the command line win");
    handlers[name] = h;
    return *commands.emplace(name, std::make_unique<Flags>(sub)).first->second;
  };
  const auto add_data = [&](Flags& f) {
    auto* data = f.add("data", o.data, "dataset CSV file or dataset directory");
    auto* blobs = f.add("blobs", o.blobs, "synthetic blobs: N per class and SPREAD, e.g. 100,0.4");
    data->excludes(blobs);
    f.add("data-seed", o.data_seed, "seed for --blobs");
  };
  const auto add_probe = [&](Flags& f) {
    auto* probe = f.add("probe", o.probe, "probe inputs for activations (dataset CSV or directory)");
    auto* blobs = f.add("probe-blobs", o.probe_blobs, "synthetic probe blobs: N,SPREAD");
    probe->excludes(blobs);
    f.add("probe-seed", o.probe_seed, "seed for --probe-blobs");
  };
  const auto add_pair = [&](Flags& f, const std::string& what) {
    f.add("a", o.a, "first " + what)->required()->check(CLI::ExistingDirectory);
    f.add("b", o.b, "second " + what)->required()->check(CLI::ExistingDirectory);
  };
  const auto add_out = [&](Flags& f, bool svg, bool csv) {
    f.add("out", o.out, "report path (stdout when omitted)");
    if (svg) {
      f.add("svg", o.svg, "figure path");
      f.flag("timestamp", o.timestamp, "embed the generation time in figures");
    }
    if (csv) f.add("csv", o.csv, "CSV table path");
  };
  const auto add_grid = [&](Flags& f) {
    f.add("levels", o.levels, "sparsity grid, start:stop:step or a comma list");
    f.add("alphas", o.alphas, "points on each interpolation path");
  };
  const std::vector<std::string> jsd_modes{"mean_dist", "per_sample"};

  {
    Flags& f = command("toy-train", "train a toy MLP with SGD", cmd_toy_train);
    f.add("arch", o.arch, "layer widths, input first, e.g. 8:64:32:5")->required();
    f.add("seed", o.seed, "initialization and shuffling seed");
    f.add("model-id", o.model_id, "override the generated model id");
    f.add("lr", o.lr, "learning rate");
    f.add("momentum", o.momentum, "heavy-ball momentum");
    f.add("epochs", o.epochs, "passes over the data");
    f.add("batch-size", o.batch_size, "minibatch size");
    add_data(f);
    f.add("out", o.out, "checkpoint directory")->required();
    f.add("log", o.log, "training log path (default OUT/training_log.json)");
  }
  {
    Flags& f = command("extract-toy", "dump activations and predictions of a toy checkpoint", cmd_extract_toy);
    f.add("checkpoint", o.checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
    add_data(f);
    f.add("activations", o.activations, "activation-set output directory");
    f.add("predictions", o.predictions, "prediction-set output directory");
    f.add("dtype", o.dtype, "stored precision")->check(CLI::IsMember({"f32", "f64"}));
  }
  {
    Flags& f = command("static", "layerwise CKA and Procrustes between two activation sets", cmd_static);
    add_pair(f, "activation-set directory");
    add_out(f, true, true);
  }
  {
    Flags& f = command("lmc", "accuracy along the linear path between two checkpoints", cmd_lmc);
    add_pair(f, "checkpoint directory");
    add_data(f);
    f.add("alphas", o.alphas, "points on the interpolation path");
    add_out(f, true, true);
  }
  {
    Flags& f = command("jsd", "Jensen-Shannon divergence between two prediction sets", cmd_jsd);
    add_pair(f, "prediction-set directory");
    f.add("jsd-mode", o.jsd_mode, "mean_dist or per_sample")->check(CLI::IsMember(jsd_modes));
    add_out(f, false, false);
  }
  {
    Flags& f = command("sweep", "accuracy and similarity under global magnitude pruning", cmd_sweep);
    add_pair(f, "checkpoint directory");
    add_data(f);
    add_probe(f);
    add_grid(f);
    f.flag("self-lmc", o.self_lmc, "also report the barrier between each model and its pruned copies");
    add_out(f, true, true);
  }
  {
    Flags& f = command("triangle", "static, functional and sparsity views for one model pair", cmd_triangle);
    add_pair(f, "checkpoint directory");
    add_data(f);
    add_probe(f);
    add_grid(f);
    f.add("jsd-mode", o.jsd_mode, "mean_dist or per_sample (different architectures)")
        ->check(CLI::IsMember(jsd_modes));
    f.add("threshold", o.threshold, "CKA/Procrustes gap flagged as disagreement");
    add_out(f, true, false);
  }
  {
    Flags& f = command("crossview", "statistics across a directory of triangle reports", cmd_crossview);
    f.add("reports", o.reports, "directory of triangle report JSON files")->required();
    f.add("threshold", o.threshold, "CKA/Procrustes gap flagged as disagreement");
    add_out(f, true, true);
  }
  {
    Flags& f = command("plot", "render the figure for a report", cmd_plot);
    f.add("report", o.report, "report JSON")->required()->check(CLI::ExistingFile);
    f.add("out", o.out, "SVG path")->required();
    f.flag("timestamp", o.timestamp, "embed the generation time");
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  apply_config_file(args, commands);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  for (const auto& [name, flags] : commands) {
    if (flags->app()->parsed()) return handlers.at(name)(o, *flags);
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "trisim: " << e.what() << "\n";
    return kUsage;
  } catch (const DegenerateInputError& e) {
    std::cerr << "trisim: degenerate input: " << e.what() << "\n";
    return kDegenerate;
  } catch (const NumericError& e) {
    std::cerr << "trisim: numeric failure: " << e.what() << "\n";
    return kDegenerate;
  } catch (const ValidationError& e) {
    std::cerr << "trisim: invalid input: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const FormatError& e) {
    std::cerr << "trisim: bad file: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "trisim: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& e) {
    std::cerr << "trisim: " << e.what() << "\n";
    return 1;
  }
}
