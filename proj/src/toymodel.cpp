// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "trisim/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "trisim/errors.hpp"
#include "trisim/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace trisim {

namespace {

std::string shortest(double v) { return json(v).dump(); }

void require_input_width(const Checkpoint& ckpt, const Eigen::MatrixXd& X) {
  if (X.cols() != ckpt.arch.input_dim) {
    throw ValidationError("input has " + std::to_string(X.cols()) + " features, model '" + ckpt.model_id +
                          "' expects " + std::to_string(ckpt.arch.input_dim));
  }
}

// Pre-activations and post-activations of every layer, kept for backprop.
struct Trace {
  std::vector<Eigen::MatrixXd> pre;   // z_l = a_{l-1} W_l^T + b_l
  std::vector<Eigen::MatrixXd> post;  // a_l = relu(z_l) for hidden layers
};

Trace run(const Checkpoint& ckpt, const Eigen::MatrixXd& X) {
  require_input_width(ckpt, X);
  Trace t;
  const std::size_t depth = ckpt.layers.size();
  t.pre.reserve(depth);
  t.post.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const Eigen::MatrixXd& in = l == 0 ? X : t.post.back();
    const auto& p = ckpt.layers[l];
    Eigen::MatrixXd z = in * p.weight.transpose();
    z.rowwise() += p.bias.transpose();
    t.pre.push_back(std::move(z));
    if (l + 1 < depth) t.post.push_back(t.pre.back().cwiseMax(0.0));
  }
  return t;
}

// Per-row log-sum-exp with max subtraction.
Eigen::VectorXd log_normalizer(const Eigen::MatrixXd& z) {
  const Eigen::VectorXd m = z.rowwise().maxCoeff();
  return m.array() + (z.colwise() - m).array().exp().rowwise().sum().log();
}

void require_labels(const std::vector<int>& labels, Eigen::Index n, int n_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ValidationError("label count " + std::to_string(labels.size()) + " does not match " +
                          std::to_string(n) + " samples");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

double cross_entropy(const Eigen::MatrixXd& z, const std::vector<int>& labels) {
  const Eigen::VectorXd lse = log_normalizer(z);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) total += lse[i] - z(i, labels[static_cast<std::size_t>(i)]);
  return total / static_cast<double>(z.rows());
}

}  // namespace

void validate(const Dataset& data) {
  if (data.X.rows() < 1) throw ValidationError("dataset is empty");
  if (data.n_classes < 1) throw ValidationError("dataset needs at least one class");
  if (!data.X.allFinite()) throw ValidationError("dataset features contain non-finite values");
  require_labels(data.labels, data.X.rows(), data.n_classes);
}

Dataset make_blobs(int n_per_class, int input_dim, int n_classes, double spread, std::uint64_t seed) {
  if (n_per_class < 1 || input_dim < 1 || n_classes < 1) {
    throw ValidationError("make_blobs: counts must be >= 1");
  }
  if (!(spread > 0.0)) throw ValidationError("make_blobs: spread must be > 0");

  Rng rng(seed);
  Eigen::MatrixXd means(n_classes, input_dim);
  for (int c = 0; c < n_classes; ++c) {
    Eigen::RowVectorXd dir(input_dim);
    do {
      for (int k = 0; k < input_dim; ++k) dir[k] = rng.normal();
    } while (dir.norm() == 0.0);
    means.row(c) = dir / dir.norm() * (4.0 * spread);
  }

  Dataset data;
  data.n_classes = n_classes;
  const int n = n_per_class * n_classes;
  data.X.resize(n, input_dim);
  data.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % n_classes;
    data.labels[static_cast<std::size_t>(i)] = c;
    for (int k = 0; k < input_dim; ++k) data.X(i, k) = means(c, k) + spread * rng.normal();
  }
  data.id = "blobs:n=" + std::to_string(n_per_class) + ",d=" + std::to_string(input_dim) +
            ",c=" + std::to_string(n_classes) + ",spread=" + shortest(spread) +
            ",seed=" + std::to_string(seed);
  return data;
}

Dataset load_dataset_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") {
    throw FormatError(path.string() + ": header must be x0,...,x{d-1},label");
  }
  const std::size_t dim = header.size() - 1;
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[k] != "x" + std::to_string(k)) {
      throw FormatError(path.string() + ": unexpected column '" + header[k] + "'");
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        if (col < dim) {
          values.push_back(std::stod(cell, &used));
        } else {
          labels.push_back(std::stoi(cell, &used));
        }
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + cell + "'");
      }
      ++col;
    }
    if (col != dim + 1) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim + 1) + " columns");
    }
  }

  Dataset data;
  const auto n = static_cast<Eigen::Index>(labels.size());
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  data.X = Eigen::Map<const RowMajor>(values.data(), n, static_cast<Eigen::Index>(dim));
  data.labels = std::move(labels);
  data.n_classes = data.labels.empty() ? 1 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  data.id = "csv:" + path.filename().string();
  validate(data);
  return data;
}

void save_dataset_csv(const Dataset& data, const fs::path& path) {
  validate(data);
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index k = 0; k < data.X.cols(); ++k) out << 'x' << k << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index k = 0; k < data.X.cols(); ++k) out << data.X(i, k) << ',';
    out << data.labels[static_cast<std::size_t>(i)] << '\n';
  }
  write_file_atomic(path, out.str());
}

Dataset load_dataset_dir(const fs::path& dir) {
  try {
    const json m = read_manifest(dir, "dataset");
    const auto& entries = m["layers"];
    if (entries.size() != 2 || entries[0].value("name", "") != "X" || entries[1].value("name", "") != "labels") {
      throw FormatError(dir.string() + ": dataset manifest must list X then labels");
    }
    const Tensor x = load_manifest_entry(dir, entries[0]);
    const Tensor y = load_manifest_entry(dir, entries[1]);
    if (x.rank() != 2 || y.rank() != 1 || y.shape[0] != x.shape[0]) {
      throw ValidationError(dir.string() + ": X must be N x d and labels length N");
    }
    Dataset data;
    data.X = to_matrix(x);
    data.labels.reserve(y.size());
    for (double v : y.data) {
      if (v != std::floor(v) || v < 0.0 || v > 1e9) throw ValidationError(dir.string() + ": invalid label");
      data.labels.push_back(static_cast<int>(v));
    }
    data.n_classes = m.value("n_classes", 0);
    if (data.n_classes == 0) {
      data.n_classes = data.labels.empty() ? 1 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
    }
    data.id = m.value("dataset_id", std::string{});
    validate(data);
    return data;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": malformed dataset manifest: " + e.what());
  }
}

void save_dataset_dir(const Dataset& data, const fs::path& dir) {
  validate(data);
  const fs::path staged = staging_path(dir);
  fs::remove_all(staged);
  fs::create_directories(staged);
  json m = manifest_header("dataset", "", data.id);
  m["n_classes"] = data.n_classes;
  const Tensor x = to_tensor(data.X);
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.labels.size()));
  for (std::size_t i = 0; i < data.labels.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.labels[i];
  const Tensor yt = vector_tensor(y);
  write_array(x, staged / "X.npy");
  write_array(yt, staged / "labels.npy");
  m["layers"].push_back(manifest_entry("X", "X.npy", x));
  m["layers"].push_back(manifest_entry("labels", "labels.npy", yt));
  write_file_atomic(staged / kManifestName, m.dump(2) + "\n");
  commit_directory(staged, dir);
}

Dataset load_dataset(const fs::path& path) {
  if (fs::is_directory(path)) return load_dataset_dir(path);
  return load_dataset_csv(path);
}

Checkpoint init_mlp(const ArchSpec& arch, std::uint64_t seed) {
  validate(arch);
  Rng rng(seed);
  Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.model_id = "mlp-" + format_arch(arch) + "-seed" + std::to_string(seed);
  ckpt.provenance = json{{"generator", kGeneratorName}, {"seed", seed}, {"init", "he_uniform"}};
  int fan_in = arch.input_dim;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    const int out = arch.layer_dims[l];
    const double limit = std::sqrt(6.0 / fan_in);
    DenseParams p{"fc" + std::to_string(l + 1), Eigen::MatrixXd(out, fan_in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < fan_in; ++c) p.weight(r, c) = rng.uniform(-limit, limit);
    }
    ckpt.layers.push_back(std::move(p));
    fan_in = out;
  }
  return ckpt;
}

ForwardResult forward(const Checkpoint& ckpt, const Eigen::MatrixXd& X, std::string dataset_id) {
  Trace t = run(ckpt, X);
  ForwardResult out;
  out.activations.model_id = ckpt.model_id;
  out.activations.dataset_id = std::move(dataset_id);
  for (std::size_t l = 0; l < t.post.size(); ++l) {
    out.activations.layers.push_back({"h" + std::to_string(l + 1), std::move(t.post[l])});
  }
  out.logits = std::move(t.pre.back());
  out.activations.layers.push_back({"logits", out.logits});
  return out;
}

Eigen::MatrixXd logits(const Checkpoint& ckpt, const Eigen::MatrixXd& X) {
  return std::move(run(ckpt, X).pre.back());
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd& z) {
  const Eigen::VectorXd m = z.rowwise().maxCoeff();
  Eigen::MatrixXd e = (z.colwise() - m).array().exp().matrix();
  const Eigen::VectorXd s = e.rowwise().sum();
  return s.asDiagonal().inverse() * e;
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index k = 1; k < row.size(); ++k) {
    if (row[k] > row[best]) best = static_cast<int>(k);
  }
  return best;
}

double accuracy(const Checkpoint& ckpt, const Dataset& data) {
  const Eigen::MatrixXd z = logits(ckpt, data.X);
  require_labels(data.labels, z.rows(), static_cast<int>(z.cols()));
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (argmax(z.row(i)) == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(z.rows());
}

PredictionSet predict(const Checkpoint& ckpt, const Eigen::MatrixXd& X, std::string dataset_id) {
  return {ckpt.model_id, std::move(dataset_id), softmax(logits(ckpt, X))};
}

double mean_cross_entropy(const Checkpoint& ckpt, const Dataset& data) {
  const Eigen::MatrixXd z = logits(ckpt, data.X);
  require_labels(data.labels, z.rows(), static_cast<int>(z.cols()));
  return cross_entropy(z, data.labels);
}

LossAndGradient loss_and_gradient(const Checkpoint& ckpt, const Eigen::MatrixXd& X,
                                  const std::vector<int>& labels) {
  const Trace t = run(ckpt, X);
  const Eigen::MatrixXd& z = t.pre.back();
  require_labels(labels, z.rows(), static_cast<int>(z.cols()));
  const double n = static_cast<double>(X.rows());

  LossAndGradient out;
  out.loss = cross_entropy(z, labels);

  // dL/dz for the output layer: (softmax - onehot) / n.
  Eigen::MatrixXd delta = softmax(z);
  for (Eigen::Index i = 0; i < delta.rows(); ++i) delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  delta /= n;

  const std::size_t depth = ckpt.layers.size();
  out.grad.weight.resize(depth);
  out.grad.bias.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    const Eigen::MatrixXd& in = l == 0 ? X : t.post[l - 1];
    out.grad.weight[l] = delta.transpose() * in;
    out.grad.bias[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd upstream = delta * ckpt.layers[l].weight;
      delta = (t.pre[l - 1].array() > 0.0).select(upstream, 0.0);
    }
  }
  return out;
}

double numerical_gradient(const Checkpoint& ckpt, const Dataset& data, const ParamCoord& coord,
                          double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (coord.layer >= ckpt.layers.size()) throw ValidationError("parameter layer out of range");
  Checkpoint probe = ckpt;
  auto& p = probe.layers[coord.layer];
  double& slot = coord.bias ? p.bias(coord.row) : p.weight(coord.row, coord.col);
  const double original = slot;
  slot = original + epsilon;
  const double up = mean_cross_entropy(probe, data);
  slot = original - epsilon;
  const double down = mean_cross_entropy(probe, data);
  return (up - down) / (2.0 * epsilon);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

Checkpoint train_sgd(const Checkpoint& ckpt, const Dataset& data, const TrainConfig& cfg,
                     std::vector<EpochStats>* log) {
  validate(cfg);
  validate(ckpt);
  validate(data);
  if (data.n_classes > ckpt.arch.output_dim()) {
    throw ValidationError("dataset has " + std::to_string(data.n_classes) + " classes, model outputs " +
                          std::to_string(ckpt.arch.output_dim()));
  }

  Checkpoint model = ckpt;
  Gradients velocity;
  for (const auto& l : model.layers) {
    velocity.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    velocity.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }

  Rng rng(cfg.seed);
  const auto n = static_cast<std::size_t>(data.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Eigen::MatrixXd xb = data.X(idx, Eigen::all);
      std::vector<int> yb;
      yb.reserve(idx.size());
      for (Eigen::Index k : idx) yb.push_back(data.labels[static_cast<std::size_t>(k)]);

      const LossAndGradient lg = loss_and_gradient(model, xb, yb);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("training diverged: loss " + shortest(lg.loss) + " at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches + 1) +
                           " (try a smaller learning rate)");
      }
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        velocity.weight[l] = cfg.momentum * velocity.weight[l] + lg.grad.weight[l];
        velocity.bias[l] = cfg.momentum * velocity.bias[l] + lg.grad.bias[l];
        model.layers[l].weight -= cfg.learning_rate * velocity.weight[l];
        model.layers[l].bias -= cfg.learning_rate * velocity.bias[l];
      }
      loss_sum += lg.loss;
      ++batches;
    }
    if (log) log->push_back({epoch, loss_sum / batches, accuracy(model, data)});
  }

  model.provenance["training"] = json{{"optimizer", "sgd_momentum"},
                                      {"learning_rate", cfg.learning_rate},
                                      {"momentum", cfg.momentum},
                                      {"epochs", cfg.epochs},
                                      {"batch_size", cfg.batch_size},
                                      {"seed", cfg.seed},
                                      {"dataset_id", data.id}};
  return model;
}

}  // namespace trisim
