// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Array files (NPY v1.0) and the directory formats built on them: activation
// sets, prediction sets and MLP checkpoints. Every directory carries a
// manifest.json describing its contents.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace trisim {

enum class DType { f32, f64 };

std::string_view dtype_descr(DType dtype);

/// Dense row-major array as stored on disk. Float32 payloads are held widened
/// to double; the widening is exact so writing back as f32 reproduces the
/// original bits.
struct Tensor {
  std::vector<std::size_t> shape;
  DType dtype = DType::f64;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t element_count(std::span<const std::size_t> shape);

struct ReadOptions {
  bool allow_non_finite = false;
};

Tensor parse_array(std::span<const std::uint8_t> bytes, const ReadOptions& options = {});
std::vector<std::uint8_t> serialize_array(const Tensor& t);

Tensor read_array(const std::filesystem::path& path, const ReadOptions& options = {});
void write_array(const Tensor& t, const std::filesystem::path& path);

/// Views a tensor as N x (product of remaining dims). Rank-1 tensors become a
/// single column.
Eigen::MatrixXd to_matrix(const Tensor& t);

template <typename Derived>
Tensor to_tensor(const Eigen::MatrixBase<Derived>& m, DType dtype = DType::f64) {
  Tensor t;
  t.dtype = dtype;
  t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  t.data.resize(t.shape[0] * t.shape[1]);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = static_cast<double>(m(i, j));
      if (dtype == DType::f32) v = static_cast<float>(v);
      t.data[static_cast<std::size_t>(i * m.cols() + j)] = v;
    }
  }
  return t;
}

Tensor vector_tensor(const Eigen::VectorXd& v, DType dtype = DType::f64);

// ---------------------------------------------------------------------------

struct LayerActivations {
  std::string name;
  Eigen::MatrixXd values;  // samples x features
};

struct ActivationSet {
  std::string model_id;
  std::string dataset_id;
  std::vector<LayerActivations> layers;

  Eigen::Index n_samples() const { return layers.empty() ? 0 : layers.front().values.rows(); }
  std::vector<std::string> layer_names() const;
  const Eigen::MatrixXd& layer(std::string_view name) const;
};

/// Throws ValidationError on duplicate names or inconsistent sample counts.
void validate(const ActivationSet& set);

struct PredictionSet {
  std::string model_id;
  std::string dataset_id;
  Eigen::MatrixXd probs;  // samples x classes
};

/// Rows must be probability vectors: entries in [0,1], sums within 1e-5 of 1.
void validate(const PredictionSet& set);

enum class Activation { relu };

struct ArchSpec {
  int input_dim = 0;
  std::vector<int> layer_dims;  // hidden widths, then the output width
  Activation activation = Activation::relu;

  int output_dim() const { return layer_dims.back(); }
  std::size_t depth() const { return layer_dims.size(); }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

void validate(const ArchSpec& arch);

/// "8:64:32:5" -> input 8, hidden 64 and 32, output 5.
ArchSpec parse_arch(std::string_view text);
std::string format_arch(const ArchSpec& arch);

struct DenseParams {
  std::string name;
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct Checkpoint {
  std::string model_id;
  ArchSpec arch;
  std::vector<DenseParams> layers;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Parameter shapes must match the architecture exactly.
void validate(const Checkpoint& ckpt);

inline constexpr std::string_view kManifestName = "manifest.json";

ActivationSet load_activation_set(const std::filesystem::path& dir);
void save_activation_set(const ActivationSet& set, const std::filesystem::path& dir,
                         DType dtype = DType::f64);

PredictionSet load_prediction_set(const std::filesystem::path& dir);
void save_prediction_set(const PredictionSet& set, const std::filesystem::path& dir,
                         DType dtype = DType::f64);

Checkpoint load_checkpoint(const std::filesystem::path& dir);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

/// Reads dir/manifest.json and checks format_version and kind.
nlohmann::json read_manifest(const std::filesystem::path& dir, std::string_view kind);
nlohmann::json manifest_header(std::string_view kind, const std::string& model_id,
                               const std::string& dataset_id);
/// Loads the array named by one manifest "layers" entry, checking its
/// declared shape against the file.
Tensor load_manifest_entry(const std::filesystem::path& dir, const nlohmann::json& entry);
nlohmann::json manifest_entry(const std::string& name, const std::string& file, const Tensor& t);

nlohmann::json arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const nlohmann::json& j);

// Output helpers shared by the directory writers and the CLI. Both stage the
// content next to the destination and rename into place, so a failed write
// never leaves a partial file or directory behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void commit_directory(const std::filesystem::path& staged, const std::filesystem::path& dest);
std::filesystem::path staging_path(const std::filesystem::path& dest);

}  // namespace trisim
