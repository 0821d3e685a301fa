// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale substrate: ReLU MLPs with softmax output, synthetic Gaussian
// blob datasets and a deterministic minibatch SGD trainer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trisim/tensorio.hpp"

namespace trisim {

struct Dataset {
  Eigen::MatrixXd X;        // samples x input_dim
  std::vector<int> labels;  // values in [0, n_classes)
  int n_classes = 1;
  std::string id;           // recorded as dataset_id on derived activations

  Eigen::Index size() const { return X.rows(); }
};

void validate(const Dataset& data);

/// Gaussian clusters: class means on a seeded unit hypersphere scaled by
/// 4 * spread, per-feature noise with standard deviation spread. Sample i has
/// label i % n_classes.
Dataset make_blobs(int n_per_class, int input_dim, int n_classes, double spread, std::uint64_t seed);

/// CSV with header x0,...,x{d-1},label.
Dataset load_dataset_csv(const std::filesystem::path& path);
void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);

/// Directory with X.npy, labels.npy and a manifest of kind "dataset".
Dataset load_dataset_dir(const std::filesystem::path& dir);
void save_dataset_dir(const Dataset& data, const std::filesystem::path& dir);

/// Dispatches on whether the path is a directory or a CSV file.
Dataset load_dataset(const std::filesystem::path& path);

/// He-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
/// Weights are drawn layer by layer in row-major order from mt19937_64(seed).
Checkpoint init_mlp(const ArchSpec& arch, std::uint64_t seed);

struct ForwardResult {
  Eigen::MatrixXd logits;       // samples x classes
  ActivationSet activations;    // "h1".."hk" (post-ReLU) then "logits"
};

ForwardResult forward(const Checkpoint& ckpt, const Eigen::MatrixXd& X, std::string dataset_id = {});

Eigen::MatrixXd logits(const Checkpoint& ckpt, const Eigen::MatrixXd& X);

/// Row-wise softmax with max subtraction.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

double accuracy(const Checkpoint& ckpt, const Dataset& data);

PredictionSet predict(const Checkpoint& ckpt, const Eigen::MatrixXd& X, std::string dataset_id = {});

/// Mean softmax cross-entropy over the dataset.
double mean_cross_entropy(const Checkpoint& ckpt, const Dataset& data);

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradients grad;
};

/// Analytic gradient of the mean cross-entropy by backpropagation.
LossAndGradient loss_and_gradient(const Checkpoint& ckpt, const Eigen::MatrixXd& X,
                                  const std::vector<int>& labels);

struct ParamCoord {
  std::size_t layer = 0;
  bool bias = false;
  Eigen::Index row = 0;
  Eigen::Index col = 0;  // ignored for biases
};

/// Central difference (L(p + eps) - L(p - eps)) / (2 eps) of the mean
/// cross-entropy with respect to one parameter.
double numerical_gradient(const Checkpoint& ckpt, const Dataset& data, const ParamCoord& coord,
                          double epsilon);

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;      // mean over the epoch's minibatches
  double accuracy = 0.0;  // on the full training set after the epoch
};

/// Minibatch SGD with heavy-ball momentum (v <- m v + g; p <- p - lr v).
/// Each epoch visits a Fisher-Yates permutation drawn from one
/// mt19937_64(cfg.seed) stream. Throws NumericError if the loss becomes
/// non-finite.
Checkpoint train_sgd(const Checkpoint& ckpt, const Dataset& data, const TrainConfig& cfg,
                     std::vector<EpochStats>* log = nullptr);

}  // namespace trisim
