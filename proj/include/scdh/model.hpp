#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scdh/data.hpp"
#include "scdh/types.hpp"

namespace scdh::model {

struct Hyperparams {
  double lambda = 0.005;
  double mu = 0.2;
  double alpha = 0.05;
  double holder_p = 3.0;
  double holder_q = 1.5;
  int warmup_epochs = 5;
  double warmup_norm_s = 8.0;
  double lr = 0.001;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 64;
  std::vector<std::pair<int, double>> lr_schedule{{20, 0.2}, {27, 0.2}};
  std::uint64_t seed = 1;

  static Hyperparams cifar10();
  static Hyperparams nuswide();
  static Hyperparams imagenet();

  /// Learning rate in effect during `epoch` (0-based).
  double learning_rate_at(int epoch) const;
  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

std::string to_json(const Hyperparams& hp);
/// Missing keys keep their defaults; unknown keys are rejected.
Hyperparams hyperparams_from_json(const std::string& text);

/// y = W x + b with W stored row-major (out x in).
struct AffineLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  Vector weight;
  Vector bias;

  AffineLayer() = default;
  AffineLayer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  Vector apply(std::span<const double> x) const;
  friend bool operator==(const AffineLayer&, const AffineLayer&) = default;
};

// input -> hidden (ReLU) ... -> hash (linear, r outputs) -> distances to centers.
// The classifier head reads the last hidden activation (the input when there
// are no hidden layers).
struct Network {
  std::vector<AffineLayer> hidden;
  AffineLayer hash;
  Centers centers;
  AffineLayer classifier;

  std::size_t input_dim() const noexcept { return hidden.empty() ? hash.in : hidden.front().in; }
  std::size_t code_length() const noexcept { return hash.out; }
  std::size_t class_count() const noexcept { return classifier.out; }
  std::vector<std::size_t> layer_dims() const;

  /// Every parameter block in a fixed order: per layer weight then bias,
  /// hidden layers first, then hash, centers, classifier.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;

  void check_invariants() const;
  friend bool operator==(const Network& a, const Network& b);
};

/// Same shapes as `net`, every parameter zero.
Network zeros_like(const Network& net);

struct EmbeddingModel {
  Network net;
  Network velocity;  // momentum buffers
};

struct Architecture {
  std::vector<std::size_t> dims;  // input size followed by hidden widths
  std::size_t code_length = 24;
  int class_count = 8;
};

/// Weights ~ N(0, 0.01^2), centers ~ N(0, 0.5^2), biases 0.
EmbeddingModel init_model(const Architecture& arch, std::uint64_t seed);

struct ForwardCache {
  std::vector<Vector> activations;  // [0] is the input, then each hidden output
  Vector embedding;
  Vector logits;
};

ForwardCache forward(const Network& net, std::span<const double> x);

/// Accumulates parameter gradients of a loss whose partials w.r.t. the
/// embedding and logits are given. Center gradients are the caller's job.
void backpropagate(const Network& net, const ForwardCache& cache,
                   std::span<const double> d_embedding, std::span<const double> d_logits,
                   Network& grad);

struct ObjectiveTerms {
  double scul = 0.0;             // softmax part of l_c
  double classification = 0.0;
  double quantization = 0.0;
  double center_distance = 0.0;  // unweighted sum of |f - c_s|
  double total = 0.0;            // weighted objective
  std::size_t samples = 0;

  ObjectiveTerms& operator+=(const ObjectiveTerms& o);
};

/// Supervised objective for one labeled sample; adds its gradient to `grad`.
/// A sample whose label set covers every class carries no SCUL term.
ObjectiveTerms supervised_gradient(const Network& net, std::span<const double> x,
                                   const LabelSet& labels, const Hyperparams& hp, Network& grad);

/// Value of the supervised objective summed over a batch, no gradients.
ObjectiveTerms supervised_objective(const Network& net, std::span<const data::Sample> batch,
                                    const Hyperparams& hp);

/// v <- momentum * v - lr * g; theta <- theta + v.
void apply_sgd(EmbeddingModel& model, const Network& grad, double lr, double momentum);

/// Gradient of the summed batch objective followed by one SGD step. Throws
/// NumericError when the loss or a parameter is not finite.
ObjectiveTerms backward_step(EmbeddingModel& model, std::span<const data::Sample* const> batch,
                             const Hyperparams& hp, double lr);
ObjectiveTerms backward_step(EmbeddingModel& model, std::span<const data::Sample> batch,
                             const Hyperparams& hp, double lr);

/// Rescales each center column to norm s. Zero columns get a random direction
/// drawn from `seed`.
void warmup_project(Centers& centers, double s, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double scul_loss = 0.0;
  double classification_loss = 0.0;
  double quantization_loss = 0.0;
  double center_distance = 0.0;
  double total_loss = 0.0;  // per-sample means
  double learning_rate = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double final_quantization_loss = 0.0;  // mean over the training set after training
  std::uint64_t steps = 0;
};

std::string to_json(const TrainReport& report);

void check_finite(const ObjectiveTerms& terms, const char* where);

/// Mean l_q of the network's embeddings over `samples`.
double mean_quantization_loss(const Network& net, std::span<const data::Sample> samples,
                              const Hyperparams& hp);

/// Supervised training on the labeled samples of `train`.
std::pair<EmbeddingModel, TrainReport> train_scdh(const data::Dataset& train,
                                                  const Architecture& arch,
                                                  const Hyperparams& hp);
TrainReport train_scdh(EmbeddingModel& model, const data::Dataset& train, const Hyperparams& hp);

/// Embeddings F(x) for every sample, in dataset order.
std::vector<Vector> embed(const Network& net, const data::Dataset& dataset);

// Checkpoint container: "SCDM", version, network count, r, C, layer dims,
// then f64 parameter blocks per network and a JSON metadata block.
struct Checkpoint {
  std::vector<Network> networks;  // student first; a teacher when present
  std::string metadata_json = "{}";
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scdh::model
