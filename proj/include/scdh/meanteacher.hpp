#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scdh/data.hpp"
#include "scdh/model.hpp"
#include "scdh/random.hpp"

namespace scdh::meanteacher {

/// EMA copy of the student. Only ema_update writes to it.
struct TeacherState {
  model::Network net;
  double ema_decay = 0.999;
};

TeacherState make_teacher(const model::Network& student, double ema_decay);

/// theta_T <- decay * theta_T + (1 - decay) * theta_S.
void ema_update(TeacherState& teacher, const model::Network& student, double decay);

/// Decay used at 0-based step t: min(1 - 1/(t + 1), ceiling).
double effective_decay(std::uint64_t step, double ceiling);

Vector perturb(std::span<const double> x, double noise_std, Rng& rng);

/// ||softmax(u) - softmax(v)||^2.
double softmax_distance(std::span<const double> u, std::span<const double> v);
/// Gradient of softmax_distance w.r.t. u with v held constant.
Vector softmax_distance_gradient(std::span<const double> u, std::span<const double> v);

struct ConsistencyTerms {
  double logits = 0.0;     // d(a, a_T)
  double distances = 0.0;  // d(-dist, -dist_T)
  Vector d_logits;         // gradients w.r.t. the student outputs only
  Vector d_negdists;
};

ConsistencyTerms consistency_losses(std::span<const double> student_logits,
                                    std::span<const double> teacher_logits,
                                    std::span<const double> student_negdists,
                                    std::span<const double> teacher_negdists);

struct SemiDataset {
  data::Dataset labeled;
  data::Dataset unlabeled;

  /// Splits a dataset by whether each sample carries labels.
  static SemiDataset from(const data::Dataset& dataset);
  void validate() const;
};

struct MeanTeacherConfig {
  double w = 50.0;
  double ema_decay = 0.999;
  double noise_std = 0.1;
  double rampup_fraction = 0.2;  // of all optimizer steps
  int unlabeled_batch_size = 64;

  void validate() const;
  friend bool operator==(const MeanTeacherConfig&, const MeanTeacherConfig&) = default;
};

std::string to_json(const MeanTeacherConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
MeanTeacherConfig mean_teacher_config_from_json(const std::string& text);

/// Consistency weight at `step` of `total_steps`: linear from 0 up to w.
double consistency_weight(const MeanTeacherConfig& config, std::uint64_t step,
                          std::uint64_t total_steps);

struct ConsistencyRecord {
  double logits = 0.0;          // per-sample means over the consistency pool
  double distances = 0.0;
  double unlabeled_quantization = 0.0;
  double weight = 0.0;          // weight at the last step of the epoch
};

struct MtResult {
  model::EmbeddingModel student;
  TeacherState teacher;
  model::TrainReport report;    // supervised terms, as in the supervised trainer
  std::vector<ConsistencyRecord> consistency;
};

// Each step takes the next labeled mini-batch (same shuffle stream as the
// supervised trainer) plus unlabeled_batch_size unlabeled draws. Supervised
// terms use the clean labeled inputs; l_q is applied to clean unlabeled
// inputs; consistency compares the student on one perturbation of every
// sample in the step with the teacher on another.
MtResult train_mt_scdh(const SemiDataset& data, const model::Architecture& arch,
                       const model::Hyperparams& hp, const MeanTeacherConfig& config);

std::string to_json(const MtResult& result);

}  // namespace scdh::meanteacher
