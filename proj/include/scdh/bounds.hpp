#pragma once

#include <cstdint>
#include <vector>

#include "scdh/losses.hpp"
#include "scdh/random.hpp"
#include "scdh/types.hpp"

// Numerical certification of the unary upper bounds on triplet ranking losses.
//
// Triplets are ordered (i, j, k) with i != j, i and j similar, i and k
// dissimilar. Single-label similarity is label equality; multilabel similarity
// is a nonempty label intersection, and each triplet is weighted by |Y_i ∩ Y_j|.

namespace scdh::bounds {

using losses::TripletLossKind;

struct LabeledCodeSet {
  std::vector<Vector> codes;
  std::vector<LabelSet> labels;
  int class_count = 0;

  std::size_t size() const noexcept { return codes.size(); }
  /// Every label in [0, C) has the same multiplicity n / C.
  bool balanced() const;
  bool single_label() const;
  void validate() const;
};

/// Which classification term stands in for l_c on the bound side.
enum class UnaryTerm {
  hinge,   // (1/(C-1)) sum_{l != y} g(|h - c_y|, |h - c_l|), same g as the triplet loss
  softmax  // -log p_y over negative distances
};

struct BoundReport {
  double brute_force_loss = 0.0;
  double bound_value = 0.0;
  double multiplier = 0.0;
  double lambda_estimate = 0.0;
  bool lambda_degenerate = false;
  bool holds = false;
};

struct LambdaEstimate {
  double value = 0.0;
  bool degenerate = false;
};

inline constexpr std::size_t kDefaultEnumerationCap = 64;
inline constexpr double kBoundRelTolerance = 1e-9;

bool within_bound(double lhs, double rhs);

double brute_force_triplet_loss(const LabeledCodeSet& set, const TripletLossKind& kind,
                                std::size_t max_n = kDefaultEnumerationCap);
double multilabel_brute_force_loss(const LabeledCodeSet& set, const TripletLossKind& kind,
                                   std::size_t max_n = kDefaultEnumerationCap);

/// l_c(h_i, y_i) for the chosen unary term.
double unary_term(std::span<const double> h, int label, const Centers& centers,
                  const TripletLossKind& kind, UnaryTerm term);

/// (n/C)^2 (C-1).
double triplet_multiplier(std::size_t n, int class_count);

/// L_t <= (n/C)^2 (C-1) sum_i [l_c(h_i, y_i) + 2 |h_i - c_{y_i}|], valid for any centers.
BoundReport unary_upper_bound(const LabeledCodeSet& set, const Centers& centers,
                              const TripletLossKind& kind, UnaryTerm term = UnaryTerm::hinge);

/// (L_t / M_t - sum_i l_c) / sum_i |h_i - c_{y_i}|.
LambdaEstimate estimate_lambda(const LabeledCodeSet& set, const Centers& centers,
                               const TripletLossKind& kind, UnaryTerm term = UnaryTerm::hinge);

// --- Multilabel bound under independent per-label inclusion probability p ---

/// q(x) = (C - x)/(C - 1) (1 - p)^x
double multilabel_q(int label_count, int class_count, double p);
/// Q = (1 - p)^2 (1 - p^2)^(C - 2)
double multilabel_big_q(int class_count, double p);

/// Right-hand side for one realisation of the label sets.
double multilabel_bound_rhs(const LabeledCodeSet& set, const Centers& centers,
                            const TripletLossKind& kind, double p);

struct MultilabelBoundReport {
  BoundReport report;  // brute_force_loss = mean L_mt; bound_value = mean RHS + confidence margin
  double mean_loss = 0.0;
  double mean_bound = 0.0;
  double stderr_difference = 0.0;
  std::size_t trials = 0;
  std::size_t resampled_empty_sets = 0;
};

struct MultilabelBoundConfig {
  int class_count = 3;
  double p = 0.3;
  std::size_t trials = 5000;
  std::uint64_t seed = 0;
  double z_one_sided = 2.3263478740408408;  // 99% one-sided normal quantile
  TripletLossKind kind{};
};

/// Monte-Carlo check of E[L_mt] against the expected right-hand side. Label
/// sets are drawn per trial with independent inclusion probability p and
/// empty sets are rejected and redrawn.
MultilabelBoundReport multilabel_bound_check(const std::vector<Vector>& codes,
                                             const Centers& centers,
                                             const MultilabelBoundConfig& config);

// --- Randomised certification suites ---

struct UnaryBoundSuiteConfig {
  std::size_t instances = 1000;
  std::size_t max_n = 12;
  std::vector<int> class_counts{2, 3, 4};
  std::size_t max_r = 16;
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
};

struct UnaryBoundInstance {
  std::size_t index = 0;
  std::size_t n = 0;
  int class_count = 0;
  std::size_t r = 0;
  double margin = 0.0;
  BoundReport report;
};

struct UnaryBoundSuiteResult {
  std::vector<UnaryBoundInstance> instances;
  std::size_t violations = 0;
  std::size_t lambda_violations = 0;  // lambda estimate above 2
  double max_lambda = 0.0;
};

/// Random balanced instances with +-1 codes and unconstrained real centers.
LabeledCodeSet random_balanced_instance(Rng& rng, std::size_t n, int class_count, std::size_t r);
UnaryBoundSuiteResult run_unary_bound_suite(const UnaryBoundSuiteConfig& config);

struct MultilabelSuiteConfig {
  std::size_t configurations = 20;
  std::size_t max_n = 12;
  std::size_t r = 8;
  std::vector<int> class_counts{3, 4, 5};
  std::vector<double> probabilities{0.2, 0.3, 0.5};
  std::size_t trials = 5000;
  std::uint64_t seed = 20240602;
  unsigned threads = 1;
};

struct MultilabelSuiteEntry {
  std::size_t index = 0;
  std::size_t n = 0;
  int class_count = 0;
  double p = 0.0;
  MultilabelBoundReport result;
};

struct MultilabelSuiteResult {
  std::vector<MultilabelSuiteEntry> entries;
  std::size_t violations = 0;
};

MultilabelSuiteResult run_multilabel_suite(const MultilabelSuiteConfig& config);

// --- Gaussian toy experiment for the lambda landscape ---

struct ToyConfig {
  std::size_t r = 48;
  int class_count = 2;
  std::vector<double> sigma_grid{0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  std::vector<double> d_grid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t samples_per_cluster = 200;
  std::uint64_t seed = 7;
  double margin = 1.0;
  std::size_t enumeration_limit = 30;  // full enumeration when n < limit
  std::size_t sampled_triplets = 1'000'000;
  unsigned threads = 1;

  void validate() const;
};

struct ToyRow {
  double sigma = 0.0;  // per-coordinate standard deviation
  double d = 0.0;      // distance between Gaussian means
  double triplet_loss = 0.0;
  double unary_upper_bound = 0.0;
  double relaxed_triplet_loss = 0.0;
  double lambda_estimate = 0.0;
  bool lambda_degenerate = false;
  bool enumerated = false;
};

/// One row per (sigma, d) in the cartesian product, sigma-major.
std::vector<ToyRow> toy_lambda_grid(const ToyConfig& config);
/// One row per zipped (sigma_grid[i], d_grid[i]) pair; the grids must have equal length.
std::vector<ToyRow> toy_lambda_path(const ToyConfig& config);
/// A single cell, drawn from stream `cell_index` of the config seed.
ToyRow toy_cell(const ToyConfig& config, double sigma, double d, std::uint64_t cell_index);

}  // namespace scdh::bounds
