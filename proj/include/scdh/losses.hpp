#pragma once

#include <span>

#include "scdh/types.hpp"

// Loss values and hand-derived gradients for SCUL, the quantization penalty,
// the classifier head, and the reference triplet loss. Everything here is a
// pure function of its arguments and works in double precision.

namespace scdh::losses {

double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Distances from `h` to every center column.
Vector center_distances(std::span<const double> h, const Centers& centers);

/// softmax(-distances), max-shifted.
Vector softmax_of_negated(std::span<const double> distances);

/// p_k = exp(-|h - c_k|) / sum_j exp(-|h - c_j|).
Vector neg_dist_softmax(std::span<const double> h, const Centers& centers);

struct SculGradients {
  Vector embedding;
  Centers centers;  // zero columns where the loss does not touch a center
};

/// -log p_y + lambda * |f - c_y| for a singleton label set.
double scul_loss(std::span<const double> f, const LabelSet& y, const Centers& centers,
                 double lambda);
SculGradients scul_gradients(std::span<const double> f, const LabelSet& y,
                             const Centers& centers, double lambda);

/// (1/|Y|) sum_{s in Y} -log p_s + lambda * sum_{s in Y} |f - c_s|. Requires |Y| < C.
double scul_multilabel_loss(std::span<const double> f, const LabelSet& labels,
                            const Centers& centers, double lambda);
SculGradients scul_multilabel_gradients(std::span<const double> f, const LabelSet& labels,
                                        const Centers& centers, double lambda);

/// Value, gradients and the bare center-distance sum in one pass; used by the
/// trainer. Accepts any label set with 1 <= |Y| < C.
struct SculEvaluation {
  double loss = 0.0;
  double softmax_term = 0.0;    // (1/|Y|) sum -log p_s
  double center_distance = 0.0; // sum_{s in Y} |f - c_s|
  SculGradients gradients;
};
SculEvaluation scul_evaluate(std::span<const double> f, const LabelSet& labels,
                             const Centers& centers, double lambda);

/// 1 - sum|f_i| / (||1||_q ||f||_p). Requires 1/p + 1/q = 1; the zero vector maps to 1.
double quantization_loss(std::span<const double> f, double p = 3.0, double q = 1.5);
Vector quantization_gradient(std::span<const double> f, double p = 3.0, double q = 1.5);

struct LossWithGradient {
  double value = 0.0;
  Vector gradient;
};

/// Softmax cross-entropy on the classifier logits, averaged over the label set.
LossWithGradient classification_loss(std::span<const double> logits, const LabelSet& labels);

/// g(a, b) for the triplet ranking loss. Only the margin form [m + a - b]_+ is
/// provided; it is nonnegative and 1-Lipschitz monotone in each argument.
struct TripletLossKind {
  double margin = 1.0;

  static TripletLossKind margin_loss(double m);
  double operator()(double d_pos, double d_neg) const;
};

double triplet_ranking_loss(double d_pos, double d_neg, const TripletLossKind& kind);

}  // namespace scdh::losses
