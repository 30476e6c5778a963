#include "scdh/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "scdh/error.hpp"

namespace scdh::losses {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_holder_pair(double p, double q) {
  if (!(p > 1.0) || !(q > 1.0) || std::abs(1.0 / p + 1.0 / q - 1.0) > 1e-9) {
    throw ValidationError("quantization loss needs dual exponents with 1/p + 1/q = 1");
  }
}

double p_norm(std::span<const double> f, double p) {
  double acc = 0.0;
  for (double x : f) acc += std::pow(std::abs(x), p);
  return std::pow(acc, 1.0 / p);
}

}  // namespace

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "euclidean_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

Vector center_distances(std::span<const double> h, const Centers& centers) {
  require_same_length(h.size(), centers.dim(), "center_distances");
  Vector out(centers.count());
  for (std::size_t j = 0; j < centers.count(); ++j) {
    out[j] = euclidean_distance(h, centers.column(j));
  }
  return out;
}

Vector softmax_of_negated(std::span<const double> distances) {
  require_finite(distances, "softmax_of_negated");
  if (distances.empty()) return {};
  const double shift = *std::min_element(distances.begin(), distances.end());
  Vector p(distances.size());
  double total = 0.0;
  for (std::size_t j = 0; j < distances.size(); ++j) {
    p[j] = std::exp(-(distances[j] - shift));
    total += p[j];
  }
  for (double& x : p) x /= total;
  return p;
}

Vector neg_dist_softmax(std::span<const double> h, const Centers& centers) {
  require_finite(h, "neg_dist_softmax");
  require_finite(centers.data(), "neg_dist_softmax");
  return softmax_of_negated(center_distances(h, centers));
}

SculEvaluation scul_evaluate(std::span<const double> f, const LabelSet& labels,
                             const Centers& centers, double lambda) {
  const auto class_count = static_cast<int>(centers.count());
  labels.validate(class_count);
  if (labels.size() >= centers.count()) {
    throw LabelError("label set covers every class; no negative class exists");
  }
  if (lambda < 0.0) throw ValidationError("lambda must be nonnegative");
  require_finite(f, "scul");
  require_finite(centers.data(), "scul");

  const Vector dist = center_distances(f, centers);
  const Vector prob = softmax_of_negated(dist);
  const double inv_size = 1.0 / static_cast<double>(labels.size());
  const double log_norm = [&] {
    const double shift = *std::min_element(dist.begin(), dist.end());
    double acc = 0.0;
    for (double d : dist) acc += std::exp(-(d - shift));
    return std::log(acc) - shift;
  }();

  SculEvaluation ev;
  for (int s : labels) {
    ev.softmax_term += dist[s] + log_norm;
    ev.center_distance += dist[s];
  }
  ev.softmax_term *= inv_size;
  ev.loss = ev.softmax_term + lambda * ev.center_distance;

  // dL/dd_j = [j in Y](1/|Y| + lambda) - p_j ; d|f-c_j|/df = (f-c_j)/|f-c_j| = -d|f-c_j|/dc_j.
  const std::size_t r = f.size();
  ev.gradients.embedding.assign(r, 0.0);
  ev.gradients.centers = Centers(r, centers.count());
  for (std::size_t j = 0; j < centers.count(); ++j) {
    const double coef = (labels.contains(static_cast<int>(j)) ? inv_size + lambda : 0.0) - prob[j];
    if (dist[j] <= 0.0) continue;  // zero-distance subgradient
    const auto c = centers.column(j);
    auto gc = ev.gradients.centers.column(j);
    for (std::size_t i = 0; i < r; ++i) {
      const double unit = (f[i] - c[i]) / dist[j];
      ev.gradients.embedding[i] += coef * unit;
      gc[i] = -coef * unit;
    }
  }
  return ev;
}

double scul_loss(std::span<const double> f, const LabelSet& y, const Centers& centers,
                 double lambda) {
  if (y.size() != 1) throw LabelError("scul_loss expects exactly one label");
  return scul_evaluate(f, y, centers, lambda).loss;
}

SculGradients scul_gradients(std::span<const double> f, const LabelSet& y,
                             const Centers& centers, double lambda) {
  if (y.size() != 1) throw LabelError("scul_gradients expects exactly one label");
  return scul_evaluate(f, y, centers, lambda).gradients;
}

double scul_multilabel_loss(std::span<const double> f, const LabelSet& labels,
                            const Centers& centers, double lambda) {
  return scul_evaluate(f, labels, centers, lambda).loss;
}

SculGradients scul_multilabel_gradients(std::span<const double> f, const LabelSet& labels,
                                        const Centers& centers, double lambda) {
  return scul_evaluate(f, labels, centers, lambda).gradients;
}

double quantization_loss(std::span<const double> f, double p, double q) {
  check_holder_pair(p, q);
  require_finite(f, "quantization_loss");
  const double l1 = std::accumulate(f.begin(), f.end(), 0.0,
                                    [](double acc, double x) { return acc + std::abs(x); });
  if (l1 == 0.0) return 1.0;
  const double ones_norm = std::pow(static_cast<double>(f.size()), 1.0 / q);
  const double loss = 1.0 - l1 / (ones_norm * p_norm(f, p));
  return std::clamp(loss, 0.0, 1.0);
}

Vector quantization_gradient(std::span<const double> f, double p, double q) {
  check_holder_pair(p, q);
  require_finite(f, "quantization_gradient");
  Vector grad(f.size(), 0.0);
  const double l1 = std::accumulate(f.begin(), f.end(), 0.0,
                                    [](double acc, double x) { return acc + std::abs(x); });
  if (l1 == 0.0) return grad;
  const double ones_norm = std::pow(static_cast<double>(f.size()), 1.0 / q);
  const double norm = p_norm(f, p);
  const double norm_pow = std::pow(norm, 1.0 - p);
  const double denom = ones_norm * norm * norm;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double s = sign(f[i]);
    const double dnorm = s * std::pow(std::abs(f[i]), p - 1.0) * norm_pow;
    grad[i] = -(s * norm - l1 * dnorm) / denom;
  }
  return grad;
}

LossWithGradient classification_loss(std::span<const double> logits, const LabelSet& labels) {
  labels.validate(static_cast<int>(logits.size()));
  require_finite(logits, "classification_loss");
  const double shift = *std::max_element(logits.begin(), logits.end());
  Vector prob(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    prob[k] = std::exp(logits[k] - shift);
    total += prob[k];
  }
  const double log_total = std::log(total) + shift;
  for (double& x : prob) x /= total;

  const double inv_size = 1.0 / static_cast<double>(labels.size());
  LossWithGradient out;
  out.gradient = prob;
  for (int s : labels) {
    out.value += (log_total - logits[s]) * inv_size;
    out.gradient[s] -= inv_size;
  }
  return out;
}

TripletLossKind TripletLossKind::margin_loss(double m) {
  if (m < 0.0) throw ValidationError("triplet margin must be nonnegative");
  return TripletLossKind{m};
}

double TripletLossKind::operator()(double d_pos, double d_neg) const {
  return std::max(0.0, margin + d_pos - d_neg);
}

double triplet_ranking_loss(double d_pos, double d_neg, const TripletLossKind& kind) {
  return kind(d_pos, d_neg);
}

}  // namespace scdh::losses
