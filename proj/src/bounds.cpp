#include "scdh/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "scdh/error.hpp"
#include "scdh/parallel.hpp"

namespace scdh::bounds {
namespace {

using losses::euclidean_distance;

std::vector<double> pairwise_distances(const std::vector<Vector>& codes) {
  const std::size_t n = codes.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d[i * n + j] = d[j * n + i] = euclidean_distance(codes[i], codes[j]);
    }
  }
  return d;
}

// n x C matrix of |h_i - c_l|.
std::vector<double> code_center_distances(const std::vector<Vector>& codes,
                                          const Centers& centers) {
  const std::size_t c = centers.count();
  std::vector<double> d(codes.size() * c);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t l = 0; l < c; ++l) d[i * c + l] = euclidean_distance(codes[i], centers.column(l));
  }
  return d;
}

void check_cap(std::size_t n, std::size_t max_n) {
  if (n > max_n) {
    throw PreconditionError("triplet enumeration refused: n = " + std::to_string(n) +
                            " exceeds cap " + std::to_string(max_n));
  }
}

void check_centers(const LabeledCodeSet& set, const Centers& centers) {
  if (centers.count() != static_cast<std::size_t>(set.class_count)) {
    throw DimensionError("center count does not match class count");
  }
  if (!set.codes.empty() && centers.dim() != set.codes.front().size()) {
    throw DimensionError("center dimension does not match code length");
  }
}

double hinge_unary(std::span<const double> dist_row, int label, const TripletLossKind& kind) {
  const auto c = static_cast<int>(dist_row.size());
  double acc = 0.0;
  for (int l = 0; l < c; ++l) {
    if (l != label) acc += kind(dist_row[label], dist_row[l]);
  }
  return acc / static_cast<double>(c - 1);
}

double softmax_unary(std::span<const double> dist_row, int label) {
  const double shift = *std::min_element(dist_row.begin(), dist_row.end());
  double acc = 0.0;
  for (double d : dist_row) acc += std::exp(-(d - shift));
  return dist_row[label] - shift + std::log(acc);
}

struct UnarySums {
  double classification = 0.0;  // sum_i l_c(h_i, y_i)
  double distance = 0.0;         // sum_i |h_i - c_{y_i}|
};

UnarySums unary_sums(const LabeledCodeSet& set, const Centers& centers,
                     const TripletLossKind& kind, UnaryTerm term) {
  const std::size_t c = centers.count();
  const auto dc = code_center_distances(set.codes, centers);
  UnarySums sums;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::span<const double> row(dc.data() + i * c, c);
    const int y = set.labels[i].front();
    sums.classification += term == UnaryTerm::hinge ? hinge_unary(row, y, kind) : softmax_unary(row, y);
    sums.distance += row[y];
  }
  return sums;
}

void require_balanced_single_label(const LabeledCodeSet& set) {
  set.validate();
  if (!set.single_label()) throw PreconditionError("unary bound needs single-label data");
  if (!set.balanced()) {
    throw PreconditionError("unary bound assumes evenly distributed labels; balance the set first");
  }
}

}  // namespace

bool LabeledCodeSet::balanced() const {
  if (class_count <= 0 || codes.empty() || !single_label()) return false;
  const auto c = static_cast<std::size_t>(class_count);
  if (codes.size() % c != 0) return false;
  std::vector<std::size_t> counts(c, 0);
  for (const auto& y : labels) {
    const int l = y.front();
    if (l < 0 || l >= class_count) return false;
    ++counts[static_cast<std::size_t>(l)];
  }
  return std::all_of(counts.begin(), counts.end(),
                     [&](std::size_t k) { return k == codes.size() / c; });
}

bool LabeledCodeSet::single_label() const {
  return std::all_of(labels.begin(), labels.end(), [](const LabelSet& y) { return y.size() == 1; });
}

void LabeledCodeSet::validate() const {
  if (codes.size() != labels.size()) throw DimensionError("codes and labels differ in length");
  if (class_count < 2) throw PreconditionError("need at least two classes");
  for (const auto& y : labels) y.validate(class_count);
  for (const auto& h : codes) {
    if (h.size() != codes.front().size()) throw DimensionError("codes differ in length");
  }
}

bool within_bound(double lhs, double rhs) {
  return lhs <= rhs + kBoundRelTolerance * std::abs(rhs);
}

double brute_force_triplet_loss(const LabeledCodeSet& set, const TripletLossKind& kind,
                                std::size_t max_n) {
  set.validate();
  if (!set.single_label()) throw PreconditionError("brute_force_triplet_loss needs single labels");
  check_cap(set.size(), max_n);
  const auto first = set.labels.front().front();
  const bool two_labels = std::any_of(set.labels.begin(), set.labels.end(),
                                      [&](const LabelSet& y) { return y.front() != first; });
  if (!two_labels && set.size() > 1) {
    throw PreconditionError("triplet loss needs at least two distinct labels");
  }
  const std::size_t n = set.size();
  const auto d = pairwise_distances(set.codes);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int yi = set.labels[i].front();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || set.labels[j].front() != yi) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (set.labels[k].front() == yi) continue;
        total += kind(d[i * n + j], d[i * n + k]);
      }
    }
  }
  return total;
}

double multilabel_brute_force_loss(const LabeledCodeSet& set, const TripletLossKind& kind,
                                   std::size_t max_n) {
  set.validate();
  check_cap(set.size(), max_n);
  const std::size_t n = set.size();
  const auto d = pairwise_distances(set.codes);
  double total = 0.0;
  std::vector<std::size_t> dissimilar;
  for (std::size_t i = 0; i < n; ++i) {
    dissimilar.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (!set.labels[i].intersects(set.labels[k])) dissimilar.push_back(k);
    }
    if (dissimilar.empty()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto shared = set.labels[i].shared_count(set.labels[j]);
      if (shared == 0) continue;
      double row = 0.0;
      for (std::size_t k : dissimilar) row += kind(d[i * n + j], d[i * n + k]);
      total += static_cast<double>(shared) * row;
    }
  }
  return total;
}

double unary_term(std::span<const double> h, int label, const Centers& centers,
                  const TripletLossKind& kind, UnaryTerm term) {
  const Vector row = losses::center_distances(h, centers);
  return term == UnaryTerm::hinge ? hinge_unary(row, label, kind) : softmax_unary(row, label);
}

double triplet_multiplier(std::size_t n, int class_count) {
  const double per_class = static_cast<double>(n) / class_count;
  return per_class * per_class * (class_count - 1);
}

BoundReport unary_upper_bound(const LabeledCodeSet& set, const Centers& centers,
                              const TripletLossKind& kind, UnaryTerm term) {
  require_balanced_single_label(set);
  check_centers(set, centers);
  BoundReport report;
  report.multiplier = triplet_multiplier(set.size(), set.class_count);
  report.brute_force_loss = brute_force_triplet_loss(set, kind);
  const auto sums = unary_sums(set, centers, kind, term);
  report.bound_value = report.multiplier * (sums.classification + 2.0 * sums.distance);
  if (sums.distance > 0.0) {
    report.lambda_estimate =
        (report.brute_force_loss / report.multiplier - sums.classification) / sums.distance;
  } else {
    report.lambda_degenerate = true;
  }
  report.holds = within_bound(report.brute_force_loss, report.bound_value);
  return report;
}

LambdaEstimate estimate_lambda(const LabeledCodeSet& set, const Centers& centers,
                               const TripletLossKind& kind, UnaryTerm term) {
  const auto report = unary_upper_bound(set, centers, kind, term);
  return {report.lambda_estimate, report.lambda_degenerate};
}

double multilabel_q(int label_count, int class_count, double p) {
  return static_cast<double>(class_count - label_count) / (class_count - 1) *
         std::pow(1.0 - p, label_count);
}

double multilabel_big_q(int class_count, double p) {
  return (1.0 - p) * (1.0 - p) * std::pow(1.0 - p * p, class_count - 2);
}

double multilabel_bound_rhs(const LabeledCodeSet& set, const Centers& centers,
                            const TripletLossKind& kind, double p) {
  set.validate();
  check_centers(set, centers);
  const int c = set.class_count;
  const auto n = static_cast<double>(set.size());
  const double big_q = multilabel_big_q(c, p);
  const auto dc = code_center_distances(set.codes, centers);
  double sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& y = set.labels[i];
    const auto size = static_cast<int>(y.size());
    const double* row = dc.data() + i * static_cast<std::size_t>(c);
    double pair_sum = 0.0;
    double dist_sum = 0.0;
    for (int s : y) {
      dist_sum += row[s];
      for (int t = 0; t < c; ++t) {
        if (!y.contains(t)) pair_sum += kind(row[s], row[t]);
      }
    }
    const double l_mc = size < c ? pair_sum / (c - size) : 0.0;
    const double q = multilabel_q(size, c, p);
    sum += q * l_mc + (big_q + q) * dist_sum;
  }
  return (c - 1) * p * p * n * n * sum;
}

MultilabelBoundReport multilabel_bound_check(const std::vector<Vector>& codes,
                                             const Centers& centers,
                                             const MultilabelBoundConfig& config) {
  if (!(config.p > 0.0 && config.p < 1.0)) throw ValidationError("p must lie in (0, 1)");
  if (config.trials < 1000) throw ValidationError("multilabel bound check needs at least 1000 trials");
  if (config.class_count < 2) throw ValidationError("need at least two classes");

  Rng rng = make_stream(config.seed, 0);
  std::bernoulli_distribution include(config.p);
  LabeledCodeSet set{codes, std::vector<LabelSet>(codes.size()), config.class_count};

  MultilabelBoundReport out;
  out.trials = config.trials;
  double mean_diff = 0.0;
  double m2 = 0.0;
  double sum_loss = 0.0;
  double sum_bound = 0.0;
  for (std::size_t t = 0; t < config.trials; ++t) {
    for (auto& y : set.labels) {
      std::vector<int> members;
      for (;;) {
        members.clear();
        for (int l = 0; l < config.class_count; ++l) {
          if (include(rng)) members.push_back(l);
        }
        if (!members.empty()) break;
        ++out.resampled_empty_sets;
      }
      y = LabelSet(std::move(members));
    }
    const double loss = multilabel_brute_force_loss(set, config.kind);
    const double rhs = multilabel_bound_rhs(set, centers, config.kind, config.p);
    sum_loss += loss;
    sum_bound += rhs;
    // Welford on the per-trial difference L - RHS.
    const double diff = loss - rhs;
    const double delta = diff - mean_diff;
    mean_diff += delta / static_cast<double>(t + 1);
    m2 += delta * (diff - mean_diff);
  }
  const auto trials = static_cast<double>(config.trials);
  out.mean_loss = sum_loss / trials;
  out.mean_bound = sum_bound / trials;
  out.stderr_difference = std::sqrt(m2 / (trials - 1.0) / trials);
  out.report.brute_force_loss = out.mean_loss;
  out.report.bound_value = out.mean_bound + config.z_one_sided * out.stderr_difference;
  out.report.multiplier = (config.class_count - 1) * config.p * config.p *
                          static_cast<double>(codes.size() * codes.size());
  out.report.holds = within_bound(out.report.brute_force_loss, out.report.bound_value);
  return out;
}

LabeledCodeSet random_balanced_instance(Rng& rng, std::size_t n, int class_count, std::size_t r) {
  if (n % static_cast<std::size_t>(class_count) != 0) {
    throw PreconditionError("balanced instance needs n divisible by C");
  }
  LabeledCodeSet set;
  set.class_count = class_count;
  std::bernoulli_distribution coin(0.5);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(class_count));
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    Vector h(r);
    for (auto& x : h) x = coin(rng) ? 1.0 : -1.0;
    set.codes.push_back(std::move(h));
    set.labels.push_back(LabelSet::single(labels[i]));
  }
  return set;
}

namespace {

// Three center regimes: free Gaussian, per-class code means, and perturbed
// class means (the regime where the bound is tightest).
Centers random_centers(Rng& rng, const LabeledCodeSet& set, std::size_t r) {
  const auto c = static_cast<std::size_t>(set.class_count);
  Centers centers(r, c);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int regime = std::uniform_int_distribution<int>(0, 2)(rng);
  if (regime == 0) {
    const double scale = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    for (double& x : centers.data()) x = scale * normal(rng);
    return centers;
  }
  std::vector<double> counts(c, 0.0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto y = static_cast<std::size_t>(set.labels[i].front());
    counts[y] += 1.0;
    auto col = centers.column(y);
    for (std::size_t k = 0; k < r; ++k) col[k] += set.codes[i][k];
  }
  for (std::size_t l = 0; l < c; ++l) {
    for (double& x : centers.column(l)) x /= std::max(counts[l], 1.0);
  }
  if (regime == 2) {
    for (double& x : centers.data()) x += 0.1 * normal(rng);
  }
  return centers;
}

}  // namespace

UnaryBoundSuiteResult run_unary_bound_suite(const UnaryBoundSuiteConfig& config) {
  if (config.class_counts.empty()) throw ValidationError("no class counts given");
  UnaryBoundSuiteResult result;
  result.instances.resize(config.instances);
  parallel_for(config.instances, config.threads, [&](std::size_t idx) {
    Rng rng = make_stream(config.seed, idx);
    const int c = config.class_counts[std::uniform_int_distribution<std::size_t>(
        0, config.class_counts.size() - 1)(rng)];
    const auto cc = static_cast<std::size_t>(c);
    const std::size_t min_per_class = std::max<std::size_t>(1, (3 + cc - 1) / cc);
    const std::size_t max_per_class = std::max(min_per_class, config.max_n / cc);
    const std::size_t per_class =
        std::uniform_int_distribution<std::size_t>(min_per_class, max_per_class)(rng);
    const std::size_t r = std::uniform_int_distribution<std::size_t>(1, config.max_r)(rng);
    const double margins[] = {0.0, 0.5, 1.0, 2.0};
    const double margin = margins[std::uniform_int_distribution<int>(0, 3)(rng)];

    auto set = random_balanced_instance(rng, per_class * cc, c, r);
    const auto centers = random_centers(rng, set, r);
    auto& inst = result.instances[idx];
    inst.index = idx;
    inst.n = set.size();
    inst.class_count = c;
    inst.r = r;
    inst.margin = margin;
    inst.report = unary_upper_bound(set, centers, TripletLossKind::margin_loss(margin));
  });
  for (const auto& inst : result.instances) {
    if (!inst.report.holds) ++result.violations;
    if (!inst.report.lambda_degenerate) {
      result.max_lambda = std::max(result.max_lambda, inst.report.lambda_estimate);
      if (inst.report.lambda_estimate > 2.0 + 1e-9) ++result.lambda_violations;
    }
  }
  return result;
}

MultilabelSuiteResult run_multilabel_suite(const MultilabelSuiteConfig& config) {
  if (config.class_counts.empty() || config.probabilities.empty()) {
    throw ValidationError("multilabel suite needs class counts and probabilities");
  }
  MultilabelSuiteResult result;
  result.entries.resize(config.configurations);
  parallel_for(config.configurations, config.threads, [&](std::size_t idx) {
    Rng rng = make_stream(config.seed, idx);
    // Cycle deterministically through the (C, p) combinations.
    const int c = config.class_counts[idx % config.class_counts.size()];
    const double p =
        config.probabilities[(idx / config.class_counts.size()) % config.probabilities.size()];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(
        std::min<std::size_t>(6, config.max_n), config.max_n)(rng);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> codes(n, Vector(config.r));
    for (auto& h : codes) {
      for (auto& x : h) x = coin(rng) ? 1.0 : -1.0;
    }
    Centers centers(config.r, static_cast<std::size_t>(c));
    for (double& x : centers.data()) x = normal(rng);

    MultilabelBoundConfig mc;
    mc.class_count = c;
    mc.p = p;
    mc.trials = config.trials;
    mc.seed = mix64(config.seed) ^ idx;
    auto& entry = result.entries[idx];
    entry.index = idx;
    entry.n = n;
    entry.class_count = c;
    entry.p = p;
    entry.result = multilabel_bound_check(codes, centers, mc);
  });
  for (const auto& e : result.entries) {
    if (!e.result.report.holds) ++result.violations;
  }
  return result;
}

void ToyConfig::validate() const {
  if (class_count < 2) throw ValidationError("toy experiment needs at least two clusters");
  if (r < static_cast<std::size_t>(class_count)) {
    throw ValidationError("toy experiment needs r >= C to place equidistant means");
  }
  if (samples_per_cluster < 2) throw ValidationError("need at least two samples per cluster");
  for (double s : sigma_grid) {
    if (!(s > 0.0)) throw ValidationError("sigma values must be positive");
  }
  for (double d : d_grid) {
    if (!(d >= 0.0)) throw ValidationError("distances must be nonnegative");
  }
}

ToyRow toy_cell(const ToyConfig& config, double sigma, double d, std::uint64_t cell_index) {
  Rng rng = make_stream(config.seed, cell_index);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto c = static_cast<std::size_t>(config.class_count);
  const std::size_t m = config.samples_per_cluster;
  const std::size_t n = c * m;
  const auto kind = TripletLossKind::margin_loss(config.margin);

  // Means on scaled basis vectors: pairwise distance exactly d.
  Centers means(config.r, c);
  for (std::size_t l = 0; l < c; ++l) means.column(l)[l] = d / std::sqrt(2.0);

  std::vector<Vector> codes(n, Vector(config.r));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i / m);
    const auto mu = means.column(static_cast<std::size_t>(labels[i]));
    for (std::size_t k = 0; k < config.r; ++k) codes[i][k] = mu[k] + sigma * normal(rng);
  }
  const auto pd = pairwise_distances(codes);
  const auto dc = code_center_distances(codes, means);

  double sum_lc = 0.0;
  double sum_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(dc.data() + i * c, c);
    sum_lc += hinge_unary(row, labels[i], kind);
    sum_dist += row[static_cast<std::size_t>(labels[i])];
  }

  ToyRow out;
  out.sigma = sigma;
  out.d = d;
  const double multiplier = triplet_multiplier(n, config.class_count);
  out.unary_upper_bound = multiplier * (sum_lc + 2.0 * sum_dist);

  auto triplet_terms = [&](std::size_t i, std::size_t j, std::size_t k, double& loss, double& relaxed) {
    const auto yi = static_cast<std::size_t>(labels[i]);
    const auto yk = static_cast<std::size_t>(labels[k]);
    loss = kind(pd[i * n + j], pd[i * n + k]);
    relaxed = kind(dc[i * c + yi] + dc[j * c + yi], dc[i * c + yk] - dc[k * c + yk]);
  };

  double loss_sum = 0.0;
  double relaxed_sum = 0.0;
  if (n < config.enumeration_limit) {
    out.enumerated = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || labels[j] != labels[i]) continue;
        for (std::size_t k = 0; k < n; ++k) {
          if (labels[k] == labels[i]) continue;
          double l, rl;
          triplet_terms(i, j, k, l, rl);
          loss_sum += l;
          relaxed_sum += rl;
        }
      }
    }
  } else {
    // Clusters are equal-sized, so a uniform anchor followed by uniform
    // positive/negative picks is uniform over the triplet set.
    const double total = static_cast<double>(n) * static_cast<double>(m - 1) *
                         static_cast<double>(n - m);
    std::uniform_int_distribution<std::size_t> anchor(0, n - 1);
    std::uniform_int_distribution<std::size_t> pos(0, m - 2);
    std::uniform_int_distribution<std::size_t> neg(0, n - m - 1);
    for (std::size_t s = 0; s < config.sampled_triplets; ++s) {
      const std::size_t i = anchor(rng);
      const std::size_t block = i / m * m;
      std::size_t j = block + pos(rng);
      if (j >= i) ++j;
      std::size_t k = neg(rng);
      if (k >= block) k += m;
      double l, rl;
      triplet_terms(i, j, k, l, rl);
      loss_sum += l;
      relaxed_sum += rl;
    }
    loss_sum *= total / static_cast<double>(config.sampled_triplets);
    relaxed_sum *= total / static_cast<double>(config.sampled_triplets);
  }
  out.triplet_loss = loss_sum;
  out.relaxed_triplet_loss = relaxed_sum;
  if (sum_dist > 0.0) {
    out.lambda_estimate = (loss_sum / multiplier - sum_lc) / sum_dist;
  } else {
    out.lambda_degenerate = true;
  }
  return out;
}

std::vector<ToyRow> toy_lambda_grid(const ToyConfig& config) {
  config.validate();
  const std::size_t nd = config.d_grid.size();
  std::vector<ToyRow> rows(config.sigma_grid.size() * nd);
  parallel_for(rows.size(), config.threads, [&](std::size_t idx) {
    rows[idx] = toy_cell(config, config.sigma_grid[idx / nd], config.d_grid[idx % nd], idx);
  });
  return rows;
}

std::vector<ToyRow> toy_lambda_path(const ToyConfig& config) {
  config.validate();
  if (config.sigma_grid.size() != config.d_grid.size()) {
    throw ValidationError("path mode pairs sigma and d values; grids must have equal length");
  }
  std::vector<ToyRow> rows(config.sigma_grid.size());
  // Offset the stream index so path cells never reuse grid streams.
  parallel_for(rows.size(), config.threads, [&](std::size_t idx) {
    rows[idx] = toy_cell(config, config.sigma_grid[idx], config.d_grid[idx], (1ULL << 32) + idx);
  });
  return rows;
}

}  // namespace scdh::bounds
