#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scdh/types.hpp"

namespace scdh::data {

struct Sample {
  std::uint64_t id = 0;
  std::vector<float> features;
  LabelSet labels;  // empty means unlabeled

  bool labeled() const noexcept { return !labels.empty(); }
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::size_t dim = 0;
  int class_count = 0;
  bool multilabel = false;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool has_unlabeled() const;
  std::vector<std::size_t> class_counts() const;  // single-label only
  /// Row-major n x dim copy in double precision.
  std::vector<double> feature_matrix() const;
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticConfig {
  int class_count = 8;
  std::size_t feature_dim = 32;
  double cluster_std = 1.15;
  double center_spread = 1.0;
  std::size_t samples_per_class = 1100;
  std::optional<double> multilabel_p;
  std::uint64_t seed = 1;

  void validate() const;
};

/// C Gaussian clusters with means ~ N(0, spread^2 I) and isotropic std sigma.
Dataset gen_gaussian_clusters(const SyntheticConfig& config);

/// Multilabel mixture: label sets drawn with independent inclusion probability
/// p (clamped to 0.99, empty sets redrawn); features are the mean of the
/// member-label prototypes plus N(0, sigma^2 I) noise. C * samples_per_class
/// samples are drawn.
Dataset gen_multilabel(const SyntheticConfig& config);

/// Upsamples every class to the largest class count by drawing members with
/// replacement. Original samples keep their position; duplicates are appended
/// and keep the id of the sample they copy.
Dataset balance_upsample(const Dataset& dataset, std::uint64_t seed);

struct Splits {
  Dataset train;
  Dataset query;
  Dataset database;
};

/// Disjoint train/query/database split. Single-label data is split per class
/// (sizes must divide evenly by C); multilabel data is split after a shuffle.
Splits split_dataset(const Dataset& dataset, std::size_t train, std::size_t query,
                     std::size_t database, std::uint64_t seed);

/// Keeps labels on a `keep_fraction` share of the samples and strips the rest.
Dataset strip_labels(const Dataset& dataset, double keep_fraction, std::uint64_t seed);

/// Only the labeled samples.
Dataset labeled_subset(const Dataset& dataset);

std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// One sample per line: feature values then a label field ("3", "1|4|7", or
/// empty for unlabeled). class_count 0 infers C from the largest label.
Dataset parse_csv(std::string_view text, int class_count = 0, bool multilabel = false);
Dataset import_csv(const std::filesystem::path& path, int class_count = 0, bool multilabel = false);

}  // namespace scdh::data
