#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace scdh {

using Vector = std::vector<double>;

/// Sorted, duplicate-free set of 0-based label indices.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<int> labels);
  explicit LabelSet(std::vector<int> labels);

  static LabelSet single(int label) { return LabelSet({label}); }

  bool empty() const noexcept { return labels_.empty(); }
  std::size_t size() const noexcept { return labels_.size(); }
  bool contains(int label) const noexcept;
  std::size_t shared_count(const LabelSet& other) const noexcept;
  bool intersects(const LabelSet& other) const noexcept { return shared_count(other) > 0; }

  // Throws LabelError when empty or when a member is outside [0, class_count).
  void validate(int class_count) const;

  const std::vector<int>& labels() const noexcept { return labels_; }
  auto begin() const noexcept { return labels_.begin(); }
  auto end() const noexcept { return labels_.end(); }
  int front() const { return labels_.front(); }

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<int> labels_;
};

/// The r x C Semantic Cluster center matrix, stored column by column so each
/// center is a contiguous span of length r.
class Centers {
 public:
  Centers() = default;
  Centers(std::size_t dim, std::size_t count);
  Centers(std::size_t dim, std::size_t count, std::vector<double> column_major);
  static Centers from_columns(const std::vector<Vector>& columns);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return count_; }

  std::span<double> column(std::size_t j) { return {data_.data() + j * dim_, dim_}; }
  std::span<const double> column(std::size_t j) const { return {data_.data() + j * dim_, dim_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<double> data_;
};

}  // namespace scdh
