#include "scdh/types.hpp"

#include <algorithm>
#include <string>

#include "scdh/error.hpp"

namespace scdh {

LabelSet::LabelSet(std::initializer_list<int> labels) : LabelSet(std::vector<int>(labels)) {}

LabelSet::LabelSet(std::vector<int> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end());
  if (std::adjacent_find(labels_.begin(), labels_.end()) != labels_.end()) {
    throw LabelError("label set contains duplicate labels");
  }
}

bool LabelSet::contains(int label) const noexcept {
  return std::binary_search(labels_.begin(), labels_.end(), label);
}

std::size_t LabelSet::shared_count(const LabelSet& other) const noexcept {
  std::size_t shared = 0;
  auto a = labels_.begin();
  auto b = other.labels_.begin();
  while (a != labels_.end() && b != other.labels_.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++shared;
      ++a;
      ++b;
    }
  }
  return shared;
}

void LabelSet::validate(int class_count) const {
  if (labels_.empty()) throw LabelError("label set is empty");
  if (labels_.front() < 0 || labels_.back() >= class_count) {
    throw LabelError("label out of range [0, " + std::to_string(class_count) + ")");
  }
}

Centers::Centers(std::size_t dim, std::size_t count)
    : dim_(dim), count_(count), data_(dim * count, 0.0) {}

Centers::Centers(std::size_t dim, std::size_t count, std::vector<double> column_major)
    : dim_(dim), count_(count), data_(std::move(column_major)) {
  if (data_.size() != dim * count) {
    throw DimensionError("center data has " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(dim * count));
  }
}

Centers Centers::from_columns(const std::vector<Vector>& columns) {
  if (columns.empty()) return {};
  Centers centers(columns.front().size(), columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != centers.dim()) throw DimensionError("ragged center columns");
    std::copy(columns[j].begin(), columns[j].end(), centers.column(j).begin());
  }
  return centers;
}

}  // namespace scdh
