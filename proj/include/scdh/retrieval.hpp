#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scdh/types.hpp"

namespace scdh::retrieval {

/// r-bit code packed into little-endian u64 words; bits past r stay zero.
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}
  HashCode(std::size_t bits, std::vector<std::uint64_t> words);

  std::size_t length() const noexcept { return bits_; }
  bool bit(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1ULL; }
  void set(std::size_t i, bool value);
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  friend bool operator==(const HashCode&, const HashCode&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Bit i is set iff f_i >= 0.
HashCode binarize(std::span<const double> f);

int hamming(const HashCode& a, const HashCode& b);

struct CodeIndex {
  std::size_t bits = 0;
  std::vector<HashCode> codes;
  std::vector<std::uint64_t> ids;
  std::vector<LabelSet> labels;  // empty, or one per code

  std::size_t size() const noexcept { return codes.size(); }
  bool has_labels() const noexcept { return !codes.empty() && labels.size() == codes.size(); }
  void add(HashCode code, std::uint64_t id, LabelSet labels = {});
  void validate() const;
};

CodeIndex build_index(const std::vector<Vector>& embeddings, std::vector<std::uint64_t> ids,
                      std::vector<LabelSet> labels = {});

struct Hit {
  std::uint64_t id = 0;
  int distance = 0;
  std::size_t position = 0;  // index into CodeIndex
  friend bool operator==(const Hit&, const Hit&) = default;
};

/// The k nearest codes, ascending distance, ties by ascending id.
std::vector<Hit> search(const HashCode& query, const CodeIndex& index, std::size_t k);

/// AP averaged over queries with at least one relevant database item.
/// Truncated at k when given; a truncated AP divides by min(k, #relevant).
double mean_average_precision(const CodeIndex& queries, const CodeIndex& database,
                              std::optional<std::size_t> k = std::nullopt, unsigned threads = 1);

/// Mean over queries of the relevant share inside the Hamming ball. Queries
/// with an empty ball score 0, or are skipped when `empty_ball_scores_zero` is off.
double precision_at_radius(const CodeIndex& queries, const CodeIndex& database, int radius = 2,
                           bool empty_ball_scores_zero = true, unsigned threads = 1);

std::vector<std::pair<std::size_t, double>> topk_precision_curve(
    const CodeIndex& queries, const CodeIndex& database, const std::vector<std::size_t>& ks,
    unsigned threads = 1);

struct EvalConfig {
  std::optional<std::size_t> map_k;
  int radius = 2;
  bool empty_ball_scores_zero = true;
  std::vector<std::size_t> curve_ks{1, 10, 50, 100, 500, 1000};
  unsigned threads = 1;
};

struct RetrievalMetrics {
  double map = 0.0;
  std::optional<std::size_t> map_k;
  double map_at_k = 0.0;  // equals map when map_k is unset
  double precision_at_radius2 = 0.0;
  std::vector<std::pair<std::size_t, double>> topk_curve;
};

/// Curve points beyond the database size are dropped.
RetrievalMetrics evaluate(const CodeIndex& queries, const CodeIndex& database,
                          const EvalConfig& config = {});

std::string to_json(const RetrievalMetrics& metrics);
std::string curve_csv(const RetrievalMetrics& metrics);

// Code file: "SCDH", u16 version, u32 r, u64 n, then n records of
// (u64 id, ceil(r/64) u64 words). Labels are not stored.
std::string encode_codes(const CodeIndex& index);
CodeIndex decode_codes(std::string_view bytes);
void save_codes(const CodeIndex& index, const std::filesystem::path& path);
CodeIndex load_codes(const std::filesystem::path& path);

}  // namespace scdh::retrieval
