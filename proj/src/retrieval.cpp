#include "scdh/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include <json.hpp>

#include "scdh/binary_io.hpp"
#include "scdh/error.hpp"
#include "scdh/parallel.hpp"

namespace scdh::retrieval {
namespace {

constexpr std::string_view kMagic = "SCDH";
constexpr std::uint16_t kVersion = 1;

std::uint64_t tail_mask(std::size_t bits) {
  const auto rem = bits % 64;
  return rem == 0 ? ~0ULL : (1ULL << rem) - 1;
}

void require_labels(const CodeIndex& queries, const CodeIndex& database) {
  if (!queries.has_labels() || !database.has_labels()) {
    throw PreconditionError("retrieval metrics need label sets on queries and database");
  }
  if (queries.bits != database.bits) throw DimensionError("query and database code lengths differ");
}

// Database positions ranked by (distance, id) via counting sort; `by_id` is
// the database order sorted by id.
std::vector<std::uint32_t> rank_all(const HashCode& query, const CodeIndex& db,
                                    const std::vector<std::uint32_t>& by_id,
                                    std::vector<int>& distances) {
  const std::size_t n = db.size();
  distances.resize(n);
  std::vector<std::size_t> bucket(db.bits + 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    distances[i] = hamming(query, db.codes[i]);
    ++bucket[static_cast<std::size_t>(distances[i]) + 1];
  }
  std::partial_sum(bucket.begin(), bucket.end(), bucket.begin());
  std::vector<std::uint32_t> order(n);
  for (auto pos : by_id) order[bucket[static_cast<std::size_t>(distances[pos])]++] = pos;
  return order;
}

std::vector<std::uint32_t> id_order(const CodeIndex& db) {
  std::vector<std::uint32_t> order(db.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return db.ids[a] < db.ids[b]; });
  return order;
}

double mean_of(const std::vector<double>& values, const std::vector<char>& counted) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (counted[i]) {
      sum += values[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

HashCode::HashCode(std::size_t bits, std::vector<std::uint64_t> words)
    : bits_(bits), words_(std::move(words)) {
  if (words_.size() != (bits + 63) / 64) throw DimensionError("word count does not match code length");
  if (!words_.empty() && (words_.back() & ~tail_mask(bits)) != 0) {
    throw ValidationError("padding bits of a hash code must be zero");
  }
}

void HashCode::set(std::size_t i, bool value) {
  if (i >= bits_) throw DimensionError("bit index beyond code length");
  const auto mask = 1ULL << (i % 64);
  if (value) words_[i / 64] |= mask;
  else words_[i / 64] &= ~mask;
}

HashCode binarize(std::span<const double> f) {
  HashCode code(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] >= 0.0) code.set(i, true);
  }
  return code;
}

int hamming(const HashCode& a, const HashCode& b) {
  if (a.length() != b.length()) throw DimensionError("hamming distance needs equal code lengths");
  int d = 0;
  for (std::size_t w = 0; w < a.words().size(); ++w) d += std::popcount(a.words()[w] ^ b.words()[w]);
  return d;
}

void CodeIndex::add(HashCode code, std::uint64_t id, LabelSet label_set) {
  if (codes.empty() && bits == 0) bits = code.length();
  if (code.length() != bits) throw DimensionError("code length differs from the index");
  const bool labeled = !label_set.empty();
  if (labeled && labels.size() != codes.size()) {
    throw ValidationError("labels must be given for every code or for none");
  }
  if (!labeled && !labels.empty()) throw ValidationError("labels must be given for every code or for none");
  codes.push_back(std::move(code));
  ids.push_back(id);
  if (labeled) labels.push_back(std::move(label_set));
}

void CodeIndex::validate() const {
  if (ids.size() != codes.size()) throw DimensionError("index ids and codes differ in length");
  if (!labels.empty() && labels.size() != codes.size()) {
    throw DimensionError("index labels and codes differ in length");
  }
  for (const auto& c : codes) {
    if (c.length() != bits) throw DimensionError("index holds codes of mixed length");
  }
}

CodeIndex build_index(const std::vector<Vector>& embeddings, std::vector<std::uint64_t> ids,
                      std::vector<LabelSet> labels) {
  if (ids.size() != embeddings.size() || (!labels.empty() && labels.size() != embeddings.size())) {
    throw DimensionError("embeddings, ids and labels must align");
  }
  CodeIndex index;
  index.bits = embeddings.empty() ? 0 : embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != index.bits) throw DimensionError("embeddings of mixed length");
    index.codes.push_back(binarize(e));
  }
  index.ids = std::move(ids);
  index.labels = std::move(labels);
  return index;
}

std::vector<Hit> search(const HashCode& query, const CodeIndex& index, std::size_t k) {
  if (index.size() == 0) throw PreconditionError("search on an empty index");
  if (k > index.size()) throw PreconditionError("k exceeds the index size");
  if (query.length() != index.bits) throw DimensionError("query code length differs from the index");
  std::vector<int> distances;
  const auto order = rank_all(query, index, id_order(index), distances);
  std::vector<Hit> hits;
  hits.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    hits.push_back({index.ids[order[i]], distances[order[i]], order[i]});
  }
  return hits;
}

double mean_average_precision(const CodeIndex& queries, const CodeIndex& database,
                              std::optional<std::size_t> k, unsigned threads) {
  require_labels(queries, database);
  if (k && *k == 0) throw ValidationError("MAP cutoff must be positive");
  const auto by_id = id_order(database);
  std::vector<double> ap(queries.size(), 0.0);
  std::vector<char> counted(queries.size(), 0);
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    std::vector<int> distances;
    const auto order = rank_all(queries.codes[q], database, by_id, distances);
    const auto& y = queries.labels[q];
    std::size_t relevant_total = 0;
    for (const auto& l : database.labels) relevant_total += y.intersects(l) ? 1 : 0;
    if (relevant_total == 0) return;
    counted[q] = 1;
    const std::size_t depth = k ? std::min(*k, order.size()) : order.size();
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
      if (y.intersects(database.labels[order[i]])) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    }
    const std::size_t denom = k ? std::min(*k, relevant_total) : relevant_total;
    ap[q] = sum / static_cast<double>(denom);
  });
  return mean_of(ap, counted);
}

double precision_at_radius(const CodeIndex& queries, const CodeIndex& database, int radius,
                           bool empty_ball_scores_zero, unsigned threads) {
  require_labels(queries, database);
  if (radius < 0) throw ValidationError("radius must be nonnegative");
  std::vector<double> precision(queries.size(), 0.0);
  std::vector<char> counted(queries.size(), 0);
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    std::size_t inside = 0;
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < database.size(); ++i) {
      if (hamming(queries.codes[q], database.codes[i]) <= radius) {
        ++inside;
        if (queries.labels[q].intersects(database.labels[i])) ++relevant;
      }
    }
    if (inside > 0) {
      precision[q] = static_cast<double>(relevant) / static_cast<double>(inside);
      counted[q] = 1;
    } else {
      counted[q] = empty_ball_scores_zero ? 1 : 0;
    }
  });
  return mean_of(precision, counted);
}

std::vector<std::pair<std::size_t, double>> topk_precision_curve(
    const CodeIndex& queries, const CodeIndex& database, const std::vector<std::size_t>& ks,
    unsigned threads) {
  require_labels(queries, database);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0 || ks[i] > database.size() || (i > 0 && ks[i] <= ks[i - 1])) {
      throw ValidationError("curve ks must be ascending and within [1, database size]");
    }
  }
  const auto by_id = id_order(database);
  std::vector<std::vector<double>> per_query(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    std::vector<int> distances;
    const auto order = rank_all(queries.codes[q], database, by_id, distances);
    std::size_t hits = 0;
    std::size_t next = 0;
    auto& out = per_query[q];
    for (std::size_t i = 0; i < order.size() && next < ks.size(); ++i) {
      if (queries.labels[q].intersects(database.labels[order[i]])) ++hits;
      if (i + 1 == ks[next]) {
        out.push_back(static_cast<double>(hits) / static_cast<double>(ks[next]));
        ++next;
      }
    }
  });
  std::vector<std::pair<std::size_t, double>> curve;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    double sum = 0.0;
    for (const auto& row : per_query) sum += row[j];
    curve.emplace_back(ks[j], queries.size() ? sum / static_cast<double>(queries.size()) : 0.0);
  }
  return curve;
}

RetrievalMetrics evaluate(const CodeIndex& queries, const CodeIndex& database,
                          const EvalConfig& config) {
  RetrievalMetrics m;
  m.map = mean_average_precision(queries, database, std::nullopt, config.threads);
  m.map_k = config.map_k;
  m.map_at_k = config.map_k
                   ? mean_average_precision(queries, database, config.map_k, config.threads)
                   : m.map;
  m.precision_at_radius2 = precision_at_radius(queries, database, config.radius,
                                               config.empty_ball_scores_zero, config.threads);
  std::vector<std::size_t> ks;
  for (auto k : config.curve_ks) {
    if (k >= 1 && k <= database.size()) ks.push_back(k);
  }
  m.topk_curve = topk_precision_curve(queries, database, ks, config.threads);
  return m;
}

std::string to_json(const RetrievalMetrics& metrics) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [k, p] : metrics.topk_curve) curve.push_back({{"k", k}, {"precision", p}});
  nlohmann::json j{{"map", metrics.map},
                   {"map_at_k", metrics.map_at_k},
                   {"precision_at_radius2", metrics.precision_at_radius2},
                   {"topk_curve", curve}};
  j["map_k"] = metrics.map_k ? nlohmann::json(*metrics.map_k) : nlohmann::json(nullptr);
  return j.dump(2);
}

std::string curve_csv(const RetrievalMetrics& metrics) {
  std::string out = "k,precision\n";
  for (const auto& [k, p] : metrics.topk_curve) {
    out += std::to_string(k) + "," + nlohmann::json(p).dump() + "\n";
  }
  return out;
}

std::string encode_codes(const CodeIndex& index) {
  index.validate();
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(index.bits));
  w.u64(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    w.u64(index.ids[i]);
    for (auto word : index.codes[i].words()) w.u64(word);
  }
  return w.take();
}

CodeIndex decode_codes(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kMagic, "code file");
  const auto version_at = r.offset();
  if (r.u16("version") != kVersion) throw ParseError("unsupported code file version", version_at);
  CodeIndex index;
  index.bits = r.u32("code length");
  const auto n = r.u64("code count");
  const std::size_t words = (index.bits + 63) / 64;
  const std::size_t record = 8 + 8 * words;
  if (n > 0 && r.remaining() / record < n) {
    throw ParseError("truncated code file: expected " + std::to_string(n * record) +
                         " record bytes, " + std::to_string(r.remaining()) + " available",
                     r.offset());
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    index.ids.push_back(r.u64("id"));
    const auto at = r.offset();
    std::vector<std::uint64_t> packed(words);
    for (auto& word : packed) word = r.u64("code word");
    try {
      index.codes.emplace_back(index.bits, std::move(packed));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), at);
    }
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after code records", r.offset());
  return index;
}

void save_codes(const CodeIndex& index, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_codes(index));
}

CodeIndex load_codes(const std::filesystem::path& path) { return decode_codes(io::read_file(path)); }

}  // namespace scdh::retrieval
