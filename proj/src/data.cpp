#include "scdh/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "scdh/binary_io.hpp"
#include "scdh/error.hpp"
#include "scdh/random.hpp"

namespace scdh::data {
namespace {

constexpr std::string_view kMagic = "SCDS";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagMultilabel = 1;
constexpr std::uint16_t kFlagHasUnlabeled = 2;

std::size_t label_words(int class_count) {
  return (static_cast<std::size_t>(class_count) + 63) / 64;
}

Dataset empty_like(const Dataset& d) {
  Dataset out;
  out.dim = d.dim;
  out.class_count = d.class_count;
  out.multilabel = d.multilabel;
  return out;
}

void sort_by_id(Dataset& d) {
  std::stable_sort(d.samples.begin(), d.samples.end(),
                   [](const Sample& a, const Sample& b) { return a.id < b.id; });
}

std::vector<std::vector<std::size_t>> members_by_class(const Dataset& d) {
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(d.class_count));
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    if (s.labeled()) members[static_cast<std::size_t>(s.labels.front())].push_back(i);
  }
  return members;
}

}  // namespace

bool Dataset::has_unlabeled() const {
  return std::any_of(samples.begin(), samples.end(), [](const Sample& s) { return !s.labeled(); });
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
  for (const auto& s : samples) {
    for (int l : s.labels) ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

std::vector<double> Dataset::feature_matrix() const {
  std::vector<double> out;
  out.reserve(samples.size() * dim);
  for (const auto& s : samples) out.insert(out.end(), s.features.begin(), s.features.end());
  return out;
}

void Dataset::validate() const {
  if (class_count < 1) throw ValidationError("dataset needs a positive class count");
  for (const auto& s : samples) {
    if (s.features.size() != dim) {
      throw DimensionError("sample " + std::to_string(s.id) + " has " +
                           std::to_string(s.features.size()) + " features, expected " +
                           std::to_string(dim));
    }
    if (s.labeled()) s.labels.validate(class_count);
    if (!multilabel && s.labels.size() > 1) {
      throw LabelError("single-label dataset has a sample with several labels");
    }
  }
}

void SyntheticConfig::validate() const {
  if (class_count < 1 || feature_dim == 0 || samples_per_class == 0) {
    throw ValidationError("synthetic config needs positive sizes");
  }
  if (cluster_std < 0.0 || center_spread < 0.0) {
    throw ValidationError("synthetic config needs nonnegative spreads");
  }
  if (multilabel_p && !(*multilabel_p > 0.0 && *multilabel_p < 1.0)) {
    throw ValidationError("multilabel_p must lie in (0, 1)");
  }
}

Dataset gen_gaussian_clusters(const SyntheticConfig& config) {
  config.validate();
  if (config.multilabel_p) throw ValidationError("gen_gaussian_clusters is single-label only");
  Rng rng = make_stream(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto c = static_cast<std::size_t>(config.class_count);
  std::vector<double> means(c * config.feature_dim);
  for (double& m : means) m = config.center_spread * normal(rng);

  Dataset out;
  out.dim = config.feature_dim;
  out.class_count = config.class_count;
  std::uint64_t id = 0;
  for (std::size_t l = 0; l < c; ++l) {
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      Sample sample;
      sample.id = id++;
      sample.features.resize(config.feature_dim);
      for (std::size_t k = 0; k < config.feature_dim; ++k) {
        const double mu = means[l * config.feature_dim + k];
        sample.features[k] = static_cast<float>(
            config.cluster_std == 0.0 ? mu : mu + config.cluster_std * normal(rng));
      }
      sample.labels = LabelSet::single(static_cast<int>(l));
      out.samples.push_back(std::move(sample));
    }
  }
  return out;
}

Dataset gen_multilabel(const SyntheticConfig& config) {
  config.validate();
  if (!config.multilabel_p) throw ValidationError("gen_multilabel needs multilabel_p");
  const double p = std::min(*config.multilabel_p, 0.99);
  Rng rng = make_stream(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution include(p);
  const auto c = static_cast<std::size_t>(config.class_count);
  std::vector<double> prototypes(c * config.feature_dim);
  for (double& m : prototypes) m = config.center_spread * normal(rng);

  Dataset out;
  out.dim = config.feature_dim;
  out.class_count = config.class_count;
  out.multilabel = true;
  const std::size_t n = c * config.samples_per_class;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> members;
    while (members.empty()) {
      for (std::size_t l = 0; l < c; ++l) {
        if (include(rng)) members.push_back(static_cast<int>(l));
      }
    }
    Sample sample;
    sample.id = i;
    sample.features.resize(config.feature_dim);
    for (std::size_t k = 0; k < config.feature_dim; ++k) {
      double mu = 0.0;
      for (int l : members) mu += prototypes[static_cast<std::size_t>(l) * config.feature_dim + k];
      mu /= static_cast<double>(members.size());
      sample.features[k] = static_cast<float>(mu + config.cluster_std * normal(rng));
    }
    sample.labels = LabelSet(std::move(members));
    out.samples.push_back(std::move(sample));
  }
  return out;
}

Dataset balance_upsample(const Dataset& dataset, std::uint64_t seed) {
  dataset.validate();
  if (dataset.multilabel) throw PreconditionError("balance_upsample needs single-label data");
  if (dataset.has_unlabeled()) throw PreconditionError("balance_upsample needs fully labeled data");
  const auto members = members_by_class(dataset);
  std::size_t target = 0;
  for (std::size_t l = 0; l < members.size(); ++l) {
    if (members[l].empty()) {
      throw PreconditionError("class " + std::to_string(l) + " has no members to upsample");
    }
    target = std::max(target, members[l].size());
  }
  Rng rng = make_stream(seed, 0);
  Dataset out = dataset;
  for (const auto& group : members) {
    std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
    for (std::size_t k = group.size(); k < target; ++k) {
      out.samples.push_back(dataset.samples[group[pick(rng)]]);
    }
  }
  return out;
}

Splits split_dataset(const Dataset& dataset, std::size_t train, std::size_t query,
                     std::size_t database, std::uint64_t seed) {
  dataset.validate();
  Rng rng = make_stream(seed, 0);
  Splits out{empty_like(dataset), empty_like(dataset), empty_like(dataset)};
  auto distribute = [&](const std::vector<std::size_t>& order, std::size_t nt, std::size_t nq,
                        std::size_t nd) {
    if (order.size() < nt + nq + nd) {
      throw PreconditionError("not enough samples for the requested split sizes");
    }
    for (std::size_t k = 0; k < nt + nq + nd; ++k) {
      auto& target = k < nt ? out.train : (k < nt + nq ? out.query : out.database);
      target.samples.push_back(dataset.samples[order[k]]);
    }
  };
  if (!dataset.multilabel && !dataset.has_unlabeled()) {
    const auto c = static_cast<std::size_t>(dataset.class_count);
    if (train % c || query % c || database % c) {
      throw PreconditionError("single-label split sizes must be multiples of the class count");
    }
    for (auto group : members_by_class(dataset)) {
      std::shuffle(group.begin(), group.end(), rng);
      distribute(group, train / c, query / c, database / c);
    }
  } else {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    distribute(order, train, query, database);
  }
  sort_by_id(out.train);
  sort_by_id(out.query);
  sort_by_id(out.database);
  return out;
}

Dataset strip_labels(const Dataset& dataset, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ValidationError("keep_fraction must lie in (0, 1]");
  }
  Rng rng = make_stream(seed, 0);
  Dataset out = dataset;
  auto strip_group = [&](std::vector<std::size_t> group) {
    std::shuffle(group.begin(), group.end(), rng);
    const auto keep = static_cast<std::size_t>(
        std::max(1.0, std::round(keep_fraction * static_cast<double>(group.size()))));
    for (std::size_t k = keep; k < group.size(); ++k) out.samples[group[k]].labels = LabelSet();
  };
  if (!dataset.multilabel) {
    for (auto& group : members_by_class(dataset)) {
      if (!group.empty()) strip_group(std::move(group));
    }
  } else {
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.samples[i].labeled()) all.push_back(i);
    }
    strip_group(std::move(all));
  }
  return out;
}

Dataset labeled_subset(const Dataset& dataset) {
  Dataset out = empty_like(dataset);
  for (const auto& s : dataset.samples) {
    if (s.labeled()) out.samples.push_back(s);
  }
  return out;
}

std::string encode_dataset(const Dataset& dataset) {
  dataset.validate();
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u16(kVersion);
  std::uint16_t flags = 0;
  if (dataset.multilabel) flags |= kFlagMultilabel;
  if (dataset.has_unlabeled()) flags |= kFlagHasUnlabeled;
  w.u16(flags);
  w.u64(dataset.size());
  w.u32(static_cast<std::uint32_t>(dataset.dim));
  w.u32(static_cast<std::uint32_t>(dataset.class_count));
  for (const auto& s : dataset.samples) w.u64(s.id);
  for (const auto& s : dataset.samples) {
    for (float x : s.features) w.f32(x);
  }
  const std::size_t words = label_words(dataset.class_count);
  for (const auto& s : dataset.samples) {
    if (dataset.multilabel) {
      std::vector<std::uint64_t> mask(words, 0);
      for (int l : s.labels) mask[static_cast<std::size_t>(l) / 64] |= 1ULL << (l % 64);
      for (auto m : mask) w.u64(m);
    } else {
      w.i32(s.labeled() ? s.labels.front() : -1);
    }
  }
  return w.take();
}

Dataset decode_dataset(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kMagic, "dataset file");
  const auto version_at = r.offset();
  const auto version = r.u16("version");
  if (version != kVersion) {
    throw ParseError("unsupported dataset version " + std::to_string(version), version_at);
  }
  const auto flags_at = r.offset();
  const auto flags = r.u16("flags");
  if (flags & ~(kFlagMultilabel | kFlagHasUnlabeled)) {
    throw ParseError("unknown dataset flags", flags_at);
  }
  Dataset out;
  const auto n = r.u64("sample count");
  out.dim = r.u32("feature dimension");
  const auto class_at = r.offset();
  out.class_count = static_cast<int>(r.u32("class count"));
  if (out.class_count < 1) throw ParseError("class count must be positive", class_at);
  out.multilabel = (flags & kFlagMultilabel) != 0;

  const std::size_t words = label_words(out.class_count);
  const std::size_t label_bytes = out.multilabel ? 8 * words : 4;
  const std::size_t record_bytes = 8 + 4 * out.dim + label_bytes;
  if (n > 0 && r.remaining() / record_bytes < n) {
    throw ParseError("truncated dataset body: expected " + std::to_string(n * record_bytes) +
                         " bytes for " + std::to_string(n) + " samples, " +
                         std::to_string(r.remaining()) + " available",
                     r.offset());
  }
  out.samples.resize(n);
  for (auto& s : out.samples) s.id = r.u64("sample id");
  for (auto& s : out.samples) {
    s.features.resize(out.dim);
    for (auto& x : s.features) x = r.f32("feature");
  }
  for (auto& s : out.samples) {
    const auto at = r.offset();
    if (out.multilabel) {
      std::vector<int> members;
      for (std::size_t wi = 0; wi < words; ++wi) {
        const auto mask = r.u64("label mask");
        for (int b = 0; b < 64; ++b) {
          if (mask >> b & 1ULL) members.push_back(static_cast<int>(wi * 64) + b);
        }
      }
      if (!members.empty() && members.back() >= out.class_count) {
        throw ParseError("label bit beyond class count", at);
      }
      s.labels = LabelSet(std::move(members));
    } else {
      const auto label = r.i32("label");
      if (label < -1 || label >= out.class_count) throw ParseError("label out of range", at);
      if (label >= 0) s.labels = LabelSet::single(label);
    }
  }
  if (r.remaining() != 0) {
    throw ParseError("trailing bytes after dataset body", r.offset());
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

Dataset parse_csv(std::string_view text, int class_count, bool multilabel) {
  Dataset out;
  out.multilabel = multilabel;
  std::size_t line_start = 0;
  int max_label = -1;
  bool dim_known = false;
  while (line_start < text.size()) {
    auto line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string_view line = text.substr(line_start, line_end - line_start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t offset = line_start;
    line_start = line_end + 1;
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    for (;;) {
      const auto comma = line.find(',', pos);
      fields.push_back(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (fields.size() < 2) throw ParseError("CSV row needs features and a label field", offset);
    Sample sample;
    sample.id = out.samples.size();
    for (std::size_t k = 0; k + 1 < fields.size(); ++k) {
      const auto f = fields[k];
      float v = 0.0f;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw ParseError("bad feature value '" + std::string(f) + "'", offset);
      }
      sample.features.push_back(v);
    }
    if (!dim_known) {
      out.dim = sample.features.size();
      dim_known = true;
    } else if (sample.features.size() != out.dim) {
      throw ParseError("CSV row has " + std::to_string(sample.features.size()) +
                           " features, expected " + std::to_string(out.dim),
                       offset);
    }
    std::string_view label_field = fields.back();
    std::vector<int> members;
    while (!label_field.empty()) {
      const auto bar = label_field.find('|');
      const auto tok = label_field.substr(0, bar);
      int l = 0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), l);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || l < 0) {
        throw ParseError("bad label '" + std::string(tok) + "'", offset);
      }
      members.push_back(l);
      max_label = std::max(max_label, l);
      if (bar == std::string_view::npos) break;
      label_field.remove_prefix(bar + 1);
    }
    if (members.size() > 1) out.multilabel = true;
    try {
      sample.labels = LabelSet(std::move(members));
    } catch (const LabelError& e) {
      throw ParseError(e.what(), offset);
    }
    out.samples.push_back(std::move(sample));
  }
  out.class_count = class_count > 0 ? class_count : max_label + 1;
  if (out.class_count < 1) throw ParseError("CSV has no labels; pass the class count", 0);
  out.validate();
  return out;
}

Dataset import_csv(const std::filesystem::path& path, int class_count, bool multilabel) {
  return parse_csv(io::read_file(path), class_count, multilabel);
}

}  // namespace scdh::data
