#include "scdh/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "scdh/binary_io.hpp"
#include "scdh/error.hpp"
#include "scdh/losses.hpp"
#include "scdh/random.hpp"

namespace scdh::model {
namespace {

using nlohmann::json;

Vector to_double(const std::vector<float>& v) { return Vector(v.begin(), v.end()); }

void add_into(std::span<double> dst, std::span<const double> src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

// ---------------------------------------------------------------- Hyperparams

Hyperparams Hyperparams::cifar10() { return Hyperparams{}; }

Hyperparams Hyperparams::nuswide() {
  Hyperparams hp;
  hp.lambda = 0.001;
  hp.mu = 0.1;
  hp.alpha = 1.0;
  return hp;
}

Hyperparams Hyperparams::imagenet() {
  Hyperparams hp;
  hp.lambda = 0.001;
  hp.mu = 0.1;
  hp.alpha = 4.0;
  return hp;
}

double Hyperparams::learning_rate_at(int epoch) const {
  double rate = lr;
  for (const auto& [at, multiplier] : lr_schedule) {
    if (at <= epoch) rate *= multiplier;
  }
  return rate;
}

void Hyperparams::validate() const {
  if (!(lambda >= 0.0 && mu >= 0.0 && alpha >= 0.0)) {
    throw ValidationError("lambda, mu and alpha must be nonnegative");
  }
  if (!(holder_p > 1.0 && holder_q > 1.0) ||
      std::abs(1.0 / holder_p + 1.0 / holder_q - 1.0) > 1e-9) {
    throw ValidationError("holder_p and holder_q must satisfy 1/p + 1/q = 1");
  }
  if (warmup_epochs < 0) throw ValidationError("warmup_epochs must be nonnegative");
  if (!(warmup_norm_s > 0.0)) throw ValidationError("warmup_norm_s must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (epochs < 0) throw ValidationError("epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (i > 0 && lr_schedule[i].first <= lr_schedule[i - 1].first) {
      throw ValidationError("lr_schedule epochs must be strictly increasing");
    }
    if (!(lr_schedule[i].second > 0.0)) {
      throw ValidationError("lr_schedule multipliers must be positive");
    }
  }
}

std::string to_json(const Hyperparams& hp) {
  json sched = json::array();
  for (const auto& [e, m] : hp.lr_schedule) sched.push_back({e, m});
  json j{{"lambda", hp.lambda},         {"mu", hp.mu},
         {"alpha", hp.alpha},           {"holder_p", hp.holder_p},
         {"holder_q", hp.holder_q},     {"warmup_epochs", hp.warmup_epochs},
         {"warmup_norm_s", hp.warmup_norm_s}, {"lr", hp.lr},
         {"momentum", hp.momentum},     {"epochs", hp.epochs},
         {"batch_size", hp.batch_size}, {"lr_schedule", sched},
         {"seed", hp.seed}};
  return j.dump();
}

Hyperparams hyperparams_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hyperparameter JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ValidationError("hyperparameters must be a JSON object");
  Hyperparams hp;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lambda") hp.lambda = value.get<double>();
      else if (key == "mu") hp.mu = value.get<double>();
      else if (key == "alpha") hp.alpha = value.get<double>();
      else if (key == "holder_p") hp.holder_p = value.get<double>();
      else if (key == "holder_q") hp.holder_q = value.get<double>();
      else if (key == "warmup_epochs") hp.warmup_epochs = value.get<int>();
      else if (key == "warmup_norm_s") hp.warmup_norm_s = value.get<double>();
      else if (key == "lr") hp.lr = value.get<double>();
      else if (key == "momentum") hp.momentum = value.get<double>();
      else if (key == "epochs") hp.epochs = value.get<int>();
      else if (key == "batch_size") hp.batch_size = value.get<int>();
      else if (key == "seed") hp.seed = value.get<std::uint64_t>();
      else if (key == "lr_schedule") {
        hp.lr_schedule.clear();
        for (const auto& entry : value) {
          hp.lr_schedule.emplace_back(entry.at(0).get<int>(), entry.at(1).get<double>());
        }
      } else {
        throw ValidationError("unknown hyperparameter '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad hyperparameter value: ") + e.what());
  }
  hp.validate();
  return hp;
}

// -------------------------------------------------------------------- Network

Vector AffineLayer::apply(std::span<const double> x) const {
  if (x.size() != in) {
    throw DimensionError("layer expects " + std::to_string(in) + " inputs, got " +
                         std::to_string(x.size()));
  }
  Vector y(bias);
  for (std::size_t o = 0; o < out; ++o) {
    const double* w = weight.data() + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
    y[o] += acc;
  }
  return y;
}

std::vector<std::size_t> Network::layer_dims() const {
  std::vector<std::size_t> dims{input_dim()};
  for (const auto& layer : hidden) dims.push_back(layer.out);
  return dims;
}

std::vector<std::span<double>> Network::parameters() {
  std::vector<std::span<double>> blocks;
  for (auto& layer : hidden) {
    blocks.emplace_back(layer.weight);
    blocks.emplace_back(layer.bias);
  }
  blocks.emplace_back(hash.weight);
  blocks.emplace_back(hash.bias);
  blocks.emplace_back(centers.data());
  blocks.emplace_back(classifier.weight);
  blocks.emplace_back(classifier.bias);
  return blocks;
}

std::vector<std::span<const double>> Network::parameters() const {
  auto blocks = const_cast<Network*>(this)->parameters();
  return {blocks.begin(), blocks.end()};
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : parameters()) n += b.size();
  return n;
}

void Network::check_invariants() const {
  std::size_t width = input_dim();
  for (const auto& layer : hidden) {
    if (layer.in != width) throw DimensionError("hidden layer widths do not chain");
    width = layer.out;
  }
  if (hash.in != width || classifier.in != width) {
    throw DimensionError("hash and classifier layers must read the last hidden layer");
  }
  if (centers.dim() != hash.out) throw DimensionError("center rows must equal the code length");
  if (centers.count() != classifier.out) {
    throw DimensionError("center count must equal the classifier outputs");
  }
}

bool operator==(const Network& a, const Network& b) {
  return a.hidden == b.hidden && a.hash == b.hash && a.classifier == b.classifier &&
         a.centers.dim() == b.centers.dim() && a.centers.count() == b.centers.count() &&
         a.centers.data() == b.centers.data();
}

Network zeros_like(const Network& net) {
  Network z = net;
  for (auto block : z.parameters()) std::fill(block.begin(), block.end(), 0.0);
  return z;
}

EmbeddingModel init_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.dims.empty() || arch.code_length == 0 || arch.class_count < 1) {
    throw ValidationError("architecture needs an input size, a code length and classes");
  }
  if (std::find(arch.dims.begin(), arch.dims.end(), 0u) != arch.dims.end()) {
    throw ValidationError("layer sizes must be positive");
  }
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::span<double> block, double stddev) {
    for (double& w : block) w = stddev * normal(rng);
  };
  const auto classes = static_cast<std::size_t>(arch.class_count);
  Network net;
  for (std::size_t l = 1; l < arch.dims.size(); ++l) {
    net.hidden.emplace_back(arch.dims[l - 1], arch.dims[l]);
    fill(net.hidden.back().weight, 0.01);
  }
  const std::size_t last = arch.dims.back();
  net.hash = AffineLayer(last, arch.code_length);
  fill(net.hash.weight, 0.01);
  net.centers = Centers(arch.code_length, classes);
  fill(net.centers.data(), 0.5);
  net.classifier = AffineLayer(last, classes);
  fill(net.classifier.weight, 0.01);
  return {net, zeros_like(net)};
}

ForwardCache forward(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " features, network expects " +
                         std::to_string(net.input_dim()));
  }
  ForwardCache cache;
  cache.activations.emplace_back(x.begin(), x.end());
  for (const auto& layer : net.hidden) {
    Vector z = layer.apply(cache.activations.back());
    for (double& v : z) v = std::max(v, 0.0);
    cache.activations.push_back(std::move(z));
  }
  cache.embedding = net.hash.apply(cache.activations.back());
  cache.logits = net.classifier.apply(cache.activations.back());
  return cache;
}

namespace {

// grad.W += delta (x) input, grad.b += delta; returns W^T delta.
Vector affine_backward(const AffineLayer& layer, std::span<const double> input,
                       std::span<const double> delta, AffineLayer& grad) {
  Vector upstream(layer.in, 0.0);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double d = delta[o];
    if (d == 0.0) continue;
    grad.bias[o] += d;
    const double* w = layer.weight.data() + o * layer.in;
    double* gw = grad.weight.data() + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) {
      gw[i] += d * input[i];
      upstream[i] += d * w[i];
    }
  }
  return upstream;
}

}  // namespace

void backpropagate(const Network& net, const ForwardCache& cache,
                   std::span<const double> d_embedding, std::span<const double> d_logits,
                   Network& grad) {
  const auto& top = cache.activations.back();
  Vector delta = affine_backward(net.hash, top, d_embedding, grad.hash);
  add_into(delta, affine_backward(net.classifier, top, d_logits, grad.classifier));
  for (std::size_t l = net.hidden.size(); l-- > 0;) {
    const auto& out = cache.activations[l + 1];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      if (out[i] <= 0.0) delta[i] = 0.0;
    }
    delta = affine_backward(net.hidden[l], cache.activations[l], delta, grad.hidden[l]);
  }
}

// ------------------------------------------------------------------ Objective

ObjectiveTerms& ObjectiveTerms::operator+=(const ObjectiveTerms& o) {
  scul += o.scul;
  classification += o.classification;
  quantization += o.quantization;
  center_distance += o.center_distance;
  total += o.total;
  samples += o.samples;
  return *this;
}

namespace {

ObjectiveTerms supervised_terms(const Network& net, const ForwardCache& cache,
                                const LabelSet& labels, const Hyperparams& hp, Network* grad) {
  labels.validate(static_cast<int>(net.class_count()));
  ObjectiveTerms t;
  t.samples = 1;
  Vector d_emb(net.code_length(), 0.0);
  if (labels.size() < net.class_count()) {
    auto ev = losses::scul_evaluate(cache.embedding, labels, net.centers, hp.lambda);
    t.scul = ev.softmax_term;
    t.center_distance = ev.center_distance;
    if (grad) {
      add_into(d_emb, ev.gradients.embedding);
      add_into(grad->centers.data(), ev.gradients.centers.data());
    }
  }
  auto cls = losses::classification_loss(cache.logits, labels);
  t.classification = cls.value;
  t.quantization = losses::quantization_loss(cache.embedding, hp.holder_p, hp.holder_q);
  t.total = t.scul + hp.lambda * t.center_distance + hp.mu * t.classification +
            hp.alpha * t.quantization;
  if (grad) {
    add_into(d_emb, losses::quantization_gradient(cache.embedding, hp.holder_p, hp.holder_q),
             hp.alpha);
    for (double& g : cls.gradient) g *= hp.mu;
    backpropagate(net, cache, d_emb, cls.gradient, *grad);
  }
  return t;
}

}  // namespace

ObjectiveTerms supervised_gradient(const Network& net, std::span<const double> x,
                                   const LabelSet& labels, const Hyperparams& hp, Network& grad) {
  return supervised_terms(net, forward(net, x), labels, hp, &grad);
}

ObjectiveTerms supervised_objective(const Network& net, std::span<const data::Sample> batch,
                                    const Hyperparams& hp) {
  ObjectiveTerms sum;
  for (const auto& s : batch) {
    sum += supervised_terms(net, forward(net, to_double(s.features)), s.labels, hp, nullptr);
  }
  return sum;
}

void check_finite(const ObjectiveTerms& terms, const char* where) {
  if (!std::isfinite(terms.total)) {
    throw NumericError(std::string("non-finite loss in ") + where +
                       "; the learning rate is probably too high");
  }
}

void apply_sgd(EmbeddingModel& model, const Network& grad, double lr, double momentum) {
  auto params = model.net.parameters();
  auto velocity = model.velocity.parameters();
  const auto grads = grad.parameters();
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      velocity[b][i] = momentum * velocity[b][i] - lr * grads[b][i];
      params[b][i] += velocity[b][i];
    }
  }
  for (const auto block : model.net.parameters()) {
    if (!all_finite(block)) {
      throw NumericError("parameters diverged to non-finite values; lower the learning rate");
    }
  }
}

ObjectiveTerms backward_step(EmbeddingModel& model, std::span<const data::Sample* const> batch,
                             const Hyperparams& hp, double lr) {
  if (batch.empty()) throw PreconditionError("backward_step needs a nonempty batch");
  Network grad = zeros_like(model.net);
  ObjectiveTerms sum;
  for (const auto* s : batch) {
    sum += supervised_gradient(model.net, to_double(s->features), s->labels, hp, grad);
  }
  check_finite(sum, "backward_step");
  apply_sgd(model, grad, lr, hp.momentum);
  return sum;
}

ObjectiveTerms backward_step(EmbeddingModel& model, std::span<const data::Sample> batch,
                             const Hyperparams& hp, double lr) {
  std::vector<const data::Sample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return backward_step(model, ptrs, hp, lr);
}

void warmup_project(Centers& centers, double s, std::uint64_t seed) {
  if (!(s > 0.0)) throw ValidationError("warm-up norm must be positive");
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t j = 0; j < centers.count(); ++j) {
    auto col = centers.column(j);
    double norm = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
    while (norm == 0.0) {
      for (double& v : col) v = normal(rng);
      norm = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
    }
    const double scale = s / norm;
    for (double& v : col) v *= scale;
  }
}

// ------------------------------------------------------------------- Training

std::string to_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"scul_loss", e.scul_loss},
                      {"classification_loss", e.classification_loss},
                      {"quantization_loss", e.quantization_loss},
                      {"center_distance", e.center_distance},
                      {"total_loss", e.total_loss},
                      {"learning_rate", e.learning_rate}});
  }
  return json{{"epochs", epochs},
              {"final_quantization_loss", report.final_quantization_loss},
              {"steps", report.steps}}
      .dump();
}

double mean_quantization_loss(const Network& net, std::span<const data::Sample> samples,
                              const Hyperparams& hp) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += losses::quantization_loss(forward(net, to_double(s.features)).embedding, hp.holder_p,
                                     hp.holder_q);
  }
  return sum / static_cast<double>(samples.size());
}

TrainReport train_scdh(EmbeddingModel& model, const data::Dataset& train, const Hyperparams& hp) {
  hp.validate();
  model.net.check_invariants();
  if (train.dim != model.net.input_dim()) {
    throw DimensionError("training features do not match the network input size");
  }
  if (static_cast<std::size_t>(train.class_count) != model.net.class_count()) {
    throw DimensionError("training classes do not match the network outputs");
  }
  std::vector<const data::Sample*> labeled;
  for (const auto& s : train.samples) {
    if (s.labeled()) labeled.push_back(&s);
  }
  if (labeled.empty()) throw PreconditionError("training needs labeled samples");

  TrainReport report;
  Rng shuffle_rng = make_stream(hp.seed, 1);
  const auto batch = static_cast<std::size_t>(hp.batch_size);
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = hp.learning_rate_at(epoch);
    std::shuffle(labeled.begin(), labeled.end(), shuffle_rng);
    ObjectiveTerms sum;
    for (std::size_t start = 0; start < labeled.size(); start += batch) {
      const std::size_t len = std::min(batch, labeled.size() - start);
      sum += backward_step(model, std::span(labeled).subspan(start, len), hp, lr);
      if (epoch < hp.warmup_epochs) {
        warmup_project(model.net.centers, hp.warmup_norm_s, mix64(hp.seed ^ report.steps));
      }
      ++report.steps;
    }
    const double n = static_cast<double>(sum.samples);
    report.epochs.push_back({epoch, sum.scul / n, sum.classification / n, sum.quantization / n,
                             sum.center_distance / n, sum.total / n, lr});
  }
  report.final_quantization_loss = mean_quantization_loss(model.net, data::labeled_subset(train).samples, hp);
  return report;
}

std::pair<EmbeddingModel, TrainReport> train_scdh(const data::Dataset& train,
                                                  const Architecture& arch,
                                                  const Hyperparams& hp) {
  auto model = init_model(arch, hp.seed);
  auto report = train_scdh(model, train, hp);
  return {std::move(model), std::move(report)};
}

std::vector<Vector> embed(const Network& net, const data::Dataset& dataset) {
  std::vector<Vector> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset.samples) out.push_back(forward(net, to_double(s.features)).embedding);
  return out;
}

// ----------------------------------------------------------------- Checkpoint

namespace {
constexpr std::string_view kCheckpointMagic = "SCDM";
constexpr std::uint16_t kCheckpointVersion = 1;
}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.networks.empty()) throw ValidationError("checkpoint needs at least one network");
  const auto& first = checkpoint.networks.front();
  for (const auto& net : checkpoint.networks) {
    net.check_invariants();
    if (net.layer_dims() != first.layer_dims() || net.code_length() != first.code_length() ||
        net.class_count() != first.class_count()) {
      throw DimensionError("checkpoint networks must share one shape");
    }
  }
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u16(static_cast<std::uint16_t>(checkpoint.networks.size()));
  w.u32(static_cast<std::uint32_t>(first.code_length()));
  w.u32(static_cast<std::uint32_t>(first.class_count()));
  const auto dims = first.layer_dims();
  w.u32(static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) w.u64(d);
  for (const auto& net : checkpoint.networks) {
    for (const auto block : net.parameters()) {
      for (double v : block) w.f64(v);
    }
  }
  w.u64(checkpoint.metadata_json.size());
  w.bytes(checkpoint.metadata_json);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic, "checkpoint");
  const auto version_at = r.offset();
  if (r.u16("version") != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version", version_at);
  }
  const auto count = r.u16("network count");
  const auto code_length = r.u32("code length");
  const auto classes = r.u32("class count");
  const auto dims_at = r.offset();
  const auto dim_count = r.u32("layer count");
  if (count == 0 || code_length == 0 || classes == 0 || dim_count == 0 || dim_count > 1024) {
    throw ParseError("implausible checkpoint header", dims_at);
  }
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < dim_count; ++i) {
    const auto at = r.offset();
    const auto d = r.u64("layer size");
    if (d == 0 || d > (1u << 24)) throw ParseError("implausible layer size", at);
    dims.push_back(d);
  }
  Architecture arch{dims, code_length, static_cast<int>(classes)};
  const Network shape = zeros_like(init_model(arch, 0).net);
  const std::size_t per_network = shape.parameter_count() * 8;
  if (r.remaining() / count < per_network) {
    throw ParseError("truncated checkpoint: expected " + std::to_string(per_network * count) +
                         " parameter bytes, " + std::to_string(r.remaining()) + " available",
                     r.offset());
  }
  Checkpoint out;
  for (std::uint16_t k = 0; k < count; ++k) {
    Network net = shape;
    for (auto block : net.parameters()) {
      for (double& v : block) v = r.f64("parameter");
    }
    out.networks.push_back(std::move(net));
  }
  const auto len = r.u64("metadata length");
  out.metadata_json = std::string(r.bytes(static_cast<std::size_t>(len), "metadata"));
  if (r.remaining() != 0) throw ParseError("trailing bytes after checkpoint", r.offset());
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace scdh::model
