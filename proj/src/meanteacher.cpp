#include "scdh/meanteacher.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "scdh/error.hpp"
#include "scdh/losses.hpp"

namespace scdh::meanteacher {
namespace {

Vector softmax(std::span<const double> u) {
  const double top = *std::max_element(u.begin(), u.end());
  Vector s(u.size());
  double z = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) z += s[i] = std::exp(u[i] - top);
  for (double& v : s) v /= z;
  return s;
}

Vector negated_distances(std::span<const double> f, const Centers& centers) {
  Vector d = losses::center_distances(f, centers);
  for (double& v : d) v = -v;
  return d;
}

Vector to_double(const std::vector<float>& v) { return Vector(v.begin(), v.end()); }

}  // namespace

TeacherState make_teacher(const model::Network& student, double ema_decay) {
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ValidationError("ema_decay must lie in [0, 1)");
  return {student, ema_decay};
}

void ema_update(TeacherState& teacher, const model::Network& student, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ValidationError("EMA decay must lie in [0, 1)");
  auto t = teacher.net.parameters();
  const auto s = student.parameters();
  if (t.size() != s.size()) throw DimensionError("teacher and student shapes differ");
  for (std::size_t b = 0; b < t.size(); ++b) {
    if (t[b].size() != s[b].size()) throw DimensionError("teacher and student shapes differ");
  }
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t i = 0; i < t[b].size(); ++i) t[b][i] = decay * t[b][i] + (1.0 - decay) * s[b][i];
  }
}

double effective_decay(std::uint64_t step, double ceiling) {
  return std::min(1.0 - 1.0 / static_cast<double>(step + 1), ceiling);
}

Vector perturb(std::span<const double> x, double noise_std, Rng& rng) {
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be nonnegative");
  Vector out(x.begin(), x.end());
  if (noise_std == 0.0) return out;
  std::normal_distribution<double> normal(0.0, noise_std);
  for (double& v : out) v += normal(rng);
  return out;
}

double softmax_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) throw DimensionError("consistency inputs differ in length");
  const Vector su = softmax(u);
  const Vector sv = softmax(v);
  double d = 0.0;
  for (std::size_t i = 0; i < su.size(); ++i) d += (su[i] - sv[i]) * (su[i] - sv[i]);
  return d;
}

Vector softmax_distance_gradient(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) throw DimensionError("consistency inputs differ in length");
  const Vector s = softmax(u);
  const Vector t = softmax(v);
  double dot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) dot += (s[i] - t[i]) * s[i];
  Vector g(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) g[k] = 2.0 * s[k] * ((s[k] - t[k]) - dot);
  return g;
}

ConsistencyTerms consistency_losses(std::span<const double> student_logits,
                                    std::span<const double> teacher_logits,
                                    std::span<const double> student_negdists,
                                    std::span<const double> teacher_negdists) {
  ConsistencyTerms out;
  out.logits = softmax_distance(student_logits, teacher_logits);
  out.distances = softmax_distance(student_negdists, teacher_negdists);
  out.d_logits = softmax_distance_gradient(student_logits, teacher_logits);
  out.d_negdists = softmax_distance_gradient(student_negdists, teacher_negdists);
  return out;
}

SemiDataset SemiDataset::from(const data::Dataset& dataset) {
  SemiDataset out;
  out.labeled = data::labeled_subset(dataset);
  out.unlabeled = dataset;
  out.unlabeled.samples.clear();
  for (const auto& s : dataset.samples) {
    if (!s.labeled()) out.unlabeled.samples.push_back(s);
  }
  return out;
}

void SemiDataset::validate() const {
  labeled.validate();
  unlabeled.validate();
  if (labeled.size() == 0) throw PreconditionError("semi-supervised training needs labeled samples");
  if (labeled.has_unlabeled()) throw ValidationError("labeled part contains unlabeled samples");
  for (const auto& s : unlabeled.samples) {
    if (s.labeled()) throw ValidationError("unlabeled part contains labeled samples");
  }
  if (unlabeled.size() > 0 && unlabeled.dim != labeled.dim) {
    throw DimensionError("labeled and unlabeled features differ in length");
  }
}

void MeanTeacherConfig::validate() const {
  if (!(w >= 0.0)) throw ValidationError("consistency weight w must be nonnegative");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ValidationError("ema_decay must lie in [0, 1)");
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be nonnegative");
  if (!(rampup_fraction >= 0.0 && rampup_fraction <= 1.0)) {
    throw ValidationError("rampup_fraction must lie in [0, 1]");
  }
  if (unlabeled_batch_size < 0) throw ValidationError("unlabeled_batch_size must be nonnegative");
}

std::string to_json(const MeanTeacherConfig& c) {
  return nlohmann::json{{"w", c.w},
                        {"ema_decay", c.ema_decay},
                        {"noise_std", c.noise_std},
                        {"rampup_fraction", c.rampup_fraction},
                        {"unlabeled_batch_size", c.unlabeled_batch_size}}
      .dump();
}

MeanTeacherConfig mean_teacher_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("mean teacher JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ValidationError("mean teacher config must be a JSON object");
  MeanTeacherConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "w") c.w = value.get<double>();
      else if (key == "ema_decay") c.ema_decay = value.get<double>();
      else if (key == "noise_std") c.noise_std = value.get<double>();
      else if (key == "rampup_fraction") c.rampup_fraction = value.get<double>();
      else if (key == "unlabeled_batch_size") c.unlabeled_batch_size = value.get<int>();
      else throw ValidationError("unknown mean teacher key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad mean teacher value: ") + e.what());
  }
  c.validate();
  return c;
}

double consistency_weight(const MeanTeacherConfig& config, std::uint64_t step,
                          std::uint64_t total_steps) {
  const double ramp = config.rampup_fraction * static_cast<double>(total_steps);
  if (ramp <= 0.0) return config.w;
  return config.w * std::min(1.0, static_cast<double>(step) / ramp);
}

MtResult train_mt_scdh(const SemiDataset& data, const model::Architecture& arch,
                       const model::Hyperparams& hp, const MeanTeacherConfig& config) {
  hp.validate();
  config.validate();
  data.validate();
  auto student = model::init_model(arch, hp.seed);
  if (data.labeled.dim != student.net.input_dim()) {
    throw DimensionError("training features do not match the network input size");
  }
  if (static_cast<std::size_t>(data.labeled.class_count) != student.net.class_count()) {
    throw DimensionError("training classes do not match the network outputs");
  }
  MtResult result{student, make_teacher(student.net, config.ema_decay), {}, {}};
  auto& net = result.student.net;

  std::vector<const data::Sample*> labeled;
  for (const auto& s : data.labeled.samples) labeled.push_back(&s);
  const auto& unlabeled = data.unlabeled.samples;
  const auto batch = static_cast<std::size_t>(hp.batch_size);
  const std::size_t steps_per_epoch = (labeled.size() + batch - 1) / batch;
  const std::uint64_t total_steps = steps_per_epoch * static_cast<std::uint64_t>(hp.epochs);
  const std::size_t unlabeled_draws = unlabeled.empty() ? 0 : config.unlabeled_batch_size;

  Rng shuffle_rng = make_stream(hp.seed, 1);
  Rng unlabeled_rng = make_stream(hp.seed, 2);
  Rng noise_rng = make_stream(hp.seed, 3);
  std::uniform_int_distribution<std::size_t> pick(0, unlabeled.empty() ? 0 : unlabeled.size() - 1);

  std::uint64_t step = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = hp.learning_rate_at(epoch);
    std::shuffle(labeled.begin(), labeled.end(), shuffle_rng);
    model::ObjectiveTerms sup;
    ConsistencyRecord cons;
    std::size_t cons_samples = 0;
    std::size_t unl_samples = 0;
    for (std::size_t start = 0; start < labeled.size(); start += batch) {
      const std::size_t len = std::min(batch, labeled.size() - start);
      std::vector<const data::Sample*> pool(labeled.begin() + start, labeled.begin() + start + len);
      for (std::size_t u = 0; u < unlabeled_draws; ++u) pool.push_back(&unlabeled[pick(unlabeled_rng)]);

      model::Network grad = model::zeros_like(net);
      model::ObjectiveTerms step_terms;
      for (std::size_t i = 0; i < len; ++i) {
        step_terms += model::supervised_gradient(net, to_double(pool[i]->features),
                                                 pool[i]->labels, hp, grad);
      }
      double unsupervised_total = 0.0;
      if (hp.alpha > 0.0) {
        for (std::size_t i = len; i < pool.size(); ++i) {
          const auto cache = model::forward(net, to_double(pool[i]->features));
          const double lq = losses::quantization_loss(cache.embedding, hp.holder_p, hp.holder_q);
          auto d_emb = losses::quantization_gradient(cache.embedding, hp.holder_p, hp.holder_q);
          for (double& g : d_emb) g *= hp.alpha;
          model::backpropagate(net, cache, d_emb, Vector(net.class_count(), 0.0), grad);
          cons.unlabeled_quantization += lq;
          unsupervised_total += hp.alpha * lq;
          ++unl_samples;
        }
      }
      const double weight = consistency_weight(config, step, total_steps);
      cons.weight = weight;
      if (weight > 0.0) {
        for (const auto* s : pool) {
          const Vector x = to_double(s->features);
          const auto cache = model::forward(net, perturb(x, config.noise_std, noise_rng));
          const auto teacher_cache =
              model::forward(result.teacher.net, perturb(x, config.noise_std, noise_rng));
          const Vector nd = negated_distances(cache.embedding, net.centers);
          const Vector nd_t = negated_distances(teacher_cache.embedding, result.teacher.net.centers);
          const auto c = consistency_losses(cache.logits, teacher_cache.logits, nd, nd_t);
          cons.logits += c.logits;
          cons.distances += c.distances;
          ++cons_samples;
          unsupervised_total += weight * (hp.mu * c.logits + c.distances);

          Vector d_logits = c.d_logits;
          for (double& g : d_logits) g *= weight * hp.mu;
          Vector d_emb(net.code_length(), 0.0);
          for (std::size_t k = 0; k < net.class_count(); ++k) {
            const double gk = weight * c.d_negdists[k];
            const double dist = -nd[k];
            if (gk == 0.0 || dist == 0.0) continue;
            auto col = net.centers.column(k);
            auto gcol = grad.centers.column(k);
            for (std::size_t i = 0; i < d_emb.size(); ++i) {
              const double unit = (cache.embedding[i] - col[i]) / dist;
              d_emb[i] -= gk * unit;
              gcol[i] += gk * unit;
            }
          }
          model::backpropagate(net, cache, d_emb, d_logits, grad);
        }
      }
      if (!std::isfinite(unsupervised_total)) {
        throw NumericError("non-finite consistency loss; the learning rate is probably too high");
      }
      model::check_finite(step_terms, "train_mt_scdh");
      model::apply_sgd(result.student, grad, lr, hp.momentum);
      if (epoch < hp.warmup_epochs) {
        model::warmup_project(net.centers, hp.warmup_norm_s, mix64(hp.seed ^ step));
      }
      ema_update(result.teacher, net, effective_decay(step, config.ema_decay));
      sup += step_terms;
      ++step;
    }
    const double n = static_cast<double>(sup.samples);
    result.report.epochs.push_back({epoch, sup.scul / n, sup.classification / n,
                                    sup.quantization / n, sup.center_distance / n, sup.total / n,
                                    lr});
    if (cons_samples) {
      cons.logits /= static_cast<double>(cons_samples);
      cons.distances /= static_cast<double>(cons_samples);
    }
    if (unl_samples) cons.unlabeled_quantization /= static_cast<double>(unl_samples);
    result.consistency.push_back(cons);
  }
  result.report.steps = step;
  result.report.final_quantization_loss =
      model::mean_quantization_loss(result.teacher.net, data.labeled.samples, hp);
  return result;
}

std::string to_json(const MtResult& result) {
  auto j = nlohmann::json::parse(model::to_json(result.report));
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : result.consistency) {
    cons.push_back({{"logit_consistency", c.logits},
                    {"distance_consistency", c.distances},
                    {"unlabeled_quantization", c.unlabeled_quantization},
                    {"consistency_weight", c.weight}});
  }
  j["consistency"] = cons;
  j["teacher_ema_decay"] = result.teacher.ema_decay;
  return j.dump();
}

}  // namespace scdh::meanteacher
