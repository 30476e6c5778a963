#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "config.hpp"
#include "scdh/binary_io.hpp"
#include "scdh/bounds.hpp"
#include "scdh/data.hpp"
#include "scdh/error.hpp"
#include "scdh/meanteacher.hpp"
#include "scdh/model.hpp"
#include "scdh/retrieval.hpp"

namespace fs = std::filesystem;
using namespace scdh;
using cli::Field;
using cli::json;
using cli::Kind;

namespace {

std::string num(double v) { return fmt::format("{}", v); }

// Collects output files, writes each atomically and records its hash.
class RunOutputs {
 public:
  RunOutputs(fs::path dir, std::string command, json config)
      : dir_(std::move(dir)), command_(std::move(command)), config_(std::move(config)) {
    fs::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& contents) {
    io::write_file_atomic(dir_ / name, contents);
    outputs_[name] = io::fnv1a_hex(contents);
    spdlog::info("wrote {}", (dir_ / name).string());
  }

  std::string read_input(const std::string& key, const std::string& path) {
    if (path.empty()) throw ValidationError("config field '" + key + "' needs a path");
    if (!fs::exists(path)) throw ValidationError("input file not found: " + path);
    std::string bytes = io::read_file(path);
    inputs_[key] = io::fnv1a_hex(bytes);
    return bytes;
  }

  void note(const std::string& key, json value) { summary_[key] = std::move(value); }

  void finish() {
    json manifest{{"tool", "scdh"},
                  {"version", SCDH_VERSION},
                  {"command", command_},
                  {"seed", config_.at("seed")},
                  {"config", config_},
                  {"inputs", inputs_},
                  {"outputs", outputs_},
                  {"summary", summary_}};
    io::write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::string command_;
  json config_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  json summary_ = json::object();
};

std::vector<Field> common_fields() {
  return {{"seed", Kind::UInt, 1, "random seed"},
          {"threads", Kind::UInt, 1, "worker threads for parallel sections (1 keeps results bit-exact)"}};
}

std::vector<Field> with_common(std::vector<Field> fields) {
  auto common = common_fields();
  fields.insert(fields.begin(), common.begin(), common.end());
  return fields;
}

std::vector<Field> hyperparam_fields() {
  const model::Hyperparams d;
  json sched = json::array();
  for (auto [e, m] : d.lr_schedule) sched.push_back({e, m});
  return {{"hidden", Kind::UIntList, json::array({64}), "hidden layer widths"},
          {"code_length", Kind::UInt, 24, "code length r in bits"},
          {"preset", Kind::String, "cifar10", "lambda/mu/alpha preset: cifar10, nuswide or imagenet"},
          {"lambda", Kind::OptReal, nullptr, "center-distance weight (overrides the preset)"},
          {"mu", Kind::OptReal, nullptr, "classifier weight (overrides the preset)"},
          {"alpha", Kind::OptReal, nullptr, "quantization weight (overrides the preset)"},
          {"holder_p", Kind::Real, d.holder_p, "Holder exponent p of the quantization loss"},
          {"holder_q", Kind::Real, d.holder_q, "conjugate exponent q"},
          {"warmup_epochs", Kind::Int, d.warmup_epochs, "epochs with centers projected to norm s"},
          {"warmup_norm_s", Kind::Real, d.warmup_norm_s, "warm-up center norm s"},
          {"lr", Kind::Real, d.lr, "learning rate"},
          {"momentum", Kind::Real, d.momentum, "SGD momentum"},
          {"epochs", Kind::Int, d.epochs, "training epochs"},
          {"batch_size", Kind::Int, d.batch_size, "labeled mini-batch size"},
          {"lr_schedule", Kind::Schedule, sched, "learning-rate multipliers as epoch:factor pairs"},
          {"balance", Kind::Bool, false, "upsample classes to equal counts before training"}};
}

model::Hyperparams hyperparams_from(const json& cfg) {
  const std::string preset = cfg.at("preset");
  model::Hyperparams hp;
  if (preset == "cifar10") hp = model::Hyperparams::cifar10();
  else if (preset == "nuswide") hp = model::Hyperparams::nuswide();
  else if (preset == "imagenet") hp = model::Hyperparams::imagenet();
  else throw ValidationError("unknown preset '" + preset + "'");
  if (!cfg.at("lambda").is_null()) hp.lambda = cfg.at("lambda");
  if (!cfg.at("mu").is_null()) hp.mu = cfg.at("mu");
  if (!cfg.at("alpha").is_null()) hp.alpha = cfg.at("alpha");
  hp.holder_p = cfg.at("holder_p");
  hp.holder_q = cfg.at("holder_q");
  hp.warmup_epochs = cfg.at("warmup_epochs");
  hp.warmup_norm_s = cfg.at("warmup_norm_s");
  hp.lr = cfg.at("lr");
  hp.momentum = cfg.at("momentum");
  hp.epochs = cfg.at("epochs");
  hp.batch_size = cfg.at("batch_size");
  hp.lr_schedule.clear();
  for (const auto& e : cfg.at("lr_schedule")) hp.lr_schedule.emplace_back(e[0], e[1]);
  hp.seed = cfg.at("seed");
  hp.validate();
  return hp;
}

model::Architecture architecture_from(const json& cfg, const data::Dataset& train) {
  model::Architecture arch;
  arch.dims.push_back(train.dim);
  for (const auto& h : cfg.at("hidden")) arch.dims.push_back(h.get<std::size_t>());
  arch.code_length = cfg.at("code_length");
  arch.class_count = train.class_count;
  return arch;
}

std::string epochs_csv(const model::TrainReport& report) {
  std::string out =
      "epoch,scul_loss,classification_loss,quantization_loss,center_distance,total_loss,learning_rate\n";
  for (const auto& e : report.epochs) {
    out += fmt::format("{},{},{},{},{},{},{}\n", e.epoch, num(e.scul_loss),
                       num(e.classification_loss), num(e.quantization_loss),
                       num(e.center_distance), num(e.total_loss), num(e.learning_rate));
  }
  return out;
}

// ------------------------------------------------------------------ commands

std::vector<Field> gen_fields() {
  const data::SyntheticConfig d;
  return with_common({
      {"class_count", Kind::Int, d.class_count, "number of classes C"},
      {"feature_dim", Kind::UInt, d.feature_dim, "feature dimension"},
      {"cluster_std", Kind::Real, d.cluster_std, "per-coordinate cluster standard deviation"},
      {"center_spread", Kind::Real, d.center_spread, "standard deviation of the cluster means"},
      {"samples_per_class", Kind::UInt, d.samples_per_class, "samples drawn per class"},
      {"multilabel_p", Kind::OptReal, nullptr, "per-label inclusion probability (multilabel mode)"},
      {"input_csv", Kind::String, "", "import this CSV instead of generating data"},
      {"csv_class_count", Kind::Int, 0, "class count for CSV import (0 infers it)"},
      {"train_size", Kind::UInt, 4000, "train split size (0 with the other sizes 0 disables splitting)"},
      {"query_size", Kind::UInt, 800, "query split size"},
      {"database_size", Kind::UInt, 4000, "database split size"},
      {"label_fraction", Kind::Real, 1.0, "share of train samples that keep their labels"},
  });
}

void cmd_gen(const json& cfg, RunOutputs& out) {
  const std::uint64_t seed = cfg.at("seed");
  data::Dataset ds;
  const std::string csv = cfg.at("input_csv");
  if (!csv.empty()) {
    ds = data::parse_csv(out.read_input("input_csv", csv), cfg.at("csv_class_count"));
  } else {
    data::SyntheticConfig sc;
    sc.class_count = cfg.at("class_count");
    sc.feature_dim = cfg.at("feature_dim");
    sc.cluster_std = cfg.at("cluster_std");
    sc.center_spread = cfg.at("center_spread");
    sc.samples_per_class = cfg.at("samples_per_class");
    if (!cfg.at("multilabel_p").is_null()) sc.multilabel_p = cfg.at("multilabel_p").get<double>();
    sc.seed = seed;
    ds = sc.multilabel_p ? data::gen_multilabel(sc) : data::gen_gaussian_clusters(sc);
  }
  const std::size_t nt = cfg.at("train_size"), nq = cfg.at("query_size"), nd = cfg.at("database_size");
  const double keep = cfg.at("label_fraction");
  if (nt + nq + nd == 0) {
    if (keep < 1.0) ds = data::strip_labels(ds, keep, mix64(seed + 2));
    out.write("dataset.scds", data::encode_dataset(ds));
    out.note("samples", ds.size());
    return;
  }
  auto splits = data::split_dataset(ds, nt, nq, nd, mix64(seed + 1));
  if (keep < 1.0) splits.train = data::strip_labels(splits.train, keep, mix64(seed + 2));
  out.write("train.scds", data::encode_dataset(splits.train));
  out.write("query.scds", data::encode_dataset(splits.query));
  out.write("database.scds", data::encode_dataset(splits.database));
  out.note("train_labeled", data::labeled_subset(splits.train).size());
}

std::vector<Field> train_fields() {
  auto f = with_common({{"train_data", Kind::String, "", "training dataset (.scds)"}});
  auto hp = hyperparam_fields();
  f.insert(f.end(), hp.begin(), hp.end());
  return f;
}

data::Dataset load_training(const json& cfg, RunOutputs& out) {
  auto ds = data::decode_dataset(out.read_input("train_data", cfg.at("train_data")));
  if (cfg.at("balance").get<bool>()) ds = data::balance_upsample(ds, mix64(cfg.at("seed").get<std::uint64_t>() + 3));
  return ds;
}

void cmd_train(const json& cfg, RunOutputs& out) {
  const auto hp = hyperparams_from(cfg);
  const auto train = load_training(cfg, out);
  const auto arch = architecture_from(cfg, train);
  auto [m, report] = model::train_scdh(train, arch, hp);
  for (const auto& e : report.epochs) {
    spdlog::info("epoch {} total {:.5f} l_q {:.4f}", e.epoch, e.total_loss, e.quantization_loss);
  }
  model::Checkpoint ck{{m.net}, json{{"hyperparams", json::parse(model::to_json(hp))}}.dump()};
  out.write("model.scdm", model::encode_checkpoint(ck));
  out.write("train_report.json", json::parse(model::to_json(report)).dump(2) + "\n");
  out.write("train_epochs.csv", epochs_csv(report));
  out.note("final_quantization_loss", report.final_quantization_loss);
}

std::vector<Field> train_semi_fields() {
  const meanteacher::MeanTeacherConfig d;
  auto f = train_fields();
  f.insert(f.end(), {{"w", Kind::Real, d.w, "consistency weight"},
                     {"ema_decay", Kind::Real, d.ema_decay, "teacher EMA decay ceiling"},
                     {"noise_std", Kind::Real, d.noise_std, "input perturbation standard deviation"},
                     {"rampup_fraction", Kind::Real, d.rampup_fraction, "share of steps spent ramping w up"},
                     {"unlabeled_batch_size", Kind::Int, d.unlabeled_batch_size, "unlabeled draws per step"}});
  return f;
}

void cmd_train_semi(const json& cfg, RunOutputs& out) {
  const auto hp = hyperparams_from(cfg);
  meanteacher::MeanTeacherConfig mt;
  mt.w = cfg.at("w");
  mt.ema_decay = cfg.at("ema_decay");
  mt.noise_std = cfg.at("noise_std");
  mt.rampup_fraction = cfg.at("rampup_fraction");
  mt.unlabeled_batch_size = cfg.at("unlabeled_batch_size");
  mt.validate();
  auto full = data::decode_dataset(out.read_input("train_data", cfg.at("train_data")));
  auto semi = meanteacher::SemiDataset::from(full);
  if (cfg.at("balance").get<bool>()) {
    semi.labeled = data::balance_upsample(semi.labeled, mix64(cfg.at("seed").get<std::uint64_t>() + 3));
  }
  const auto arch = architecture_from(cfg, semi.labeled);
  auto result = meanteacher::train_mt_scdh(semi, arch, hp, mt);
  json meta{{"hyperparams", json::parse(model::to_json(hp))},
            {"mean_teacher", json::parse(meanteacher::to_json(mt))},
            {"networks", {"student", "teacher"}}};
  model::Checkpoint ck{{result.student.net, result.teacher.net}, meta.dump()};
  out.write("model.scdm", model::encode_checkpoint(ck));
  out.write("train_report.json", json::parse(meanteacher::to_json(result)).dump(2) + "\n");
  out.write("train_epochs.csv", epochs_csv(result.report));
  out.note("labeled", semi.labeled.size());
  out.note("unlabeled", semi.unlabeled.size());
}

std::vector<Field> encode_fields() {
  return with_common({{"model", Kind::String, "", "checkpoint (.scdm)"},
                      {"data", Kind::String, "", "dataset to encode (.scds)"},
                      {"network", Kind::String, "auto", "auto, student or teacher (auto prefers the teacher)"},
                      {"name", Kind::String, "codes", "output file stem"}});
}

void cmd_encode(const json& cfg, RunOutputs& out) {
  const auto ck = model::decode_checkpoint(out.read_input("model", cfg.at("model")));
  const auto ds = data::decode_dataset(out.read_input("data", cfg.at("data")));
  const std::string which = cfg.at("network");
  std::size_t idx = 0;
  if (which == "teacher" || (which == "auto" && ck.networks.size() > 1)) {
    if (ck.networks.size() < 2) throw ValidationError("checkpoint holds no teacher network");
    idx = 1;
  } else if (which != "student" && which != "auto") {
    throw ValidationError("network must be auto, student or teacher");
  }
  std::vector<std::uint64_t> ids;
  for (const auto& s : ds.samples) ids.push_back(s.id);
  const auto index = retrieval::build_index(model::embed(ck.networks[idx], ds), ids);
  out.write(cfg.at("name").get<std::string>() + ".scdh", retrieval::encode_codes(index));
  out.note("network", idx == 1 ? "teacher" : "student");
  out.note("codes", index.size());
}

std::vector<Field> eval_fields() {
  const retrieval::EvalConfig d;
  return with_common({{"query_codes", Kind::String, "", "query codes (.scdh)"},
                      {"database_codes", Kind::String, "", "database codes (.scdh)"},
                      {"query_data", Kind::String, "", "query dataset supplying labels by id"},
                      {"database_data", Kind::String, "", "database dataset supplying labels by id"},
                      {"map_k", Kind::OptUInt, nullptr, "MAP cutoff k (unset ranks the whole database)"},
                      {"radius", Kind::Int, d.radius, "Hamming radius for precision"},
                      {"empty_ball_scores_zero", Kind::Bool, d.empty_ball_scores_zero,
                       "queries with an empty Hamming ball score 0 instead of being skipped"},
                      {"curve_ks", Kind::UIntList, d.curve_ks, "cutoffs of the top-k precision curve"}});
}

retrieval::CodeIndex attach_labels(retrieval::CodeIndex index, const data::Dataset& ds) {
  std::unordered_map<std::uint64_t, const LabelSet*> by_id;
  for (const auto& s : ds.samples) by_id.emplace(s.id, &s.labels);
  index.labels.clear();
  for (auto id : index.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end() || it->second->empty()) {
      throw ValidationError("no labels for code id " + std::to_string(id));
    }
    index.labels.push_back(*it->second);
  }
  return index;
}

void cmd_eval(const json& cfg, RunOutputs& out) {
  auto queries = attach_labels(
      retrieval::decode_codes(out.read_input("query_codes", cfg.at("query_codes"))),
      data::decode_dataset(out.read_input("query_data", cfg.at("query_data"))));
  auto database = attach_labels(
      retrieval::decode_codes(out.read_input("database_codes", cfg.at("database_codes"))),
      data::decode_dataset(out.read_input("database_data", cfg.at("database_data"))));
  retrieval::EvalConfig ec;
  if (!cfg.at("map_k").is_null()) ec.map_k = cfg.at("map_k").get<std::size_t>();
  ec.radius = cfg.at("radius");
  ec.empty_ball_scores_zero = cfg.at("empty_ball_scores_zero");
  ec.curve_ks = cfg.at("curve_ks").get<std::vector<std::size_t>>();
  ec.threads = cfg.at("threads");
  const auto metrics = retrieval::evaluate(queries, database, ec);
  out.write("metrics.json", retrieval::to_json(metrics) + "\n");
  out.write("topk_curve.csv", retrieval::curve_csv(metrics));
  out.note("map", metrics.map);
  out.note("map_at_k", metrics.map_at_k);
  out.note("precision_at_radius2", metrics.precision_at_radius2);
}

std::vector<Field> verify_bounds_fields() {
  const bounds::UnaryBoundSuiteConfig u;
  const bounds::MultilabelSuiteConfig m;
  return with_common({{"instances", Kind::UInt, u.instances, "random balanced single-label instances"},
                      {"max_n", Kind::UInt, u.max_n, "largest instance size"},
                      {"class_counts", Kind::IntList, u.class_counts, "class counts to sample"},
                      {"max_r", Kind::UInt, u.max_r, "largest code length"},
                      {"multilabel", Kind::Bool, true, "also run the multilabel expectation check"},
                      {"ml_configurations", Kind::UInt, m.configurations, "multilabel configurations"},
                      {"ml_max_n", Kind::UInt, m.max_n, "largest multilabel instance size"},
                      {"ml_r", Kind::UInt, m.r, "multilabel code length"},
                      {"ml_class_counts", Kind::IntList, m.class_counts, "multilabel class counts"},
                      {"ml_probabilities", Kind::RealList, m.probabilities, "per-label inclusion probabilities"},
                      {"ml_trials", Kind::UInt, m.trials, "Monte-Carlo trials per configuration"}});
}

void cmd_verify_bounds(const json& cfg, RunOutputs& out) {
  const std::uint64_t seed = cfg.at("seed");
  const unsigned threads = cfg.at("threads");
  bounds::UnaryBoundSuiteConfig u;
  u.instances = cfg.at("instances");
  u.max_n = cfg.at("max_n");
  u.class_counts = cfg.at("class_counts").get<std::vector<int>>();
  u.max_r = cfg.at("max_r");
  u.seed = seed;
  u.threads = threads;
  const auto unary = bounds::run_unary_bound_suite(u);
  std::string csv = "index,n,class_count,r,margin,triplet_loss,bound,multiplier,lambda_estimate,lambda_degenerate,holds\n";
  for (const auto& i : unary.instances) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", i.index, i.n, i.class_count, i.r,
                       num(i.margin), num(i.report.brute_force_loss), num(i.report.bound_value),
                       num(i.report.multiplier), num(i.report.lambda_estimate),
                       i.report.lambda_degenerate ? 1 : 0, i.report.holds ? 1 : 0);
  }
  out.write("unary_instances.csv", csv);
  json summary{{"unary", {{"instances", unary.instances.size()},
                          {"violations", unary.violations},
                          {"lambda_above_2", unary.lambda_violations},
                          {"max_lambda", unary.max_lambda}}}};
  std::size_t violations = unary.violations + unary.lambda_violations;
  if (cfg.at("multilabel").get<bool>()) {
    bounds::MultilabelSuiteConfig m;
    m.configurations = cfg.at("ml_configurations");
    m.max_n = cfg.at("ml_max_n");
    m.r = cfg.at("ml_r");
    m.class_counts = cfg.at("ml_class_counts").get<std::vector<int>>();
    m.probabilities = cfg.at("ml_probabilities").get<std::vector<double>>();
    m.trials = cfg.at("ml_trials");
    m.seed = mix64(seed + 1);
    m.threads = threads;
    const auto ml = bounds::run_multilabel_suite(m);
    std::string mcsv = "index,n,class_count,p,mean_loss,mean_bound,stderr_difference,resampled_empty_sets,holds\n";
    for (const auto& e : ml.entries) {
      mcsv += fmt::format("{},{},{},{},{},{},{},{},{}\n", e.index, e.n, e.class_count, num(e.p),
                          num(e.result.mean_loss), num(e.result.mean_bound),
                          num(e.result.stderr_difference), e.result.resampled_empty_sets,
                          e.result.report.holds ? 1 : 0);
    }
    out.write("multilabel_configs.csv", mcsv);
    summary["multilabel"] = {{"configurations", ml.entries.size()}, {"violations", ml.violations}};
    violations += ml.violations;
  }
  summary["violations"] = violations;
  out.write("bounds.json", summary.dump(2) + "\n");
  out.note("violations", violations);
}

std::vector<Field> lambda_toy_fields() {
  const bounds::ToyConfig d;
  return with_common({{"r", Kind::UInt, d.r, "embedding dimension"},
                      {"class_count", Kind::Int, d.class_count, "number of Gaussian clusters"},
                      {"sigma_grid", Kind::RealList, d.sigma_grid, "cluster standard deviations"},
                      {"d_grid", Kind::RealList, d.d_grid, "distances between cluster means"},
                      {"samples_per_cluster", Kind::UInt, d.samples_per_cluster, "points per cluster"},
                      {"margin", Kind::Real, d.margin, "triplet margin m"},
                      {"enumeration_limit", Kind::UInt, d.enumeration_limit, "enumerate all triplets below this n"},
                      {"sampled_triplets", Kind::UInt, d.sampled_triplets, "sampled triplets per cell otherwise"}});
}

std::string toy_csv(const std::vector<bounds::ToyRow>& rows) {
  std::string out = "sigma,d,triplet_loss,unary_upper_bound,relaxed_triplet_loss,lambda_estimate,lambda_degenerate,enumerated\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", num(r.sigma), num(r.d), num(r.triplet_loss),
                       num(r.unary_upper_bound), num(r.relaxed_triplet_loss),
                       num(r.lambda_estimate), r.lambda_degenerate ? 1 : 0, r.enumerated ? 1 : 0);
  }
  return out;
}

void cmd_lambda_toy(const json& cfg, RunOutputs& out) {
  bounds::ToyConfig tc;
  tc.r = cfg.at("r");
  tc.class_count = cfg.at("class_count");
  tc.sigma_grid = cfg.at("sigma_grid").get<std::vector<double>>();
  tc.d_grid = cfg.at("d_grid").get<std::vector<double>>();
  tc.samples_per_cluster = cfg.at("samples_per_cluster");
  tc.margin = cfg.at("margin");
  tc.enumeration_limit = cfg.at("enumeration_limit");
  tc.sampled_triplets = cfg.at("sampled_triplets");
  tc.seed = cfg.at("seed");
  tc.threads = cfg.at("threads");
  tc.validate();
  const auto grid = bounds::toy_lambda_grid(tc);
  out.write("toy_grid.csv", toy_csv(grid));
  std::size_t small = 0;
  double max_lambda = 0.0;
  for (const auto& r : grid) {
    if (r.lambda_estimate < 1.0) ++small;
    max_lambda = std::max(max_lambda, r.lambda_estimate);
  }
  std::vector<bounds::ToyRow> path;
  if (tc.sigma_grid.size() == tc.d_grid.size()) {
    bounds::ToyConfig pc = tc;
    std::sort(pc.sigma_grid.rbegin(), pc.sigma_grid.rend());
    std::sort(pc.d_grid.begin(), pc.d_grid.end());
    path = bounds::toy_lambda_path(pc);
    out.write("toy_path.csv", toy_csv(path));
  }
  json summary{{"cells", grid.size()},
               {"lambda_below_1_fraction", grid.empty() ? 0.0 : double(small) / double(grid.size())},
               {"max_lambda", max_lambda},
               {"path_cells", path.size()}};
  out.write("toy_summary.json", summary.dump(2) + "\n");
  out.note("lambda_below_1_fraction", summary["lambda_below_1_fraction"]);
}

struct Command {
  std::string name;
  std::string description;
  std::vector<Field> fields;
  std::function<void(const json&, RunOutputs&)> run;
};

void print_error(const char* kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("scdh");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("SCDH_LOG")) {
    const auto parsed = spdlog::level::from_str(env);
    if (parsed != spdlog::level::off || std::string(env) == "off") level = parsed;
  }
  spdlog::set_level(level);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  std::vector<Command> commands{
      {"gen", "generate or import a dataset and split it", gen_fields(), cmd_gen},
      {"train", "supervised training", train_fields(), cmd_train},
      {"train-semi", "semi-supervised mean-teacher training", train_semi_fields(), cmd_train_semi},
      {"encode", "binary codes for a dataset", encode_fields(), cmd_encode},
      {"eval", "retrieval metrics from query and database codes", eval_fields(), cmd_eval},
      {"verify-bounds", "randomized checks of the unary and multilabel upper bounds",
       verify_bounds_fields(), cmd_verify_bounds},
      {"lambda-toy", "lambda estimates on Gaussian toy clusters", lambda_toy_fields(),
       cmd_lambda_toy},
  };

  CLI::App app{"Deep hashing with cluster-center losses"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SCDH_VERSION);
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, std::string> out_dirs;
  std::vector<CLI::App*> subs;
  for (auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.description);
    sub->add_option("--config", config_paths[c.name], "JSON config file (or a run manifest)");
    out_dirs[c.name] = ".";
    sub->add_option("--out", out_dirs[c.name], "output directory")->capture_default_str();
    for (const auto& f : c.fields) {
      sub->add_option(cli::flag_name(f.name), flag_values[c.name][f.name],
                      f.help + " [default: " + f.fallback.dump() + "]");
    }
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 1;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const auto& c = commands[i];
    try {
      std::map<std::string, std::string> given;
      for (const auto& f : c.fields) {
        if (subs[i]->count(cli::flag_name(f.name)) > 0) given[f.name] = flag_values[c.name][f.name];
      }
      std::optional<std::string> config_text;
      if (!config_paths[c.name].empty()) {
        if (!fs::exists(config_paths[c.name])) {
          throw ValidationError("config file not found: " + config_paths[c.name]);
        }
        config_text = io::read_file(config_paths[c.name]);
      }
      const json cfg = cli::resolve_config(c.name, c.fields, config_text, given);
      RunOutputs outputs(out_dirs[c.name], c.name, cfg);
      c.run(cfg, outputs);
      outputs.finish();
      return 0;
    } catch (const ValidationError& e) {
      print_error("validation", e.what());
      return 1;
    } catch (const ParseError& e) {
      print_error("parse", e.what());
      return 1;
    } catch (const json::exception& e) {
      print_error("validation", e.what());
      return 1;
    } catch (const NumericError& e) {
      print_error("numeric", e.what());
      return 2;
    } catch (const std::exception& e) {
      print_error("runtime", e.what());
      return 2;
    }
  }
  return 1;
}
