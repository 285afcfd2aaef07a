// relrank: train semantic triple models, rank visual relationship candidates,
// and evaluate ranked predictions.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "relrank/checkpoint.hpp"
#include "relrank/detection.hpp"
#include "relrank/evaluation.hpp"
#include "relrank/kg.hpp"
#include "relrank/log.hpp"
#include "relrank/manifest.hpp"
#include "relrank/model.hpp"
#include "relrank/ranking.hpp"
#include "relrank/synth.hpp"
#include "relrank/train.hpp"

namespace fs = std::filesystem;
using namespace relrank;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path manifest_path_for(const fs::path& output) {
  return fs::path(output.string() + ".manifest.json");
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("{}: '{}' is not a positive integer", what, item));
    }
  }
  if (out.empty()) throw ValidationError(fmt::format("{}: empty list", what));
  return out;
}

struct VocabArgs {
  std::string entities;
  std::string relations;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--entities", entities, "Entity vocabulary, one label per line")->required();
    cmd->add_option("--relations", relations, "Relation vocabulary, one label per line")
        ->required();
  }
  Vocabulary load(RunManifest& manifest) const {
    auto vocab = Vocabulary::load(entities, relations);
    manifest.add_input(entities);
    manifest.add_input(relations);
    return vocab;
  }
};

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  SynthConfig config;
  std::string out_dir = "synth";
};

int run_synth(const SynthArgs& args) {
  const auto start = Clock::now();
  const auto corpus = synthesize_corpus(args.config);
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);

  RunManifest manifest;
  manifest.command = "synth";
  const auto& c = args.config;
  manifest.config = {{"entities", c.entities},
                     {"relations", c.relations},
                     {"images", c.images},
                     {"tuples_per_image", c.tuples_per_image},
                     {"planted_rank", c.planted_rank},
                     {"planted_scale", c.planted_scale},
                     {"test_fraction", c.test_fraction},
                     {"entity_noise", c.noise.entity},
                     {"predicate_noise", c.noise.predicate},
                     {"box_jitter", c.noise.box_jitter}};
  manifest.seed = c.seed;
  manifest.code_version = code_version();

  corpus.vocab.save(dir / "entities.txt", dir / "relations.txt");
  save_annotations(dir / "train.jsonl", corpus.train, corpus.vocab);
  save_annotations(dir / "test.jsonl", corpus.test, corpus.vocab);
  save_detections(dir / "detections.jsonl", corpus.test_detections, corpus.vocab);
  save_detections(dir / "predicate_detections.jsonl", corpus.predicate_detections, corpus.vocab);
  save_checkpoint(dir / "planted.ckpt", corpus.planted, corpus.vocab.digest());
  for (const char* name : {"entities.txt", "relations.txt", "train.jsonl", "test.jsonl",
                           "detections.jsonl", "predicate_detections.jsonl", "planted.ckpt"}) {
    manifest.add_output(dir / name);
  }
  manifest.wall_clock_seconds = seconds_since(start);
  write_manifest(dir / "manifest.json", manifest);
  std::cout << fmt::format("wrote {} train and {} test tuples over {} images to {}\n",
                           corpus.train.size(), corpus.test.size(), c.images, dir.string());
  return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  VocabArgs vocab;
  std::string annotations;
  std::string model = "distmult";
  std::size_t rank = 8;
  std::string select_rank;
  std::size_t hidden_dim = 0;
  std::string config_path;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<double> negative_ratio;
  std::optional<std::size_t> batch_size;
  std::optional<double> weight_decay;
  std::optional<std::uint64_t> seed;
  double heldout_fraction = 0.05;
  std::string out = "model.ckpt";
  std::string report = "train_report.json";
  unsigned threads = 0;
};

int run_train(const TrainArgs& args) {
  const auto start = Clock::now();
  RunManifest manifest;
  manifest.command = "train";
  manifest.code_version = code_version();

  const auto vocab = args.vocab.load(manifest);
  const auto tuples = load_annotations(args.annotations, vocab);
  manifest.add_input(args.annotations);

  TrainConfig config;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw ValidationError(fmt::format("cannot open config {}", args.config_path));
    try {
      config = nlohmann::json::parse(in).get<TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}: {}", args.config_path, e.what()));
    }
    manifest.add_input(args.config_path);
  }
  if (args.epochs) config.epochs = *args.epochs;
  if (args.learning_rate) config.learning_rate = *args.learning_rate;
  if (args.negative_ratio) config.negative_ratio = *args.negative_ratio;
  if (args.batch_size) config.batch_size = *args.batch_size;
  if (args.weight_decay) config.weight_decay = *args.weight_decay;
  if (args.seed) config.seed = *args.seed;
  config.validate();

  const auto kind = parse_model_kind(args.model);
  const auto table = aggregate_counts(tuples, vocab);
  const auto split = make_split(table, args.heldout_fraction, config.seed);
  const TrainOptions options{args.threads};

  nlohmann::json snapshot = config;
  snapshot["model"] = to_string(kind);
  snapshot["hidden_dim"] = args.hidden_dim;
  snapshot["heldout_fraction"] = args.heldout_fraction;
  manifest.seed = config.seed;

  SemanticModel model;
  TrainReport report;
  nlohmann::json report_json;
  if (!args.select_rank.empty()) {
    const auto ranks = parse_list<std::size_t>(args.select_rank, "--select-rank");
    snapshot["select_rank"] = ranks;
    auto selection = select_rank(kind, split, ranks, config, args.hidden_dim, options);
    std::cout << fmt::format("{:>6}  {:>14}\n", "rank", "held-out NLL");
    for (std::size_t i = 0; i < selection.ranks.size(); ++i) {
      std::cout << fmt::format("{:>6}  {:>14.6f}{}\n", selection.ranks[i],
                               selection.heldout_nll[i],
                               selection.ranks[i] == selection.best_rank ? "  *" : "");
    }
    report_json = to_json(selection.best_report);
    report_json["rank_selection"] = {{"ranks", selection.ranks},
                                     {"heldout_nll", selection.heldout_nll},
                                     {"best_rank", selection.best_rank}};
    model = std::move(selection.best_model);
    report = std::move(selection.best_report);
  } else {
    snapshot["rank"] = args.rank;
    auto initial = init_model(kind, vocab.num_entities(), vocab.num_relations(), args.rank,
                              args.hidden_dim, config.seed);
    auto result = train(std::move(initial), split, config, options);
    model = std::move(result.model);
    report = std::move(result.report);
    report_json = to_json(report);
  }
  report_json["model"] = to_string(kind);
  report_json["rank"] = model.rank;
  report_json["heldout_triples"] = split.heldout.size();
  report_json["train_triples"] = split.train_counts.num_nonzero();

  save_checkpoint(args.out, model, vocab.digest());
  write_json_file(args.report, report_json);
  manifest.config = snapshot;
  manifest.add_output(args.out);
  manifest.add_output(args.report);
  manifest.wall_clock_seconds = seconds_since(start);
  write_manifest(manifest_path_for(args.out), manifest);

  const auto& best = report.heldout_nll.at(report.best_epoch);
  std::cout << fmt::format("{} rank {}: best epoch {} of {}, held-out mean NLL {:.6f} over {} "
                           "triples\n",
                           to_string(kind), model.rank, report.best_epoch + 1,
                           report.train_cost.size(), best.value_or(0.0), split.heldout.size());
  return 0;
}

// ---- rank ----------------------------------------------------------------

struct RankArgs {
  VocabArgs vocab;
  std::string checkpoint;
  std::string detections;
  std::string annotations;
  std::string prior = "model";
  bool visual_only = false;
  double beta = 1.0;
  std::size_t k = 100;
  std::size_t prune = 10;
  bool allow_self_pairs = false;
  std::string out = "ranked.jsonl";
  unsigned threads = 0;
};

int run_rank(const RankArgs& args) {
  const auto start = Clock::now();
  RunManifest manifest;
  manifest.command = "rank";
  manifest.code_version = code_version();
  manifest.config = {{"prior", args.prior},       {"visual_only", args.visual_only},
                     {"beta", args.beta},         {"k", args.k},
                     {"prune", args.prune},       {"allow_self_pairs", args.allow_self_pairs}};

  const auto vocab = args.vocab.load(manifest);
  const auto sets =
      load_detections(args.detections, vocab, DetectionOptions{args.allow_self_pairs});
  manifest.add_input(args.detections);

  std::optional<TripleCountTable> table;
  if (!args.annotations.empty()) {
    table = aggregate_counts(load_annotations(args.annotations, vocab), vocab);
    manifest.add_input(args.annotations);
  }

  SlotMarginals marginals = table ? SlotMarginals::from_counts(*table)
                                  : SlotMarginals::uniform(vocab.num_entities(),
                                                           vocab.num_relations());
  std::optional<SemanticPrior> prior;
  if (args.visual_only) {
    prior = SemanticPrior::constant(vocab.num_entities(), vocab.num_relations());
  } else if (args.prior == "counts") {
    if (!table) throw ValidationError("--prior counts requires --annotations");
    prior = SemanticPrior::from_counts(*table, 1.0, args.beta);
  } else if (args.prior == "model") {
    if (args.checkpoint.empty()) throw ValidationError("--prior model requires --checkpoint");
    const auto ckpt = load_checkpoint(args.checkpoint);
    manifest.add_input(args.checkpoint);
    if (ckpt.model.num_entities != vocab.num_entities() ||
        ckpt.model.num_relations != vocab.num_relations() ||
        (!ckpt.vocab_digest.empty() && ckpt.vocab_digest != vocab.digest())) {
      throw ValidationError(fmt::format(
          "checkpoint {} was trained on a different vocabulary ({} entities, {} relations)",
          args.checkpoint, ckpt.model.num_entities, ckpt.model.num_relations));
    }
    prior = SemanticPrior::from_model(ckpt.model, args.beta);
  } else {
    throw ValidationError(fmt::format("unknown --prior '{}' (model|counts)", args.prior));
  }
  if (!table && !args.visual_only) {
    log(LogLevel::kWarn, "no --annotations given; using uniform slot marginals");
  }

  RankOptions options;
  options.k = args.k;
  options.prune_top_m = args.prune;
  options.visual_only = args.visual_only;
  const auto ranked = rank_images(*prior, marginals, sets, options, args.threads);

  std::ofstream out(args.out);
  if (!out) throw ValidationError(fmt::format("cannot write {}", args.out));
  std::size_t total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    write_ranked(out, sets[i], ranked[i], vocab);
    total += ranked[i].size();
  }
  out.close();
  manifest.add_output(args.out);
  manifest.wall_clock_seconds = seconds_since(start);
  write_manifest(manifest_path_for(args.out), manifest);
  std::cout << fmt::format("ranked {} images, {} predictions written to {}\n", sets.size(), total,
                           args.out);
  return 0;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  VocabArgs vocab;
  std::string ranked;
  std::string predicate_ranked;
  std::string ground_truth;
  std::string train_annotations;
  std::string settings = "all";
  std::string ks = "100,50";
  bool zero_shot = false;
  std::string out;
};

int run_evaluate(const EvaluateArgs& args) {
  const auto start = Clock::now();
  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.code_version = code_version();

  const auto vocab = args.vocab.load(manifest);
  const auto ranked = load_ranked(args.ranked, vocab);
  manifest.add_input(args.ranked);
  std::optional<RankedLists> predicate_ranked;
  if (!args.predicate_ranked.empty()) {
    predicate_ranked = load_ranked(args.predicate_ranked, vocab);
    manifest.add_input(args.predicate_ranked);
  }
  const auto gts = load_annotations(args.ground_truth, vocab);
  manifest.add_input(args.ground_truth);

  TripleCountTable train_counts(vocab.num_entities(), vocab.num_relations(), {});
  if (!args.train_annotations.empty()) {
    train_counts = aggregate_counts(load_annotations(args.train_annotations, vocab), vocab);
    manifest.add_input(args.train_annotations);
  } else if (args.zero_shot) {
    throw ValidationError("--zero-shot requires --train-annotations");
  }

  std::vector<EvalSetting> settings;
  if (args.settings == "all") {
    settings.assign(std::begin(kAllSettings), std::end(kAllSettings));
  } else {
    std::stringstream ss(args.settings);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) settings.push_back(parse_eval_setting(item));
    }
    if (settings.empty()) throw ValidationError("--settings: empty list");
  }
  const auto ks = parse_list<std::size_t>(args.ks, "--k");
  for (auto k : ks) {
    if (k == 0) throw ValidationError("--k values must be >= 1");
  }

  EvalInputs inputs{&ranked, predicate_ranked ? &*predicate_ranked : nullptr};
  const auto report = evaluate(inputs, gts, train_counts, settings, ks, args.zero_shot);
  std::cout << format_table(report);
  if (!args.out.empty()) {
    write_json_file(args.out, to_json(report));
    manifest.config = {{"settings", args.settings}, {"k", ks}, {"zero_shot", args.zero_shot}};
    manifest.add_output(args.out);
    manifest.wall_clock_seconds = seconds_since(start);
    write_manifest(manifest_path_for(args.out), manifest);
  }
  return 0;
}

// ---- zero-shot-split -----------------------------------------------------

struct ZeroShotArgs {
  VocabArgs vocab;
  std::string train;
  std::string test;
  std::string out = "zero_shot.jsonl";
};

int run_zero_shot(const ZeroShotArgs& args) {
  const auto start = Clock::now();
  RunManifest manifest;
  manifest.command = "zero-shot-split";
  manifest.code_version = code_version();
  const auto vocab = args.vocab.load(manifest);
  const auto train = aggregate_counts(load_annotations(args.train, vocab), vocab);
  const auto test = load_annotations(args.test, vocab);
  manifest.add_input(args.train);
  manifest.add_input(args.test);
  const auto unseen = zero_shot_filter(test, train);
  save_annotations(args.out, unseen, vocab);
  manifest.add_output(args.out);
  manifest.wall_clock_seconds = seconds_since(start);
  write_manifest(manifest_path_for(args.out), manifest);
  std::cout << fmt::format("{} of {} test tuples have triples unseen in training\n",
                           unseen.size(), test.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-prior ranking for visual relationship detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-model synthetic corpus");
  synth_cmd->add_option("--entities", synth.config.entities)->capture_default_str();
  synth_cmd->add_option("--relations", synth.config.relations)->capture_default_str();
  synth_cmd->add_option("--images", synth.config.images)->capture_default_str();
  synth_cmd->add_option("--tuples-per-image", synth.config.tuples_per_image)
      ->capture_default_str();
  synth_cmd->add_option("--planted-rank", synth.config.planted_rank)->capture_default_str();
  synth_cmd->add_option("--planted-scale", synth.config.planted_scale)->capture_default_str();
  synth_cmd->add_option("--test-fraction", synth.config.test_fraction)->capture_default_str();
  synth_cmd->add_option("--noise", synth.config.noise.entity, "Wrong-entity score scale")
      ->capture_default_str();
  synth_cmd->add_option("--predicate-noise", synth.config.noise.predicate,
                        "Wrong-predicate score scale")
      ->capture_default_str();
  synth_cmd->add_option("--box-jitter", synth.config.noise.box_jitter)->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed)->capture_default_str();
  synth_cmd->add_option("--out-dir", synth.out_dir)->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit a semantic model to triple counts");
  tr.vocab.add_to(train_cmd);
  train_cmd->add_option("--annotations", tr.annotations, "Training annotations (JSON lines)")
      ->required();
  train_cmd->add_option("--model", tr.model, "distmult|complex|multiway-nn|rescal")
      ->capture_default_str();
  train_cmd->add_option("--rank", tr.rank)->capture_default_str();
  train_cmd->add_option("--select-rank", tr.select_rank,
                        "Comma-separated candidate ranks chosen on held-out NLL");
  train_cmd->add_option("--hidden-dim", tr.hidden_dim, "MultiwayNN hidden width (0 = rank)");
  train_cmd->add_option("--config", tr.config_path, "TrainConfig JSON");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--learning-rate", tr.learning_rate);
  train_cmd->add_option("--negative-ratio", tr.negative_ratio);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--weight-decay", tr.weight_decay);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--heldout-fraction", tr.heldout_fraction)->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->capture_default_str();
  train_cmd->add_option("--report", tr.report, "TrainReport JSON path")->capture_default_str();
  train_cmd->add_option("--threads", tr.threads, "Worker threads (0 = all cores)");

  RankArgs rk;
  auto* rank_cmd = app.add_subcommand("rank", "Rank six-tuples per image");
  rk.vocab.add_to(rank_cmd);
  rank_cmd->add_option("--checkpoint", rk.checkpoint);
  rank_cmd->add_option("--detections", rk.detections, "Detection JSON lines")->required();
  rank_cmd->add_option("--annotations", rk.annotations,
                       "Training annotations for slot marginals and the count prior");
  rank_cmd->add_option("--prior", rk.prior, "model|counts")->capture_default_str();
  rank_cmd->add_flag("--visual-only", rk.visual_only, "Ignore the semantic prior");
  rank_cmd->add_option("--beta", rk.beta, "Inverse temperature")->capture_default_str();
  rank_cmd->add_option("--k", rk.k)->capture_default_str();
  rank_cmd->add_option("--prune", rk.prune, "Top-m labels kept per region/pair (0 = exact)")
      ->capture_default_str();
  rank_cmd->add_flag("--allow-self-pairs", rk.allow_self_pairs);
  rank_cmd->add_option("--out", rk.out)->capture_default_str();
  rank_cmd->add_option("--threads", rk.threads, "Worker threads (0 = all cores)");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall@K under the detection settings");
  ev.vocab.add_to(eval_cmd);
  eval_cmd->add_option("--ranked", ev.ranked)->required();
  eval_cmd->add_option("--predicate-ranked", ev.predicate_ranked,
                       "Rankings on ground-truth boxes for predicate detection");
  eval_cmd->add_option("--ground-truth", ev.ground_truth)->required();
  eval_cmd->add_option("--train-annotations", ev.train_annotations);
  eval_cmd->add_option("--settings", ev.settings, "all or phrase,relationship,predicate,triple")
      ->capture_default_str();
  eval_cmd->add_option("--k", ev.ks)->capture_default_str();
  eval_cmd->add_flag("--zero-shot", ev.zero_shot, "Only score triples unseen in training");
  eval_cmd->add_option("--out", ev.out, "EvalReport JSON path");

  ZeroShotArgs zs;
  auto* zs_cmd = app.add_subcommand("zero-shot-split", "Extract test tuples unseen in training");
  zs.vocab.add_to(zs_cmd);
  zs_cmd->add_option("--train", zs.train)->required();
  zs_cmd->add_option("--test", zs.test)->required();
  zs_cmd->add_option("--out", zs.out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(tr);
    if (*rank_cmd) return run_rank(rk);
    if (*eval_cmd) return run_evaluate(ev);
    if (*zs_cmd) return run_zero_shot(zs);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
