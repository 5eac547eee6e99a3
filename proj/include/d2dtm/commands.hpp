#ifndef D2DTM_COMMANDS_HPP
#define D2DTM_COMMANDS_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "d2dtm/checkpoint.hpp"
#include "d2dtm/config.hpp"
#include "d2dtm/data.hpp"
#include "d2dtm/evaluation.hpp"
#include "d2dtm/synthetic.hpp"
#include "d2dtm/training.hpp"

namespace d2dtm {

/// A failure reported to the user as "error: <message>" with exit code 1.
class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings shared by commands that read a run config; unset fields keep
/// the config file's values.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::size_t>> ks;
  std::optional<Variant> variant;
  std::optional<ReconLoss> loss;
  std::optional<std::string> out_dir;

  void apply(RunConfig& c) const {
    if (seed) c.train.seed = *seed;
    if (ks) c.train.eval_ks = *ks;
    if (variant) c.train.variant = *variant;
    if (loss) c.hyper.recon = *loss;
    if (out_dir) c.out_dir = *out_dir;
  }
};

namespace detail {

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw CommandError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CommandError("cannot write '" + path.string() + "'");
  out << text;
}

inline RunConfig resolved_config(const std::string& path, const Overrides& ov) {
  RunConfig c = load_config(path);
  ov.apply(c);
  const auto problems = config_problems(c);
  if (!problems.empty()) throw ConfigError(problems);
  if (c.dataset_cache.empty()) throw ConfigError({"[data] cache is required"});
  return c;
}

inline DualDomainDataset load_cache(const std::string& path) {
  try {
    return load_dataset_cache(path);
  } catch (const std::exception& e) {
    throw CommandError(e.what());
  }
}

inline Manifest base_manifest(const std::string& command, const RunConfig& c, const std::string& config_path) {
  Manifest m;
  m.command = command;
  m.config = resolved_values(c);
  m.seed = c.train.seed;
  if (!config_path.empty()) m.inputs["config_file"] = fingerprint_hex(file_fingerprint(config_path));
  m.inputs["dataset_file"] = fingerprint_hex(file_fingerprint(c.dataset_cache));
  return m;
}

inline nlohmann::json report_json(const RankingReport& r) {
  nlohmann::json j = {{"n_users", r.n_users}};
  for (std::size_t i = 0; i < r.k_values.size(); ++i) {
    const std::string k = std::to_string(r.k_values[i]);
    j["recall@" + k] = r.recall[i];
    j["ndcg@" + k] = r.ndcg[i];
  }
  return j;
}

inline std::string epoch_json(const EpochRecord& e) {
  const auto& l = e.train_loss;
  const nlohmann::json j = {
      {"epoch", e.epoch},
      {"loss",
       {{"vae_a", l.vae_a}, {"vae_b", l.vae_b}, {"gan_a", l.gan_a}, {"gan_b", l.gan_b}, {"cc_a", l.cc_a},
        {"cc_b", l.cc_b}, {"disc_a", l.disc_a}, {"disc_b", l.disc_b}, {"total_encgen", l.total_encgen},
        {"total_disc", l.total_disc}}},
      {"valid_a2b", report_json(e.valid_a2b)},
      {"valid_b2a", report_json(e.valid_b2a)},
      {"selection_metric", e.selection_metric}};
  return j.dump();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  std::string ratings_a;  // generic mode: one rating file per domain
  std::string ratings_b;
  std::string ratings;    // MovieLens mode: one rating file split by genre
  std::string movies;
  std::string genre_a;
  std::string genre_b;
  std::string delimiter = "::";
  std::size_t header_lines = 0;
  std::string name = "dataset";
  std::string out_dir = "out";
};

/// Builds the dual-domain dataset, writes <out>/dataset.cache and a
/// manifest, and prints the statistics row. In MovieLens mode a movie that
/// carries both genres is dropped from both domains so the catalogs stay
/// disjoint.
inline int cmd_ingest(const IngestOptions& o, std::ostream& out) {
  RatingFormat fmt;
  fmt.delimiter = o.delimiter;
  fmt.header_lines = o.header_lines;
  Manifest m;
  m.command = "ingest";
  m.config = {{"delimiter", o.delimiter}, {"header_lines", std::to_string(o.header_lines)}, {"name", o.name}};
  auto read = [&](const std::string& path, const char* role) {
    if (!std::filesystem::exists(path)) throw CommandError("cannot open " + std::string(role) + " file '" + path + "'");
    m.inputs[role] = fingerprint_hex(file_fingerprint(path));
    try {
      return load_ratings_file(path, fmt);
    } catch (const std::exception& e) {
      throw CommandError(e.what());
    }
  };

  ClickSet clicks_a, clicks_b;
  const bool movielens = !o.ratings.empty();
  if (movielens) {
    if (o.movies.empty() || o.genre_a.empty() || o.genre_b.empty()) {
      throw CommandError("MovieLens mode needs --movies, --genre-a and --genre-b");
    }
    if (o.genre_a == o.genre_b) throw CommandError("--genre-a and --genre-b must differ");
    const auto records = read(o.ratings, "ratings");
    std::ifstream mf(o.movies);
    if (!mf) throw CommandError("cannot open movies file '" + o.movies + "'");
    m.inputs["movies"] = fingerprint_hex(file_fingerprint(o.movies));
    std::map<std::string, std::set<std::string>> genres;
    try {
      genres = load_movie_genres(mf);
    } catch (const std::exception& e) {
      throw CommandError(o.movies + ": " + e.what());
    }
    for (auto& [id, g] : genres) {
      if (g.contains(o.genre_a) && g.contains(o.genre_b)) g.clear();
    }
    clicks_a = binarize(filter_by_genre(records, genres, o.genre_a));
    clicks_b = binarize(filter_by_genre(records, genres, o.genre_b));
    m.config["genre_a"] = o.genre_a;
    m.config["genre_b"] = o.genre_b;
  } else {
    if (o.ratings_a.empty() || o.ratings_b.empty()) {
      throw CommandError("give --ratings-a and --ratings-b, or --ratings with --movies and both genres");
    }
    clicks_a = binarize(read(o.ratings_a, "ratings_a"));
    clicks_b = binarize(read(o.ratings_b, "ratings_b"));
  }

  DualDomainDataset ds;
  try {
    ds = build_dual_domain(clicks_a, clicks_b);
  } catch (const DatasetError& e) {
    throw CommandError(e.what());
  }
  const auto dir = detail::ensure_dir(o.out_dir);
  const auto cache = dir / "dataset.cache";
  save_dataset_cache(cache.string(), ds);
  m.inputs["dataset"] = fingerprint_hex(dataset_fingerprint(ds));
  m.outputs = {"dataset.cache"};
  save_manifest((dir / "manifest.json").string(), m);
  out << format_stats_table(o.name, dataset_stats(ds));
  out << "wrote " << cache.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string config;
  Overrides overrides;
};

inline Checkpoint make_checkpoint(const TrainResult& res, const RunConfig& c, const DualDomainDataset& full) {
  Checkpoint ck;
  ck.params = res.params;
  ck.hyper = c.hyper;
  ck.hyper.dropout_rate = c.train.dropout_rate;
  ck.variant = variant_name(c.train.variant);
  ck.seed = c.train.seed;
  ck.fingerprint = dataset_fingerprint(full);
  ck.items_a = full.domain_a.item_index;
  ck.items_b = full.domain_b.item_index;
  return ck;
}

/// Splits the cached dataset, trains, and writes checkpoint.bin, report.jsonl
/// (one record per epoch, then a summary record) and manifest.json.
inline int cmd_train(const TrainOptions& o, std::ostream& out) {
  const RunConfig c = detail::resolved_config(o.config, o.overrides);
  const auto full = detail::load_cache(c.dataset_cache);
  const auto parts = split_users(full, c.split);
  const ArchSpec arch = c.model.resolve(full.domain_a.n_items(), full.domain_b.n_items());
  const auto dir = detail::ensure_dir(c.out_dir);

  std::ostringstream report;
  const auto res = train(parts.train, parts.valid, arch, c.hyper, c.train, [&](const EpochRecord& e) {
    report << detail::epoch_json(e) << '\n';
  });
  const nlohmann::json summary = {
      {"best_epoch", res.report.best_epoch ? nlohmann::json(*res.report.best_epoch) : nlohmann::json(nullptr)},
      {"best_metric", res.report.best_metric},
      {"epochs_run", res.report.epochs.size()}};
  report << summary.dump() << '\n';

  save_checkpoint((dir / "checkpoint.bin").string(), make_checkpoint(res, c, full));
  detail::write_text(dir / "report.jsonl", report.str());
  auto m = detail::base_manifest("train", c, o.config);
  m.inputs["dataset"] = fingerprint_hex(dataset_fingerprint(full));
  m.outputs = {"checkpoint.bin", "report.jsonl"};
  save_manifest((dir / "manifest.json").string(), m);

  char buf[160];
  std::snprintf(buf, sizeof buf, "trained %zu epochs, best epoch %zu, valid recall@%zu %.6f, %.1fs\n",
                res.report.epochs.size(), res.report.best_epoch.value_or(0), c.train.eval_k_for_selection,
                res.report.best_metric, res.report.wall_time_seconds);
  out << buf << "wrote " << (dir / "checkpoint.bin").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string checkpoint;
  std::string dataset;
  std::string config;           // optional: split settings and K list
  std::string split = "all";    // all, train, valid or test
  std::string scorer = "model"; // model, oracle or popularity
  std::optional<std::vector<std::size_t>> ks;
  std::string out_dir = "out";
};

/// Scores both directions and writes metrics.csv (also echoed to `out`).
inline int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  std::vector<std::size_t> ks = o.ks ? *o.ks : (o.config.empty() ? kDefaultKs : c.train.eval_ks);
  const std::string cache = o.dataset.empty() ? c.dataset_cache : o.dataset;
  if (cache.empty()) throw CommandError("eval needs --dataset or a config with [data] cache");
  const auto full = detail::load_cache(cache);

  Checkpoint ck;
  const bool need_ck = o.scorer == "model";
  if (o.scorer != "model" && o.scorer != "oracle" && o.scorer != "popularity") {
    throw CommandError("unknown scorer '" + o.scorer + "'");
  }
  if (need_ck) {
    if (o.checkpoint.empty()) throw CommandError("eval needs --checkpoint");
    try {
      ck = load_checkpoint(o.checkpoint);
      if (auto warning = check_compatible(ck, full); !warning.empty()) err << warning << '\n';
    } catch (const CheckpointError& e) {
      throw CommandError(e.what());
    }
  }

  DualDomainDataset target = full;
  DualDomainDataset reference = full;  // popularity counts
  if (o.split != "all") {
    const auto parts = split_users(full, c.split);
    if (o.split == "train") target = parts.train;
    else if (o.split == "valid") target = parts.valid;
    else if (o.split == "test") target = parts.test;
    else throw CommandError("unknown split '" + o.split + "'");
    reference = parts.train;
  }

  std::vector<RankingReport> reports;
  for (Direction dir : {Direction::a2b, Direction::b2a}) {
    Scorer s;
    if (o.scorer == "model") s = model_scorer(ck.params, dir, ck.hyper.recon);
    else if (o.scorer == "oracle") s = oracle_scorer(target, dir);
    else s = popularity_scorer(reference, dir);
    reports.push_back(evaluate_scores(s, target, dir, ks));
  }
  std::ostringstream csv;
  write_report_csv(csv, reports);
  const auto dir = detail::ensure_dir(o.out_dir);
  detail::write_text(dir / "metrics.csv", csv.str());

  Manifest m;
  m.command = "eval";
  m.config = resolved_values(c);
  m.config["eval.split"] = o.split;
  m.config["eval.scorer"] = o.scorer;
  m.config["eval.ks"] = detail::join_sizes(ks);
  m.seed = need_ck ? ck.seed : 0;
  m.inputs["dataset_file"] = fingerprint_hex(file_fingerprint(cache));
  m.inputs["dataset"] = fingerprint_hex(dataset_fingerprint(full));
  if (need_ck) m.inputs["checkpoint_file"] = fingerprint_hex(file_fingerprint(o.checkpoint));
  m.outputs = {"metrics.csv"};
  save_manifest((dir / "manifest.json").string(), m);
  out << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOptions {
  std::string config;
  std::string mode = "variants";  // variants, losses or both
  Overrides overrides;
};

/// Trains each variant (and/or reconstruction loss) on the train split and
/// writes test-split metrics to ablation.csv.
inline int cmd_ablate(const AblateOptions& o, std::ostream& out) {
  if (o.mode != "variants" && o.mode != "losses" && o.mode != "both") {
    throw CommandError("unknown ablation mode '" + o.mode + "'");
  }
  const RunConfig c = detail::resolved_config(o.config, o.overrides);
  const auto full = detail::load_cache(c.dataset_cache);
  const auto parts = split_users(full, c.split);
  const ArchSpec arch = c.model.resolve(full.domain_a.n_items(), full.domain_b.n_items());
  std::vector<AblationEntry> entries;
  if (o.mode != "losses") entries = run_ablation(parts.train, parts.valid, parts.test, arch, c.hyper, c.train);
  if (o.mode != "variants") {
    auto more = run_loss_ablation(parts.train, parts.valid, parts.test, arch, c.hyper, c.train);
    for (auto& e : more) {
      if (o.mode == "both") e.label = "loss_" + e.label;
      entries.push_back(std::move(e));
    }
  }
  std::ostringstream csv;
  write_ablation_csv(csv, entries);
  const auto dir = detail::ensure_dir(c.out_dir);
  detail::write_text(dir / "ablation.csv", csv.str());
  auto m = detail::base_manifest("ablate", c, o.config);
  m.config["ablate.mode"] = o.mode;
  m.inputs["dataset"] = fingerprint_hex(dataset_fingerprint(full));
  m.outputs = {"ablation.csv"};
  save_manifest((dir / "manifest.json").string(), m);
  out << csv.str();
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string checkpoint;
  Direction direction = Direction::a2b;
  std::vector<std::string> items;
  std::size_t top = 10;
  bool full = false;
};

/// Prints "item,score" lines for the target domain, highest score first.
/// With `full` every target item is printed.
inline int cmd_predict(const PredictOptions& o, std::ostream& out) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(o.checkpoint);
  } catch (const CheckpointError& e) {
    throw CommandError(e.what());
  }
  if (o.items.empty()) throw CommandError("empty source history");
  const Domain src = source_of(o.direction);
  const auto& catalog = ck.items(src);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < catalog.size(); ++i) index.emplace(catalog[i], i);
  Matrix x(1, catalog.size());
  std::vector<std::string> unknown;
  for (const auto& id : o.items) {
    const auto it = index.find(id);
    if (it == index.end()) unknown.push_back(id);
    else x.row(0)[it->second] = 1.0;
  }
  if (!unknown.empty()) {
    std::string msg = "unknown item id(s) for domain " + domain_name(src) + ":";
    for (const auto& u : unknown) msg += " " + u;
    throw CommandError(msg);
  }
  const Matrix scores = predict_cross(src, x, ck.params, ck.hyper.recon);
  const auto& targets = ck.items(target_of(o.direction));
  const auto ranked = top_k(scores.row(0), o.full ? targets.size() : std::max<std::size_t>(o.top, 1));
  char buf[64];
  for (auto i : ranked) {
    std::snprintf(buf, sizeof buf, "%.17g", scores.row(0)[i]);
    out << targets[i] << ',' << buf << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SyntheticSpec spec;
  std::string out_dir = "out";
};

/// Writes the clustered synthetic fixture as ratings_a.dat / ratings_b.dat.
inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
  const auto clicks = make_synthetic_clicks(o.spec);
  const auto dir = detail::ensure_dir(o.out_dir);
  std::ostringstream a, b;
  write_click_ratings(a, clicks.a);
  write_click_ratings(b, clicks.b);
  detail::write_text(dir / "ratings_a.dat", a.str());
  detail::write_text(dir / "ratings_b.dat", b.str());
  out << "wrote " << (dir / "ratings_a.dat").string() << " and " << (dir / "ratings_b.dat").string() << '\n';
  return 0;
}

}  // namespace d2dtm

#endif  // D2DTM_COMMANDS_HPP
