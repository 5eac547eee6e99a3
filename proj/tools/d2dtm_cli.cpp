// Command-line front end: ingest, train, eval, ablate, predict, synth.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "d2dtm/commands.hpp"

namespace {

using namespace d2dtm;

std::vector<std::size_t> parse_k_list(const std::string& s) {
  auto ks = detail::parse_size_list(s);
  if (!ks || ks->empty()) throw CLI::ValidationError("--k", "expected a comma-separated list of integers");
  for (auto k : *ks) {
    if (k == 0) throw CLI::ValidationError("--k", "K must be >= 1");
  }
  return *ks;
}

std::vector<std::string> split_items(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : detail::split(s, ",")) {
    const auto t = detail::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

/// Registers --seed/--k/--variant/--loss/--out on `cmd`, collected into `raw`.
struct RawOverrides {
  std::uint64_t seed = 0;
  std::string ks, variant, loss, out;
  CLI::Option* seed_opt = nullptr;

  void add(CLI::App* cmd) {
    seed_opt = cmd->add_option("--seed", seed, "Training seed");
    cmd->add_option("--k", ks, "Comma-separated K list, e.g. 10,20,50");
    cmd->add_option("--variant", variant, "Component variant")
        ->check(CLI::IsMember({"full", "vae_cc", "vae_gan", "vae"}));
    cmd->add_option("--loss", loss, "Reconstruction loss")
        ->check(CLI::IsMember({"multinomial", "logistic", "square", "l1"}));
    cmd->add_option("--out", out, "Output directory");
  }

  Overrides resolve() const {
    Overrides o;
    if (seed_opt && seed_opt->count()) o.seed = seed;
    if (!ks.empty()) o.ks = parse_k_list(ks);
    if (!variant.empty()) o.variant = parse_variant(variant);
    if (!loss.empty()) o.loss = parse_recon_loss(loss);
    if (!out.empty()) o.out_dir = out;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain recommendation with dual VAE/GAN translation"};
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Build a dual-domain dataset cache from rating files");
  c_ingest->add_option("--ratings-a", ingest.ratings_a, "Domain A rating file");
  c_ingest->add_option("--ratings-b", ingest.ratings_b, "Domain B rating file");
  c_ingest->add_option("--ratings", ingest.ratings, "MovieLens ratings.dat (split by genre)");
  c_ingest->add_option("--movies", ingest.movies, "MovieLens movies.dat");
  c_ingest->add_option("--genre-a", ingest.genre_a, "Genre forming domain A");
  c_ingest->add_option("--genre-b", ingest.genre_b, "Genre forming domain B");
  c_ingest->add_option("--delimiter", ingest.delimiter, "Field delimiter")->capture_default_str();
  c_ingest->add_option("--header-lines", ingest.header_lines, "Lines to skip at the top of each file");
  c_ingest->add_option("--name", ingest.name, "Dataset name for the stats row");
  c_ingest->add_option("--out", ingest.out_dir, "Output directory")->capture_default_str();

  TrainOptions train_opts;
  RawOverrides train_raw;
  auto* c_train = app.add_subcommand("train", "Train and write the best checkpoint");
  c_train->add_option("--config", train_opts.config, "Run config file")->required();
  train_raw.add(c_train);

  EvalOptions eval;
  std::string eval_ks;
  auto* c_eval = app.add_subcommand("eval", "Write Recall/NDCG for both directions");
  c_eval->add_option("--checkpoint", eval.checkpoint, "Checkpoint file");
  c_eval->add_option("--dataset", eval.dataset, "Dataset cache");
  c_eval->add_option("--config", eval.config, "Run config (split settings, K list, dataset)");
  c_eval->add_option("--split", eval.split, "Users to score")
      ->check(CLI::IsMember({"all", "train", "valid", "test"}))
      ->capture_default_str();
  c_eval->add_option("--scorer", eval.scorer)->check(CLI::IsMember({"model", "oracle", "popularity"}))->group("");
  c_eval->add_option("--k", eval_ks, "Comma-separated K list");
  c_eval->add_option("--out", eval.out_dir, "Output directory")->capture_default_str();

  AblateOptions ablate;
  RawOverrides ablate_raw;
  auto* c_ablate = app.add_subcommand("ablate", "Train every variant or loss kind and tabulate test metrics");
  c_ablate->add_option("--config", ablate.config, "Run config file")->required();
  c_ablate->add_option("--mode", ablate.mode, "What to vary")
      ->check(CLI::IsMember({"variants", "losses", "both"}))
      ->capture_default_str();
  ablate_raw.add(c_ablate);

  PredictOptions predict;
  std::string predict_dir = "a2b", predict_items;
  auto* c_predict = app.add_subcommand("predict", "Rank target-domain items for one source history");
  c_predict->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  c_predict->add_option("--direction", predict_dir, "Translation direction")
      ->check(CLI::IsMember({"a2b", "b2a"}))
      ->capture_default_str();
  c_predict->add_option("--items", predict_items, "Comma-separated source item ids");
  c_predict->add_option("--top", predict.top, "Number of items to print")->capture_default_str();
  c_predict->add_flag("--full", predict.full, "Print every target item");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Write the clustered synthetic rating files");
  c_synth->add_option("--seed", synth.spec.seed, "Generator seed");
  c_synth->add_option("--users", synth.spec.n_users, "Number of users")->capture_default_str();
  c_synth->add_option("--out", synth.out_dir, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, std::cout);
    if (c_train->parsed()) {
      train_opts.overrides = train_raw.resolve();
      return cmd_train(train_opts, std::cout);
    }
    if (c_eval->parsed()) {
      if (!eval_ks.empty()) eval.ks = parse_k_list(eval_ks);
      return cmd_eval(eval, std::cout, std::cerr);
    }
    if (c_ablate->parsed()) {
      ablate.overrides = ablate_raw.resolve();
      return cmd_ablate(ablate, std::cout);
    }
    if (c_predict->parsed()) {
      predict.direction = parse_direction(predict_dir);
      predict.items = split_items(predict_items);
      return cmd_predict(predict, std::cout);
    }
    if (c_synth->parsed()) return cmd_synth(synth, std::cout);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
