#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "d2dtm/checkpoint.hpp"
#include "d2dtm/commands.hpp"
#include "d2dtm/config.hpp"

using namespace d2dtm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

/// Fresh scratch directory per test.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("d2dtm_cli_test_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// Synthetic ratings -> dataset cache -> run config under `dir`.
fs::path prepare_run(const TempDir& dir, std::size_t epochs, std::size_t users = 150) {
  SynthOptions so;
  so.spec.n_users = users;
  so.spec.n_items_a = 20;
  so.spec.n_items_b = 24;
  so.spec.seed = 5;
  so.out_dir = (dir / "raw").string();
  std::ostringstream sink;
  cmd_synth(so, sink);
  IngestOptions io;
  io.ratings_a = (dir / "raw" / "ratings_a.dat").string();
  io.ratings_b = (dir / "raw" / "ratings_b.dat").string();
  io.out_dir = (dir / "data").string();
  cmd_ingest(io, sink);
  const auto cfg = dir / "run.ini";
  spit(cfg, "[data]\ncache = " + (dir / "data" / "dataset.cache").string() +
                "\n[model]\nencoder_layer_sizes = 12,6\nlatent_dim = 4\ngenerator_layer_sizes = 6,12\n"
                "discriminator_layer_sizes = 6\n[training]\nepochs = " +
                std::to_string(epochs) +
                "\nbatch_size = 32\neval_k_for_selection = 10\neval_ks = 10,20\nseed = 3\n[output]\ndir = " +
                (dir / "run").string() + "\n");
  return cfg;
}

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(D2DTM_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, ParsesSectionsAndKeepsDefaults) {
  std::istringstream in(
      "# comment\n[data]\ncache = d.cache\n\n[split]\nseed = 9\n[model]\npreset = sparse\nlatent_dim = 20\n"
      "[loss]\nlambda0 = 2.5\nrecon = square\n[training]\nepochs = 7\nvariant = vae_gan\neval_ks = 10, 50\n"
      "tie_weights = false\n[output]\ndir = results  # trailing comment\n");
  const RunConfig c = parse_config(in);
  EXPECT_EQ(c.dataset_cache, "d.cache");
  EXPECT_EQ(c.split.seed, 9u);
  EXPECT_EQ(c.split.train_frac, 0.70);
  const auto arch = c.model.resolve(30, 40);
  EXPECT_EQ(arch.encoder_layer_sizes, (std::vector<std::size_t>{600, 200}));
  EXPECT_EQ(arch.latent_dim, 20u);
  EXPECT_EQ(arch.input_dim_b, 40u);
  EXPECT_EQ(c.hyper.lambda0, 2.5);
  EXPECT_EQ(c.hyper.lambda2, 100.0);
  EXPECT_EQ(c.hyper.recon, ReconLoss::square);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.train.variant, Variant::vae_gan);
  EXPECT_EQ(c.train.eval_ks, (std::vector<std::size_t>{10, 50}));
  EXPECT_FALSE(c.train.tie_weights);
  EXPECT_EQ(c.train.batch_size, 128u);
  EXPECT_EQ(c.out_dir, "results");
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"synthetic.ini", "movielens.ini"}) {
    const auto c = load_config(std::string(D2DTM_CONFIG_DIR) + "/" + name);
    EXPECT_FALSE(c.dataset_cache.empty()) << name;
  }
  const auto synth = load_config(std::string(D2DTM_CONFIG_DIR) + "/synthetic.ini");
  EXPECT_EQ(synth.model.resolve(50, 50), synthetic_fixture_arch(50, 50));
  EXPECT_EQ(synth.hyper, synthetic_fixture_hyper());
  const auto fixture = synthetic_fixture_train_config(0);
  EXPECT_EQ(synth.train.epochs, fixture.epochs);
  EXPECT_EQ(synth.train.batch_size, fixture.batch_size);
  EXPECT_EQ(synth.train.eval_k_for_selection, fixture.eval_k_for_selection);
}

TEST(Config, ListsEveryBadKeyAtOnce) {
  std::istringstream in(
      "[data]\ncache = x\nbogus = 1\n[training]\nepochs = many\nfoo = 2\n[loss]\nrecon = hinge\n[weird]\na = 1\n");
  try {
    parse_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const auto& p = e.problems();
    ASSERT_EQ(p.size(), 5u) << e.what();
    const std::string all = e.what();
    for (const char* needle : {"data.bogus", "training.epochs", "training.foo", "loss.recon", "[weird]"}) {
      EXPECT_NE(all.find(needle), std::string::npos) << needle;
    }
  }
}

TEST(Config, RejectsDuplicatesAndKeysOutsideSections) {
  std::istringstream in("epochs = 3\n[training]\nepochs = 1\nepochs = 2\nnot a pair\n");
  try {
    parse_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.problems().size(), 3u) << e.what();
  }
}

TEST(Config, CrossFieldChecks) {
  std::istringstream in("[split]\ntrain_frac = 0.9\n[model]\nn_shared_generator_layers = 3\n[training]\nbatch_size = 0\n");
  try {
    parse_config(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.problems().size(), 3u) << e.what();
  }
}

TEST(Config, WrittenConfigParsesToSameValues) {
  std::istringstream in("[data]\ncache = c\n[loss]\nlambda1 = 0.30000000000000004\n[training]\nlr_disc = 3e-4\n");
  const RunConfig c = parse_config(in);
  std::ostringstream out;
  write_config(out, c);
  std::istringstream again(out.str());
  const RunConfig c2 = parse_config(again);
  EXPECT_EQ(resolved_values(c), resolved_values(c2));
  EXPECT_EQ(c2.hyper.lambda1, 0.30000000000000004);
  EXPECT_EQ(resolved_values(c).at("model.encoder_layer_sizes"), "200,100");
}

// ---------------------------------------------------------------------------
// Checkpoint format

namespace {

Checkpoint toy_checkpoint(std::uint64_t seed) {
  Checkpoint ck;
  ck.params = D2DParams::initialize({6, 7, {5, 4}, 3, {4, 5}, 2, 1, {4}}, seed);
  ck.seed = seed;
  ck.fingerprint = 0x1234abcdULL;
  for (int i = 0; i < 6; ++i) ck.items_a.push_back("a" + std::to_string(i));
  for (int i = 0; i < 7; ++i) ck.items_b.push_back("b" + std::to_string(i));
  return ck;
}

}  // namespace

TEST(CheckpointFormat, RoundTripPredictionsAreBitwiseIdentical) {
  const auto ck = toy_checkpoint(4);
  std::stringstream buf;
  write_checkpoint(buf, ck);
  const auto back = read_checkpoint(buf);
  EXPECT_EQ(back.params.arch, ck.params.arch);
  EXPECT_EQ(back.hyper, ck.hyper);
  EXPECT_EQ(back.items_b, ck.items_b);
  EXPECT_EQ(back.fingerprint, ck.fingerprint);
  SeededRng rng(1);
  Matrix x(100, 6);
  for (std::size_t r = 0; r < 100; ++r) {
    x(r, rng.below(6)) = 1.0;
    for (std::size_t c = 0; c < 6; ++c) {
      if (rng.bernoulli(0.3)) x(r, c) = 1.0;
    }
  }
  const Matrix before = predict_cross(Domain::a, x, ck.params);
  const Matrix after = predict_cross(Domain::a, x, back.params);
  for (std::size_t i = 0; i < before.values().size(); ++i) {
    ASSERT_EQ(std::bit_cast<std::uint64_t>(before.values()[i]), std::bit_cast<std::uint64_t>(after.values()[i]));
  }
}

TEST(CheckpointFormat, SameContentSameBytes) {
  std::ostringstream a, b;
  write_checkpoint(a, toy_checkpoint(4));
  write_checkpoint(b, toy_checkpoint(4));
  EXPECT_EQ(a.str(), b.str());
  std::ostringstream c;
  write_checkpoint(c, toy_checkpoint(5));
  EXPECT_NE(a.str(), c.str());
}

TEST(CheckpointFormat, ValuesAreLittleEndianFloat64InBlockOrder) {
  auto ck = toy_checkpoint(4);
  ck.params.enc_private[0][0].weight(0, 0) = 1.0;
  std::ostringstream out;
  write_checkpoint(out, ck);
  const std::string s = out.str();
  const auto second_newline = s.find('\n', s.find('\n') + 1);
  const std::string first8 = s.substr(second_newline + 1, 8);
  const std::string expected("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8);
  EXPECT_EQ(first8, expected);
  std::size_t values = 0;
  for (const auto* b : ck.params.all_blocks()) values += b->parameter_count();
  EXPECT_EQ(s.size() - second_newline - 1, values * 8);
}

TEST(CheckpointFormat, RejectsCorruptInput) {
  std::ostringstream out;
  write_checkpoint(out, toy_checkpoint(4));
  const std::string good = out.str();
  auto load = [](const std::string& s) {
    std::istringstream in(s);
    return read_checkpoint(in);
  };
  EXPECT_THROW(load(good.substr(0, good.size() - 3)), CheckpointError);
  EXPECT_THROW(load(good + "x"), CheckpointError);
  EXPECT_THROW(load("d2dtm-checkpoint 2\n{}\n"), CheckpointError);
  EXPECT_THROW(load("something else\n"), CheckpointError);
  EXPECT_THROW(load("d2dtm-checkpoint 1\n{not json\n"), CheckpointError);
  std::string renamed = good;
  renamed.replace(renamed.find("enc_a.0"), 7, "enc_q.0");
  EXPECT_THROW(load(renamed), CheckpointError);
}

TEST(CheckpointFormat, CompatibilityCheck) {
  const auto ck = toy_checkpoint(4);
  ClickSet a, b;
  for (int i = 0; i < 6; ++i) a.emplace("u1", "a" + std::to_string(i));
  for (int i = 0; i < 7; ++i) b.emplace("u1", "b" + std::to_string(i));
  const auto ds = build_dual_domain(a, b);
  const auto warning = check_compatible(ck, ds);
  EXPECT_NE(warning.find("fingerprint"), std::string::npos);
  auto same = ck;
  same.fingerprint = dataset_fingerprint(ds);
  EXPECT_EQ(check_compatible(same, ds), "");
  b.emplace("u1", "b99");
  EXPECT_THROW(check_compatible(ck, build_dual_domain(a, b)), CheckpointError);
}

// ---------------------------------------------------------------------------
// Commands, in process

TEST(Commands, IngestIsDeterministic) {
  TempDir dir;
  prepare_run(dir, 0);
  const std::string first = slurp(dir / "data" / "dataset.cache");
  const std::string manifest = slurp(dir / "data" / "manifest.json");
  IngestOptions io;
  io.ratings_a = (dir / "raw" / "ratings_a.dat").string();
  io.ratings_b = (dir / "raw" / "ratings_b.dat").string();
  io.out_dir = (dir / "again").string();
  std::ostringstream out;
  EXPECT_EQ(cmd_ingest(io, out), 0);
  EXPECT_EQ(slurp(dir / "again" / "dataset.cache"), first);
  EXPECT_EQ(slurp(dir / "again" / "manifest.json"), manifest);
  EXPECT_NE(out.str().find("#item_A"), std::string::npos);
  const auto ds = load_dataset_cache((dir / "again" / "dataset.cache").string());
  EXPECT_EQ(ds.n_users(), 150u);
}

TEST(Commands, IngestMovieLensGenreSplit) {
  TempDir dir;
  spit(dir / "movies.dat", "1::A (1990)::Romance\n2::B (1991)::Thriller|Crime\n3::C (1992)::Romance|Thriller\n"
                           "4::D (1993)::Comedy\n");
  spit(dir / "ratings.dat", "1::1::5::100\n1::2::3::101\n1::3::4::102\n2::1::1::103\n2::4::2::104\n3::2::5::105\n");
  IngestOptions io;
  io.ratings = (dir / "ratings.dat").string();
  io.movies = (dir / "movies.dat").string();
  io.genre_a = "Romance";
  io.genre_b = "Thriller";
  io.out_dir = (dir / "out").string();
  std::ostringstream out;
  ASSERT_EQ(cmd_ingest(io, out), 0);
  const auto ds = load_dataset_cache((dir / "out" / "dataset.cache").string());
  EXPECT_EQ(ds.users, (std::vector<std::string>{"1"}));
  EXPECT_EQ(ds.domain_a.item_index, (std::vector<std::string>{"1"}));
  EXPECT_EQ(ds.domain_b.item_index, (std::vector<std::string>{"2"}));
}

TEST(Commands, IngestErrorsNameTheProblem) {
  TempDir dir;
  IngestOptions io;
  io.ratings_a = (dir / "missing_a.dat").string();
  io.ratings_b = (dir / "missing_b.dat").string();
  std::ostringstream out;
  try {
    cmd_ingest(io, out);
    FAIL();
  } catch (const CommandError& e) {
    EXPECT_NE(std::string(e.what()).find("missing_a.dat"), std::string::npos);
  }
  spit(dir / "a.dat", "u1::i1::5\n");
  spit(dir / "b.dat", "u2::j1::5\nu3::j2\n");
  io.ratings_a = (dir / "a.dat").string();
  io.ratings_b = (dir / "b.dat").string();
  try {
    cmd_ingest(io, out);
    FAIL();
  } catch (const CommandError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  spit(dir / "b.dat", "u2::j1::5\n");
  try {
    cmd_ingest(io, out);
    FAIL();
  } catch (const CommandError& e) {
    EXPECT_NE(std::string(e.what()).find("no overlapping users"), std::string::npos) << e.what();
  }
}

TEST(Commands, TrainZeroEpochsWritesInitialParameters) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 0);
  std::ostringstream out;
  ASSERT_EQ(cmd_train({cfg.string(), {}}, out), 0);
  const auto ck = load_checkpoint((dir / "run" / "checkpoint.bin").string());
  const auto init = D2DParams::initialize(ck.params.arch, SeededRng(3).fork(1).next_u64());
  const auto a = ck.params.all_blocks();
  const auto b = init.all_blocks();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i]->weight == b[i]->weight);
  const std::string report = slurp(dir / "run" / "report.jsonl");
  EXPECT_EQ(count_lines(report), 1u);
  EXPECT_NE(report.find("\"epochs_run\":0"), std::string::npos);
}

TEST(Commands, TrainSameSeedIsByteIdentical) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 3);
  std::ostringstream out;
  Overrides o1;
  o1.out_dir = (dir / "r1").string();
  Overrides o2;
  o2.out_dir = (dir / "r2").string();
  ASSERT_EQ(cmd_train({cfg.string(), o1}, out), 0);
  ASSERT_EQ(cmd_train({cfg.string(), o2}, out), 0);
  EXPECT_EQ(slurp(dir / "r1" / "checkpoint.bin"), slurp(dir / "r2" / "checkpoint.bin"));
  EXPECT_EQ(slurp(dir / "r1" / "report.jsonl"), slurp(dir / "r2" / "report.jsonl"));
  EXPECT_EQ(count_lines(slurp(dir / "r1" / "report.jsonl")), 4u);
  const std::string m1 = slurp(dir / "r1" / "manifest.json");
  EXPECT_NE(m1.find("\"training.seed\": \"3\""), std::string::npos) << m1;
  EXPECT_NE(m1.find("dataset_file"), std::string::npos);

  Overrides o3;
  o3.out_dir = (dir / "r3").string();
  o3.seed = 4;
  ASSERT_EQ(cmd_train({cfg.string(), o3}, out), 0);
  EXPECT_NE(slurp(dir / "r1" / "checkpoint.bin"), slurp(dir / "r3" / "checkpoint.bin"));
  EXPECT_NE(slurp(dir / "r1" / "manifest.json"), slurp(dir / "r3" / "manifest.json"));
}

TEST(Commands, TrainOverridesReachTheCheckpoint) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 1);
  Overrides o;
  o.variant = Variant::vae_cc;
  o.loss = ReconLoss::logistic;
  std::ostringstream out;
  ASSERT_EQ(cmd_train({cfg.string(), o}, out), 0);
  const auto ck = load_checkpoint((dir / "run" / "checkpoint.bin").string());
  EXPECT_EQ(ck.variant, "vae_cc");
  EXPECT_EQ(ck.hyper.recon, ReconLoss::logistic);
}

TEST(Commands, EvalShapesRerunsAndParses) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 2);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train({cfg.string(), {}}, out), 0);
  EvalOptions eo;
  eo.checkpoint = (dir / "run" / "checkpoint.bin").string();
  eo.dataset = (dir / "data" / "dataset.cache").string();
  eo.ks = std::vector<std::size_t>{10, 50};
  eo.out_dir = (dir / "e1").string();
  std::ostringstream csv1;
  ASSERT_EQ(cmd_eval(eo, csv1, err), 0);
  EXPECT_EQ(err.str(), "");
  EXPECT_EQ(count_lines(csv1.str()), 5u);
  std::istringstream back(csv1.str());
  const auto reports = parse_report_csv(back);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].k_values, (std::vector<std::size_t>{10, 50}));
  EXPECT_EQ(reports[1].direction, Direction::b2a);
  EXPECT_EQ(reports[0].n_users, 150u);

  eo.out_dir = (dir / "e2").string();
  std::ostringstream csv2;
  ASSERT_EQ(cmd_eval(eo, csv2, err), 0);
  EXPECT_EQ(csv1.str(), csv2.str());
  EXPECT_EQ(slurp(dir / "e1" / "metrics.csv"), slurp(dir / "e2" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "e1" / "manifest.json"), slurp(dir / "e2" / "manifest.json"));

  eo.config = cfg.string();
  eo.split = "test";
  eo.out_dir = (dir / "e3").string();
  std::ostringstream csv3;
  ASSERT_EQ(cmd_eval(eo, csv3, err), 0);
  std::istringstream back3(csv3.str());
  EXPECT_LT(parse_report_csv(back3)[0].n_users, 150u);
}

TEST(Commands, EvalOracleScorerReachesFullRecall) {
  TempDir dir;
  prepare_run(dir, 0);
  EvalOptions eo;
  eo.dataset = (dir / "data" / "dataset.cache").string();
  eo.scorer = "oracle";
  eo.ks = std::vector<std::size_t>{24};
  eo.out_dir = (dir / "e").string();
  std::ostringstream csv, err;
  ASSERT_EQ(cmd_eval(eo, csv, err), 0);
  std::istringstream back(csv.str());
  for (const auto& r : parse_report_csv(back)) {
    EXPECT_EQ(r.recall_at(24), 1.0);
    EXPECT_EQ(r.ndcg_at(24), 1.0);
  }
}

TEST(Commands, EvalDimensionMismatchAndFingerprintWarning) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 0);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train({cfg.string(), {}}, out), 0);

  // Same widths, different user ids: warning only.
  auto ds = load_dataset_cache((dir / "data" / "dataset.cache").string());
  ds.users[0] = "zzz_renamed";
  save_dataset_cache((dir / "renamed.cache").string(), ds);
  EvalOptions eo;
  eo.checkpoint = (dir / "run" / "checkpoint.bin").string();
  eo.dataset = (dir / "renamed.cache").string();
  eo.out_dir = (dir / "e").string();
  ASSERT_EQ(cmd_eval(eo, out, err), 0);
  EXPECT_NE(err.str().find("fingerprint"), std::string::npos);

  ClickSet a{{"u1", "x"}}, b{{"u1", "y"}};
  save_dataset_cache((dir / "tiny.cache").string(), build_dual_domain(a, b));
  eo.dataset = (dir / "tiny.cache").string();
  EXPECT_THROW(cmd_eval(eo, out, err), CommandError);
}

TEST(Commands, AblateVariantsAndLosses) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 1);
  AblateOptions ao;
  ao.config = cfg.string();
  ao.overrides.ks = std::vector<std::size_t>{10};
  std::ostringstream t1;
  ASSERT_EQ(cmd_ablate(ao, t1), 0);
  EXPECT_EQ(count_lines(t1.str()), 1u + 4 * 2 * 1);
  std::ostringstream t2;
  ASSERT_EQ(cmd_ablate(ao, t2), 0);
  EXPECT_EQ(t1.str(), t2.str());

  ao.mode = "losses";
  std::ostringstream t3;
  ASSERT_EQ(cmd_ablate(ao, t3), 0);
  for (const char* k : {"multinomial,", "logistic,", "square,", "l1,"}) {
    EXPECT_NE(t3.str().find(std::string("\n") + k), std::string::npos) << k;
  }
  ao.mode = "both";
  std::ostringstream t4;
  ASSERT_EQ(cmd_ablate(ao, t4), 0);
  EXPECT_EQ(count_lines(t4.str()), 1u + 8 * 2);
}

TEST(Commands, PredictRanksAndDumpsFullDistribution) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 2);
  std::ostringstream out;
  ASSERT_EQ(cmd_train({cfg.string(), {}}, out), 0);
  const auto ck_path = (dir / "run" / "checkpoint.bin").string();
  const auto ck = load_checkpoint(ck_path);

  PredictOptions po;
  po.checkpoint = ck_path;
  po.items = {ck.items_a[0], ck.items_a[3]};
  po.top = 5;
  std::ostringstream top;
  ASSERT_EQ(cmd_predict(po, top), 0);
  EXPECT_EQ(count_lines(top.str()), 5u);
  double prev = 2.0;
  std::istringstream lines(top.str());
  std::string line;
  while (std::getline(lines, line)) {
    const double s = std::stod(line.substr(line.find(',') + 1));
    EXPECT_LE(s, prev);
    prev = s;
  }

  po.full = true;
  po.direction = Direction::b2a;
  po.items = {ck.items_b[1]};
  std::ostringstream full;
  ASSERT_EQ(cmd_predict(po, full), 0);
  EXPECT_EQ(count_lines(full.str()), ck.items_a.size());
  double sum = 0.0;
  std::istringstream fl(full.str());
  while (std::getline(fl, line)) sum += std::stod(line.substr(line.find(',') + 1));
  EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(Commands, PredictErrors) {
  TempDir dir;
  const auto cfg = prepare_run(dir, 0);
  std::ostringstream out;
  ASSERT_EQ(cmd_train({cfg.string(), {}}, out), 0);
  PredictOptions po;
  po.checkpoint = (dir / "run" / "checkpoint.bin").string();
  try {
    cmd_predict(po, out);
    FAIL();
  } catch (const CommandError& e) {
    EXPECT_STREQ(e.what(), "empty source history");
  }
  po.items = {"nope1", "a0000", "nope2"};
  try {
    cmd_predict(po, out);
    FAIL();
  } catch (const CommandError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("nope1"), std::string::npos);
    EXPECT_NE(msg.find("nope2"), std::string::npos);
    EXPECT_EQ(msg.find("a0000"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Executable

TEST(Executable, MissingFileGivesNonzeroExitNamingPath) {
  TempDir dir;
  const auto log = dir / "log.txt";
  const int code = run_cli("ingest --ratings-a " + (dir / "absent_a.dat").string() + " --ratings-b " +
                               (dir / "absent_b.dat").string() + " --out " + (dir / "o").string(),
                           log);
  EXPECT_NE(code, 0);
  EXPECT_NE(slurp(log).find("absent_a.dat"), std::string::npos) << slurp(log);
}

TEST(Executable, BadConfigListsAllKeys) {
  TempDir dir;
  spit(dir / "bad.ini", "[data]\ncache = c\nxx = 1\n[training]\nyy = 2\n");
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.ini").string(), log), 1);
  const std::string text = slurp(log);
  EXPECT_NE(text.find("data.xx"), std::string::npos) << text;
  EXPECT_NE(text.find("training.yy"), std::string::npos) << text;
}

TEST(Executable, EndToEndPipeline) {
  TempDir dir;
  const auto log = dir / "log.txt";
  const std::string d = dir.path().string();
  ASSERT_EQ(run_cli("synth --users 120 --seed 2 --out " + d + "/raw", log), 0) << slurp(log);
  ASSERT_EQ(run_cli("ingest --ratings-a " + d + "/raw/ratings_a.dat --ratings-b " + d +
                        "/raw/ratings_b.dat --name synthetic --out " + d + "/data",
                    log),
            0)
      << slurp(log);
  EXPECT_NE(slurp(log).find("synthetic"), std::string::npos);
  spit(dir / "run.ini", "[data]\ncache = " + d +
                            "/data/dataset.cache\n[model]\nencoder_layer_sizes = 8\nlatent_dim = 3\n"
                            "generator_layer_sizes = 8\nn_shared_encoder_layers = 1\n"
                            "discriminator_layer_sizes = 4\n[training]\nepochs = 2\n");
  ASSERT_EQ(run_cli("train --config " + d + "/run.ini --seed 7 --variant vae_gan --loss square --out " + d + "/run",
                    log),
            0)
      << slurp(log);
  ASSERT_EQ(run_cli("eval --checkpoint " + d + "/run/checkpoint.bin --dataset " + d +
                        "/data/dataset.cache --k 10,50 --out " + d + "/eval",
                    log),
            0)
      << slurp(log);
  EXPECT_EQ(count_lines(slurp(dir / "eval" / "metrics.csv")), 5u);
  ASSERT_EQ(run_cli("predict --checkpoint " + d + "/run/checkpoint.bin --direction b2a --items b0001,b0002 --top 3",
                    log),
            0)
      << slurp(log);
  EXPECT_EQ(count_lines(slurp(log)), 3u);
  EXPECT_EQ(run_cli("predict --checkpoint " + d + "/run/checkpoint.bin --items ''", log), 1);
  EXPECT_NE(slurp(log).find("empty source history"), std::string::npos);
  EXPECT_NE(run_cli("predict --checkpoint " + d + "/run/checkpoint.bin --direction sideways --items a0001", log), 0);
  EXPECT_NE(run_cli("bogus-verb", log), 0);
}
