#ifndef D2DTM_TRAINING_HPP
#define D2DTM_TRAINING_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "d2dtm/data.hpp"
#include "d2dtm/evaluation.hpp"
#include "d2dtm/model.hpp"
#include "d2dtm/optim.hpp"
#include "d2dtm/rng.hpp"

namespace d2dtm {

/// Component ablations: which loss families stay active besides the VAEs.
enum class Variant { full, vae_cc, vae_gan, vae };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::full, Variant::vae_cc, Variant::vae_gan,
                                                        Variant::vae};

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::vae_cc: return "vae_cc";
    case Variant::vae_gan: return "vae_gan";
    case Variant::vae: return "vae";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants) {
    if (s == variant_name(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

/// vae_cc drops the GAN terms, vae_gan drops the cycle terms, vae drops both.
inline HyperParams apply_variant(HyperParams h, Variant v) {
  if (v == Variant::vae_cc || v == Variant::vae) h.lambda0 = 0.0;
  if (v == Variant::vae_gan || v == Variant::vae) h.lambda3 = h.lambda4 = 0.0;
  return h;
}

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr_encgen = 1e-3;
  double lr_disc = 1e-3;
  std::size_t disc_steps_per_gen_step = 1;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
  std::size_t early_stop_patience = 20;  // 0 disables early stopping
  std::size_t eval_k_for_selection = 50;
  std::vector<std::size_t> eval_ks = kDefaultKs;
  bool tie_weights = true;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr_encgen > 0.0) || !(lr_disc > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must be in [0,1)");
    if (eval_k_for_selection < 1) throw std::invalid_argument("eval_k_for_selection must be >= 1");
    for (auto k : eval_ks) {
      if (k < 1) throw std::invalid_argument("eval_ks entries must be >= 1");
    }
  }

  /// eval_ks with the selection K added when missing, sorted.
  std::vector<std::size_t> resolved_eval_ks() const {
    auto ks = eval_ks;
    if (std::find(ks.begin(), ks.end(), eval_k_for_selection) == ks.end()) ks.push_back(eval_k_for_selection);
    std::sort(ks.begin(), ks.end());
    return ks;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train_loss;  // mean over minibatches, measured before each update
  RankingReport valid_a2b;
  RankingReport valid_b2a;
  double selection_metric = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;
  double best_metric = 0.0;
  double wall_time_seconds = 0.0;
};

struct TrainResult {
  D2DParams params;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.vae_a += b.vae_a;
  acc.vae_b += b.vae_b;
  acc.gan_a += b.gan_a;
  acc.gan_b += b.gan_b;
  acc.cc_a += b.cc_a;
  acc.cc_b += b.cc_b;
  acc.disc_a += b.disc_a;
  acc.disc_b += b.disc_b;
  acc.total_encgen += b.total_encgen;
  acc.total_disc += b.total_disc;
}

inline LossBreakdown scaled(LossBreakdown b, double s) {
  for (double* v : {&b.vae_a, &b.vae_b, &b.gan_a, &b.gan_b, &b.cc_a, &b.cc_b, &b.disc_a, &b.disc_b,
                    &b.total_encgen, &b.total_disc}) {
    *v *= s;
  }
  return b;
}

inline void check_dims(const DualDomainDataset& ds, const ArchSpec& arch, const char* which) {
  if (ds.domain_a.n_items() != arch.input_dim_a || ds.domain_b.n_items() != arch.input_dim_b) {
    throw ShapeError(std::string(which) + " dataset has " + std::to_string(ds.domain_a.n_items()) + "/" +
                     std::to_string(ds.domain_b.n_items()) + " items but the architecture expects " +
                     std::to_string(arch.input_dim_a) + "/" + std::to_string(arch.input_dim_b));
  }
}

}  // namespace detail

/// Alternating min-max training. Each minibatch runs
/// `disc_steps_per_gen_step` discriminator updates followed by one
/// encoder/generator update; after each epoch both translation directions
/// are scored on `valid` and the best snapshot by mean Recall@K is kept.
inline TrainResult train(const DualDomainDataset& train_ds, const DualDomainDataset& valid_ds, ArchSpec arch,
                         HyperParams hyper, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  if (!cfg.tie_weights) {
    arch.n_shared_encoder_layers = 0;
    arch.n_shared_generator_layers = 0;
  }
  arch.validate();
  hyper.dropout_rate = cfg.dropout_rate;
  hyper = apply_variant(hyper, cfg.variant);
  hyper.validate();
  detail::check_dims(train_ds, arch, "training");
  if (valid_ds.n_users() > 0) detail::check_dims(valid_ds, arch, "validation");

  const SeededRng root(cfg.seed);
  TrainResult result{D2DParams::initialize(arch, root.fork(1).next_u64()), {}};
  D2DParams& params = result.params;
  D2DParams best = params;
  double best_metric = -1.0;
  std::size_t since_best = 0;
  SeededRng shuffle_rng = root.fork(2);
  SeededRng step_rng = root.fork(3);
  const auto ks = cfg.resolved_eval_ks();
  const bool train_disc = hyper.lambda0 > 0.0;

  std::vector<std::size_t> order(train_ds.n_users());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto encgen = params.encgen_blocks();
  auto discs = params.disc_blocks();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    LossBreakdown sum;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> users(order.data() + start, end - start);
      const Matrix xa = train_ds.domain_a.dense(users);
      const Matrix xb = train_ds.domain_b.dense(users);
      const std::uint64_t step_seed = step_rng.next_u64();
      const auto where = [&] {
        return " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(n_batches + 1) + ")";
      };

      if (train_disc) {
        for (std::size_t k = 0; k < cfg.disc_steps_per_gen_step; ++k) {
          params.zero_grad();
          const auto d = disc_objective(xa, xb, params, hyper, mix_seed(step_seed, 100 + k), true);
          if (!std::isfinite(d.disc)) throw NonFiniteError("non-finite discriminator loss" + where());
          try {
            optimizer_step(discs, cfg.lr_disc);
          } catch (const NonFiniteError& e) {
            throw NonFiniteError(e.what() + where());
          }
        }
      }

      params.zero_grad();
      const auto lb = total_objective(xa, xb, params, hyper, step_seed, GradTarget::encgen);
      if (!std::isfinite(lb.total_encgen) || !std::isfinite(lb.total_disc)) {
        throw NonFiniteError("non-finite encoder/generator loss" + where());
      }
      try {
        optimizer_step(encgen, cfg.lr_encgen);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(e.what() + where());
      }
      detail::accumulate(sum, lb);
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = n_batches ? detail::scaled(sum, 1.0 / static_cast<double>(n_batches)) : sum;
    if (valid_ds.n_users() > 0) {
      rec.valid_a2b = evaluate_direction(params, valid_ds, Direction::a2b, ks, hyper.recon);
      rec.valid_b2a = evaluate_direction(params, valid_ds, Direction::b2a, ks, hyper.recon);
      rec.selection_metric = 0.5 * (rec.valid_a2b.recall_at(cfg.eval_k_for_selection) +
                                    rec.valid_b2a.recall_at(cfg.eval_k_for_selection));
    }
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    // Without validation users every epoch counts as an improvement, so the
    // final parameters are returned.
    if (valid_ds.n_users() == 0 || rec.selection_metric > best_metric) {
      best_metric = rec.selection_metric;
      best = params;
      result.report.best_epoch = epoch;
      result.report.best_metric = rec.selection_metric;
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }

  if (result.report.best_epoch) params = std::move(best);
  for (auto* b : params.all_blocks()) b->zero_grad();
  result.report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

struct AblationEntry {
  std::string label;  // variant or reconstruction-loss name
  RankingReport a2b;
  RankingReport b2a;
};

/// Trains the four component variants with the same seed and architecture
/// and scores each on `test`.
inline std::vector<AblationEntry> run_ablation(const DualDomainDataset& train_ds, const DualDomainDataset& valid_ds,
                                               const DualDomainDataset& test_ds, const ArchSpec& arch,
                                               const HyperParams& hyper, const TrainConfig& cfg) {
  std::vector<AblationEntry> out;
  for (Variant v : kAllVariants) {
    TrainConfig c = cfg;
    c.variant = v;
    const auto res = train(train_ds, valid_ds, arch, hyper, c);
    const auto ks = c.resolved_eval_ks();
    out.push_back({variant_name(v), evaluate_direction(res.params, test_ds, Direction::a2b, ks, hyper.recon),
                   evaluate_direction(res.params, test_ds, Direction::b2a, ks, hyper.recon)});
  }
  return out;
}

/// Same protocol over the four reconstruction losses (variant taken from `cfg`).
inline std::vector<AblationEntry> run_loss_ablation(const DualDomainDataset& train_ds,
                                                    const DualDomainDataset& valid_ds,
                                                    const DualDomainDataset& test_ds, const ArchSpec& arch,
                                                    const HyperParams& hyper, const TrainConfig& cfg) {
  std::vector<AblationEntry> out;
  for (ReconLoss kind : kAllReconLosses) {
    HyperParams h = hyper;
    h.recon = kind;
    const auto res = train(train_ds, valid_ds, arch, h, cfg);
    const auto ks = cfg.resolved_eval_ks();
    out.push_back({recon_loss_name(kind), evaluate_direction(res.params, test_ds, Direction::a2b, ks, kind),
                   evaluate_direction(res.params, test_ds, Direction::b2a, ks, kind)});
  }
  return out;
}

/// One row per (label, direction, K): label,direction,K,recall,ndcg,n_users.
inline void write_ablation_csv(std::ostream& out, std::span<const AblationEntry> entries, bool header = true) {
  if (header) out << "label,direction,K,recall,ndcg,n_users\n";
  char buf[160];
  for (const auto& e : entries) {
    for (const RankingReport* r : {&e.a2b, &e.b2a}) {
      for (std::size_t i = 0; i < r->k_values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.6f,%.6f,%zu\n", e.label.c_str(),
                      direction_name(r->direction).c_str(), r->k_values[i], r->recall[i], r->ndcg[i], r->n_users);
        out << buf;
      }
    }
  }
}

}  // namespace d2dtm

#endif  // D2DTM_TRAINING_HPP
