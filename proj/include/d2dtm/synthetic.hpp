#ifndef D2DTM_SYNTHETIC_HPP
#define D2DTM_SYNTHETIC_HPP

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "d2dtm/data.hpp"
#include "d2dtm/model.hpp"
#include "d2dtm/rng.hpp"
#include "d2dtm/training.hpp"

namespace d2dtm {

/// Users belong to one of `n_clusters` latent groups; each domain's catalog
/// is cut into contiguous per-cluster blocks, and a user clicks an item of
/// their own block with probability p_in and any other item with p_out.
struct SyntheticSpec {
  std::size_t n_users = 500;
  std::size_t n_clusters = 4;
  std::size_t n_items_a = 50;
  std::size_t n_items_b = 50;
  double p_in = 0.35;
  double p_out = 0.02;
  /// Relative cluster sizes; unequal sizes make the cross-domain cluster
  /// correspondence identifiable from each domain's marginal distribution.
  std::vector<double> cluster_weights = {0.5, 0.25, 0.15, 0.1};
  std::uint64_t seed = 0;
};

struct SyntheticClicks {
  ClickSet a;
  ClickSet b;
  std::vector<std::size_t> user_cluster;  // by user number
};

inline std::string synthetic_user_id(std::size_t u) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%05zu", u);
  return buf;
}

inline std::string synthetic_item_id(char domain, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04zu", domain, i);
  return buf;
}

inline std::size_t synthetic_item_cluster(std::size_t item, std::size_t n_items, std::size_t n_clusters) {
  return item * n_clusters / n_items;
}

inline SyntheticClicks make_synthetic_clicks(const SyntheticSpec& spec) {
  SeededRng rng(spec.seed);
  SyntheticClicks out;
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    std::size_t c = spec.n_clusters - 1;
    if (spec.cluster_weights.size() == spec.n_clusters) {
      double total = 0.0;
      for (double w : spec.cluster_weights) total += w;
      double draw = rng.uniform() * total;
      for (std::size_t k = 0; k < spec.n_clusters; ++k) {
        if (draw < spec.cluster_weights[k]) {
          c = k;
          break;
        }
        draw -= spec.cluster_weights[k];
      }
    } else {
      c = static_cast<std::size_t>(rng.below(spec.n_clusters));
    }
    out.user_cluster.push_back(c);
    const std::string uid = synthetic_user_id(u);
    auto fill = [&](ClickSet& clicks, char dom, std::size_t n_items) {
      std::vector<std::size_t> own;
      bool any_own = false;
      for (std::size_t i = 0; i < n_items; ++i) {
        const bool in = synthetic_item_cluster(i, n_items, spec.n_clusters) == c;
        if (in) own.push_back(i);
        if (rng.bernoulli(in ? spec.p_in : spec.p_out)) {
          clicks.emplace(uid, synthetic_item_id(dom, i));
          any_own = any_own || in;
        }
      }
      if (!any_own && !own.empty()) {
        clicks.emplace(uid, synthetic_item_id(dom, own[rng.below(own.size())]));
      }
    };
    fill(out.a, 'a', spec.n_items_a);
    fill(out.b, 'b', spec.n_items_b);
  }
  return out;
}

inline DualDomainDataset make_synthetic_dataset(const SyntheticSpec& spec) {
  const auto clicks = make_synthetic_clicks(spec);
  return build_dual_domain(clicks.a, clicks.b);
}

// Settings for the default fixture: a small network with a strong KL pull
// toward the shared prior and a heavier adversarial weight, so that both
// domains' clusters land in one latent region and get matched by frequency.

inline ArchSpec synthetic_fixture_arch(std::size_t ia, std::size_t ib) {
  return {ia, ib, {40, 20}, 8, {20, 40}, 2, 1, {20}};
}

inline HyperParams synthetic_fixture_hyper() {
  HyperParams h;
  h.lambda0 = 100.0;
  h.lambda1 = 30.0;
  h.lambda3 = 30.0;
  return h;
}

inline TrainConfig synthetic_fixture_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = seed;
  cfg.early_stop_patience = 0;
  cfg.eval_k_for_selection = 10;  // Recall@50 saturates with 50 items
  return cfg;
}

/// Writes clicks as "user::item::1" rating lines.
inline void write_click_ratings(std::ostream& out, const ClickSet& clicks) {
  for (const auto& [u, i] : clicks) out << u << "::" << i << "::1\n";
}

}  // namespace d2dtm

#endif  // D2DTM_SYNTHETIC_HPP
