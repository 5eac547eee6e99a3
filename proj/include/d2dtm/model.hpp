#ifndef D2DTM_MODEL_HPP
#define D2DTM_MODEL_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "d2dtm/domain.hpp"
#include "d2dtm/layers.hpp"
#include "d2dtm/matrix.hpp"
#include "d2dtm/rng.hpp"

namespace d2dtm {

/// Lower clamp for probabilities inside logarithms.
inline constexpr double kProbFloor = 1e-10;

inline double floored(double p) { return p > kProbFloor ? p : kProbFloor; }
inline double floored_slope(double p) { return p > kProbFloor ? 1.0 / p : 0.0; }

enum class ReconLoss { multinomial, logistic, square, l1 };

inline std::string recon_loss_name(ReconLoss k) {
  switch (k) {
    case ReconLoss::multinomial: return "multinomial";
    case ReconLoss::logistic: return "logistic";
    case ReconLoss::square: return "square";
    case ReconLoss::l1: return "l1";
  }
  return "?";
}

inline ReconLoss parse_recon_loss(std::string_view s) {
  if (s == "multinomial") return ReconLoss::multinomial;
  if (s == "logistic" || s == "log") return ReconLoss::logistic;
  if (s == "square") return ReconLoss::square;
  if (s == "l1") return ReconLoss::l1;
  throw std::invalid_argument("unknown reconstruction loss '" + std::string(s) + "'");
}

inline constexpr std::array<ReconLoss, 4> kAllReconLosses = {
    ReconLoss::multinomial, ReconLoss::logistic, ReconLoss::square, ReconLoss::l1};

/// Network layout. Encoder: input -> encoder_layer_sizes... -> latent_dim,
/// where the last `n_shared_encoder_layers` affine layers are tied across
/// domains. Generator: latent_dim -> generator_layer_sizes... -> input, where
/// the first `n_shared_generator_layers` affine layers are tied.
struct ArchSpec {
  std::size_t input_dim_a = 0;
  std::size_t input_dim_b = 0;
  std::vector<std::size_t> encoder_layer_sizes;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> generator_layer_sizes;
  std::size_t n_shared_encoder_layers = 0;
  std::size_t n_shared_generator_layers = 0;
  std::vector<std::size_t> discriminator_layer_sizes;

  std::size_t input_dim(Domain d) const { return d == Domain::a ? input_dim_a : input_dim_b; }
  std::size_t n_encoder_layers() const { return encoder_layer_sizes.size() + 1; }
  std::size_t n_generator_layers() const { return generator_layer_sizes.size() + 1; }

  void validate() const {
    if (input_dim_a == 0 || input_dim_b == 0) throw std::invalid_argument("input dims must be positive");
    if (latent_dim == 0) throw std::invalid_argument("latent_dim must be positive");
    for (auto w : encoder_layer_sizes) if (w == 0) throw std::invalid_argument("zero encoder width");
    for (auto w : generator_layer_sizes) if (w == 0) throw std::invalid_argument("zero generator width");
    for (auto w : discriminator_layer_sizes) if (w == 0) throw std::invalid_argument("zero discriminator width");
    // The input layer of the encoder and output layer of the generator have
    // domain-specific widths, so at least one layer on each side is private.
    if (n_shared_encoder_layers >= n_encoder_layers()) {
      throw std::invalid_argument("n_shared_encoder_layers must be < " + std::to_string(n_encoder_layers()));
    }
    if (n_shared_generator_layers >= n_generator_layers()) {
      throw std::invalid_argument("n_shared_generator_layers must be < " +
                                  std::to_string(n_generator_layers()));
    }
  }

  /// [I-200-100-50-100-200-I] with the 100-wide encoder tail and generator head tied.
  static ArchSpec dense_default(std::size_t ia, std::size_t ib) {
    return {ia, ib, {200, 100}, 50, {100, 200}, 2, 1, {100}};
  }
  /// [I-600-200-50-200-600-I] for large sparse catalogs.
  static ArchSpec sparse_default(std::size_t ia, std::size_t ib) {
    return {ia, ib, {600, 200}, 50, {200, 600}, 2, 1, {200}};
  }

  bool operator==(const ArchSpec&) const = default;
};

struct HyperParams {
  double lambda0 = 10.0;   // GAN
  double lambda1 = 0.1;    // VAE KL
  double lambda2 = 100.0;  // VAE reconstruction
  double lambda3 = 0.1;    // cycle KL
  double lambda4 = 100.0;  // cycle reconstruction
  ReconLoss recon = ReconLoss::multinomial;
  double dropout_rate = 0.0;  // input dropout on real click vectors while training

  void validate() const {
    for (double l : {lambda0, lambda1, lambda2, lambda3, lambda4}) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("loss weights must be finite and >= 0");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must be in [0,1)");
  }

  bool operator==(const HyperParams&) const = default;
};

/// All learnable blocks. The shared encoder tail and generator head are
/// stored once and referenced by both domains' passes.
struct D2DParams {
  ArchSpec arch;
  std::array<std::vector<ParamBlock>, 2> enc_private;
  std::vector<ParamBlock> enc_shared;
  std::vector<ParamBlock> gen_shared;
  std::array<std::vector<ParamBlock>, 2> gen_private;
  std::array<std::vector<ParamBlock>, 2> disc;

  /// Allocates every block with Glorot-uniform weights drawn from `seed`.
  static D2DParams initialize(const ArchSpec& arch, std::uint64_t seed) {
    arch.validate();
    D2DParams p;
    p.arch = arch;
    for (Domain d : {Domain::a, Domain::b}) {
      const auto di = index_of(d);
      const std::string dn = domain_name(d);
      std::vector<std::size_t> enc_dims{arch.input_dim(d)};
      enc_dims.insert(enc_dims.end(), arch.encoder_layer_sizes.begin(), arch.encoder_layer_sizes.end());
      enc_dims.push_back(arch.latent_dim);
      const std::size_t n_enc_private = arch.n_encoder_layers() - arch.n_shared_encoder_layers;
      for (std::size_t l = 0; l < n_enc_private; ++l) {
        p.enc_private[di].emplace_back("enc_" + dn + "." + std::to_string(l), enc_dims[l + 1], enc_dims[l]);
      }
      if (d == Domain::a) {
        for (std::size_t l = n_enc_private; l < arch.n_encoder_layers(); ++l) {
          p.enc_shared.emplace_back("enc_shared." + std::to_string(l - n_enc_private), enc_dims[l + 1],
                                    enc_dims[l]);
        }
      }

      std::vector<std::size_t> gen_dims{arch.latent_dim};
      gen_dims.insert(gen_dims.end(), arch.generator_layer_sizes.begin(), arch.generator_layer_sizes.end());
      gen_dims.push_back(arch.input_dim(d));
      if (d == Domain::a) {
        for (std::size_t l = 0; l < arch.n_shared_generator_layers; ++l) {
          p.gen_shared.emplace_back("gen_shared." + std::to_string(l), gen_dims[l + 1], gen_dims[l]);
        }
      }
      for (std::size_t l = arch.n_shared_generator_layers; l < arch.n_generator_layers(); ++l) {
        p.gen_private[di].emplace_back("gen_" + dn + "." + std::to_string(l - arch.n_shared_generator_layers),
                                       gen_dims[l + 1], gen_dims[l]);
      }

      std::vector<std::size_t> disc_dims{arch.input_dim(d)};
      disc_dims.insert(disc_dims.end(), arch.discriminator_layer_sizes.begin(),
                       arch.discriminator_layer_sizes.end());
      disc_dims.push_back(1);
      for (std::size_t l = 0; l + 1 < disc_dims.size(); ++l) {
        p.disc[di].emplace_back("disc_" + dn + "." + std::to_string(l), disc_dims[l + 1], disc_dims[l]);
      }
    }
    SeededRng rng(seed);
    for (ParamBlock* b : p.all_blocks()) b->glorot_init(rng);
    return p;
  }

  std::vector<const ParamBlock*> encoder(Domain d) const {
    std::vector<const ParamBlock*> out;
    for (const auto& b : enc_private[index_of(d)]) out.push_back(&b);
    for (const auto& b : enc_shared) out.push_back(&b);
    return out;
  }
  std::vector<ParamBlock*> encoder(Domain d) {
    std::vector<ParamBlock*> out;
    for (auto& b : enc_private[index_of(d)]) out.push_back(&b);
    for (auto& b : enc_shared) out.push_back(&b);
    return out;
  }
  std::vector<const ParamBlock*> generator(Domain d) const {
    std::vector<const ParamBlock*> out;
    for (const auto& b : gen_shared) out.push_back(&b);
    for (const auto& b : gen_private[index_of(d)]) out.push_back(&b);
    return out;
  }
  std::vector<ParamBlock*> generator(Domain d) {
    std::vector<ParamBlock*> out;
    for (auto& b : gen_shared) out.push_back(&b);
    for (auto& b : gen_private[index_of(d)]) out.push_back(&b);
    return out;
  }
  std::vector<const ParamBlock*> discriminator(Domain d) const {
    std::vector<const ParamBlock*> out;
    for (const auto& b : disc[index_of(d)]) out.push_back(&b);
    return out;
  }
  std::vector<ParamBlock*> discriminator(Domain d) {
    std::vector<ParamBlock*> out;
    for (auto& b : disc[index_of(d)]) out.push_back(&b);
    return out;
  }

  /// Encoder and generator blocks, each exactly once.
  std::vector<ParamBlock*> encgen_blocks() {
    std::vector<ParamBlock*> out;
    for (auto& b : enc_private[0]) out.push_back(&b);
    for (auto& b : enc_private[1]) out.push_back(&b);
    for (auto& b : enc_shared) out.push_back(&b);
    for (auto& b : gen_shared) out.push_back(&b);
    for (auto& b : gen_private[0]) out.push_back(&b);
    for (auto& b : gen_private[1]) out.push_back(&b);
    return out;
  }
  std::vector<ParamBlock*> disc_blocks() {
    std::vector<ParamBlock*> out;
    for (auto& b : disc[0]) out.push_back(&b);
    for (auto& b : disc[1]) out.push_back(&b);
    return out;
  }
  /// Every block in checkpoint order.
  std::vector<ParamBlock*> all_blocks() {
    auto out = encgen_blocks();
    for (auto* b : disc_blocks()) out.push_back(b);
    return out;
  }
  std::vector<const ParamBlock*> all_blocks() const {
    std::vector<const ParamBlock*> out;
    for (auto* b : const_cast<D2DParams*>(this)->all_blocks()) out.push_back(b);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* b : all_blocks()) n += b->parameter_count();
    return n;
  }

  void zero_grad() {
    for (auto* b : all_blocks()) b->zero_grad();
  }
};

/// Copy of `p` in which every shared block is duplicated into both domains'
/// private stacks. Forward passes are unchanged; the copies train independently.
inline D2DParams untie_shared(const D2DParams& p) {
  D2DParams out = p;
  out.arch.n_shared_encoder_layers = 0;
  out.arch.n_shared_generator_layers = 0;
  out.enc_shared.clear();
  out.gen_shared.clear();
  for (Domain d : {Domain::a, Domain::b}) {
    const auto di = index_of(d);
    const std::string dn = domain_name(d);
    for (const auto& b : p.enc_shared) {
      out.enc_private[di].push_back(b);
      out.enc_private[di].back().name = "enc_" + dn + "." + std::to_string(out.enc_private[di].size() - 1);
    }
    std::vector<ParamBlock> gen;
    for (const auto& b : p.gen_shared) gen.push_back(b);
    for (const auto& b : p.gen_private[di]) gen.push_back(b);
    for (std::size_t l = 0; l < gen.size(); ++l) gen[l].name = "gen_" + dn + "." + std::to_string(l);
    out.gen_private[di] = std::move(gen);
  }
  return out;
}

struct EncodeResult {
  Matrix mu;
  Matrix z;
};

struct LossBreakdown {
  double vae_a = 0.0, vae_b = 0.0;
  double gan_a = 0.0, gan_b = 0.0;  // generator side, translation streams B->A and A->B
  double cc_a = 0.0, cc_b = 0.0;
  double disc_a = 0.0, disc_b = 0.0;
  double total_encgen = 0.0;
  double total_disc = 0.0;
};

/// Which side of the min-max problem receives gradients.
enum class GradTarget { none, encgen, disc };

/// Identifies a loss term; each term draws its noise from its own stream.
enum class Term : std::uint64_t { vae_a = 1, vae_b, gan_a, gan_b, cc_a, cc_b };

inline SeededRng term_rng(std::uint64_t step_seed, Term t) {
  return SeededRng(mix_seed(step_seed, static_cast<std::uint64_t>(t)));
}

// ---------------------------------------------------------------------------
// Elementary pieces

inline double kl_unit_gaussian(const Matrix& mu) {
  if (mu.rows() == 0) return 0.0;
  return 0.5 * squared_norm(mu) / static_cast<double>(mu.rows());
}

/// Generator output head: softmax for the multinomial loss, tanh otherwise.
inline Matrix generator_head(ReconLoss kind, const Matrix& logits) {
  return kind == ReconLoss::multinomial ? softmax_rows(logits) : tanh_forward(logits);
}

/// Maps a gradient w.r.t. head outputs to a gradient w.r.t. the logits.
inline Matrix head_backward(ReconLoss kind, const Matrix& out, const Matrix& grad_out) {
  Matrix g(out.rows(), out.cols());
  if (kind == ReconLoss::multinomial) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto p = out.row(r);
      auto go = grad_out.row(r);
      double dot = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) dot += go[i] * p[i];
      auto gr = g.row(r);
      for (std::size_t i = 0; i < p.size(); ++i) gr[i] = p[i] * (go[i] - dot);
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double t = out.values()[i];
      g.values()[i] = grad_out.values()[i] * (1.0 - t * t);
    }
  }
  return g;
}

/// Reconstruction loss summed over items and averaged over rows. `out` is the
/// generator head output: softmax rows for multinomial, tanh values otherwise
/// (the logistic kind reads them as probabilities (1 + out) / 2).
inline double recon_loss(ReconLoss kind, const Matrix& x, const Matrix& out) {
  require_same_shape(x, out, "recon_loss");
  if (x.rows() == 0) return 0.0;
  double total = 0.0;
  const auto& xv = x.values();
  const auto& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    switch (kind) {
      case ReconLoss::multinomial:
        if (xv[i] != 0.0) total -= xv[i] * std::log(floored(ov[i]));
        break;
      case ReconLoss::logistic: {
        const double q = 0.5 * (1.0 + ov[i]);
        total -= xv[i] * std::log(floored(q)) + (1.0 - xv[i]) * std::log(floored(1.0 - q));
        break;
      }
      case ReconLoss::square: total += (ov[i] - xv[i]) * (ov[i] - xv[i]); break;
      case ReconLoss::l1: total += std::abs(ov[i] - xv[i]); break;
    }
  }
  return total / static_cast<double>(x.rows());
}

/// d recon_loss / d out.
inline Matrix recon_loss_grad(ReconLoss kind, const Matrix& x, const Matrix& out) {
  require_same_shape(x, out, "recon_loss_grad");
  Matrix g(x.rows(), x.cols());
  if (x.rows() == 0) return g;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  const auto& xv = x.values();
  const auto& ov = out.values();
  auto& gv = g.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    switch (kind) {
      case ReconLoss::multinomial: gv[i] = -xv[i] * floored_slope(ov[i]); break;
      case ReconLoss::logistic: {
        const double q = 0.5 * (1.0 + ov[i]);
        gv[i] = 0.5 * (-xv[i] * floored_slope(q) + (1.0 - xv[i]) * floored_slope(1.0 - q));
        break;
      }
      case ReconLoss::square: gv[i] = 2.0 * (ov[i] - xv[i]); break;
      case ReconLoss::l1: gv[i] = ov[i] > xv[i] ? 1.0 : (ov[i] < xv[i] ? -1.0 : 0.0); break;
    }
    gv[i] *= inv_n;
  }
  return g;
}

/// Rows divided by their sums (all-zero rows are left as zeros).
inline Matrix simplex_normalize(const Matrix& x) {
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double s = 0.0;
    for (double v : row) s += v;
    if (s != 0.0) {
      for (double& v : row) v /= s;
    }
  }
  return out;
}

/// Real samples shown to a discriminator, on the same scale as generator output.
inline Matrix discriminator_real_input(ReconLoss kind, const Matrix& x) {
  return kind == ReconLoss::multinomial ? simplex_normalize(x) : x;
}

// ---------------------------------------------------------------------------
// Forward / backward passes

namespace detail {

inline void check_width(const Matrix& x, std::size_t expected, const char* what) {
  if (x.cols() != expected) {
    throw ShapeError(std::string(what) + ": input " + x.shape() + " expected width " + std::to_string(expected));
  }
}

struct EncoderPass {
  StackTrace trace;
  Matrix mu;
  Matrix z;
};

inline EncoderPass encoder_forward(const D2DParams& p, Domain d, const Matrix& x, SeededRng& rng,
                                   bool training, double dropout_rate) {
  check_width(x, p.arch.input_dim(d), "encode");
  EncoderPass e;
  const Matrix in = input_dropout(x, dropout_rate, rng, training);
  const auto blocks = p.encoder(d);
  e.mu = stack_forward(blocks, in, Activation::leaky_relu, &e.trace);
  e.z = training ? gaussian_perturb(e.mu, rng) : e.mu;
  return e;
}

inline Matrix encoder_backward(D2DParams& p, Domain d, const EncoderPass& e, const Matrix& grad_mu,
                               bool need_input_grad) {
  const auto blocks = p.encoder(d);
  return stack_backward(blocks, e.trace, grad_mu, Activation::leaky_relu, true, need_input_grad);
}

struct GeneratorPass {
  StackTrace trace;
  Matrix out;
};

inline GeneratorPass generator_forward(const D2DParams& p, Domain d, const Matrix& z, ReconLoss kind) {
  check_width(z, p.arch.latent_dim, "generate");
  GeneratorPass g;
  const auto blocks = p.generator(d);
  g.out = generator_head(kind, stack_forward(blocks, z, Activation::leaky_relu, &g.trace));
  return g;
}

inline Matrix generator_backward(D2DParams& p, Domain d, const GeneratorPass& g, const Matrix& grad_out,
                                 ReconLoss kind) {
  const auto blocks = p.generator(d);
  return stack_backward(blocks, g.trace, head_backward(kind, g.out, grad_out), Activation::leaky_relu, true,
                        true);
}

struct DiscriminatorPass {
  StackTrace trace;
  Matrix logits;  // (n x 1)
};

inline DiscriminatorPass discriminator_forward(const D2DParams& p, Domain d, const Matrix& v) {
  check_width(v, p.arch.input_dim(d), "discriminate");
  DiscriminatorPass r;
  const auto blocks = p.discriminator(d);
  r.logits = stack_forward(blocks, v, Activation::tanh, &r.trace);
  return r;
}

inline Matrix discriminator_backward(D2DParams& p, Domain d, const DiscriminatorPass& r,
                                     const Matrix& grad_logits, bool accumulate, bool need_input_grad) {
  const auto blocks = p.discriminator(d);
  return stack_backward(blocks, r.trace, grad_logits, Activation::tanh, accumulate, need_input_grad);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations

/// mu from the encoder stack; z = mu + N(0, I) noise when training, z = mu otherwise.
inline EncodeResult encode(Domain d, const Matrix& x, const D2DParams& p, SeededRng& rng, bool training,
                           double dropout_rate = 0.0) {
  auto e = detail::encoder_forward(p, d, x, rng, training, dropout_rate);
  return {std::move(e.mu), std::move(e.z)};
}

inline Matrix generate(Domain d, const Matrix& z, const D2DParams& p, ReconLoss kind = ReconLoss::multinomial) {
  return detail::generator_forward(p, d, z, kind).out;
}

/// Encodes in domain `from` and generates in the other domain.
inline Matrix translate(Domain from, const Matrix& x, const D2DParams& p, SeededRng& rng, bool training,
                        ReconLoss kind = ReconLoss::multinomial) {
  const auto e = encode(from, x, p, rng, training);
  return generate(other(from), e.z, p, kind);
}

inline Matrix translate(Domain from, const Matrix& x, const D2DParams& p, ReconLoss kind = ReconLoss::multinomial) {
  SeededRng unused(0);
  return translate(from, x, p, unused, false, kind);
}

/// Probability that each row of `v` is a real click vector of domain `d`.
inline Matrix discriminate(Domain d, const Matrix& v, const D2DParams& p) {
  const auto r = detail::discriminator_forward(p, d, v);
  return map(r.logits, [](double l) { return sigmoid(l); });
}

/// Deterministic cross-domain scores used for ranking (z = mu, no dropout).
inline Matrix predict_cross(Domain from, const Matrix& x, const D2DParams& p,
                            ReconLoss kind = ReconLoss::multinomial) {
  return translate(from, x, p, kind);
}

/// λ1·KL(q(z|x) ‖ N(0, I)) + λ2·recon(x, G(z)), z sampled.
inline double vae_loss(Domain d, const Matrix& x, D2DParams& p, const HyperParams& h, SeededRng& rng,
                       GradTarget target = GradTarget::none) {
  if (h.lambda1 == 0.0 && h.lambda2 == 0.0) return 0.0;
  const auto e = detail::encoder_forward(p, d, x, rng, true, h.dropout_rate);
  const auto g = detail::generator_forward(p, d, e.z, h.recon);
  const double loss = h.lambda1 * kl_unit_gaussian(e.mu) + h.lambda2 * recon_loss(h.recon, x, g.out);
  if (target == GradTarget::encgen) {
    const Matrix grad_z = detail::generator_backward(p, d, g, h.lambda2 * recon_loss_grad(h.recon, x, g.out), h.recon);
    const double kl_scale = h.lambda1 / static_cast<double>(x.rows());
    detail::encoder_backward(p, d, e, grad_z + kl_scale * e.mu, false);
  }
  return loss;
}

struct GanLosses {
  double disc = 0.0;  // −λ0·mean[log D(real) + log(1 − D(fake))]
  double gen = 0.0;   // −λ0·mean log D(fake)
};

/// Adversarial losses for the translation stream `direction`: fake rows are
/// G_dst(z_src) and real rows are `x_real` (target-domain clicks) put on the
/// generator's output scale. The encoder/generator side uses the
/// non-saturating loss; the discriminator side is the exact min-max value.
inline GanLosses gan_losses(Direction direction, const Matrix& x_src, const Matrix& x_real, D2DParams& p,
                            const HyperParams& h, SeededRng& rng, GradTarget target = GradTarget::none) {
  const Domain src = source_of(direction);
  const Domain dst = target_of(direction);
  detail::check_width(x_real, p.arch.input_dim(dst), "gan_losses real");
  if (h.lambda0 == 0.0) return {};
  const auto e = detail::encoder_forward(p, src, x_src, rng, true, h.dropout_rate);
  const auto g = detail::generator_forward(p, dst, e.z, h.recon);
  const Matrix real = discriminator_real_input(h.recon, x_real);
  const auto d_fake = detail::discriminator_forward(p, dst, g.out);
  const auto d_real = detail::discriminator_forward(p, dst, real);

  const double n_fake = static_cast<double>(x_src.rows());
  const double n_real = static_cast<double>(x_real.rows());
  GanLosses out;
  double real_term = 0.0, fake_term = 0.0, gen_term = 0.0;
  for (double l : d_real.logits.values()) real_term += softplus(-l);   // −log D(real)
  for (double l : d_fake.logits.values()) {
    fake_term += softplus(l);    // −log(1 − D(fake))
    gen_term += softplus(-l);    // −log D(fake)
  }
  out.disc = h.lambda0 * (real_term / n_real + fake_term / n_fake);
  out.gen = h.lambda0 * gen_term / n_fake;

  if (target == GradTarget::disc) {
    const Matrix g_real = map(d_real.logits, [&](double l) { return h.lambda0 * (sigmoid(l) - 1.0) / n_real; });
    const Matrix g_fake = map(d_fake.logits, [&](double l) { return h.lambda0 * sigmoid(l) / n_fake; });
    detail::discriminator_backward(p, dst, d_real, g_real, true, false);
    detail::discriminator_backward(p, dst, d_fake, g_fake, true, false);
  } else if (target == GradTarget::encgen) {
    const Matrix g_logit = map(d_fake.logits, [&](double l) { return h.lambda0 * (sigmoid(l) - 1.0) / n_fake; });
    const Matrix g_fake = detail::discriminator_backward(p, dst, d_fake, g_logit, false, true);
    const Matrix g_z = detail::generator_backward(p, dst, g, g_fake, h.recon);
    detail::encoder_backward(p, src, e, g_z, false);
  }
  return out;
}

/// Cycle term for src -> dst -> src: λ3·KL(q_src(z|x)) + λ3·KL(q_dst(z'|x_t))
/// + λ4·recon(x, G_src(z')), where x_t = G_dst(z) is fed back as a continuous vector.
inline double cc_loss(Domain src, const Matrix& x, D2DParams& p, const HyperParams& h, SeededRng& rng,
                      GradTarget target = GradTarget::none) {
  if (h.lambda3 == 0.0 && h.lambda4 == 0.0) return 0.0;
  const Domain dst = other(src);
  const auto e1 = detail::encoder_forward(p, src, x, rng, true, h.dropout_rate);
  const auto g1 = detail::generator_forward(p, dst, e1.z, h.recon);
  const auto e2 = detail::encoder_forward(p, dst, g1.out, rng, true, 0.0);
  const auto g2 = detail::generator_forward(p, src, e2.z, h.recon);
  const double loss = h.lambda3 * (kl_unit_gaussian(e1.mu) + kl_unit_gaussian(e2.mu)) +
                      h.lambda4 * recon_loss(h.recon, x, g2.out);
  if (target == GradTarget::encgen) {
    const double kl_scale = h.lambda3 / static_cast<double>(x.rows());
    const Matrix g_z2 =
        detail::generator_backward(p, src, g2, h.lambda4 * recon_loss_grad(h.recon, x, g2.out), h.recon);
    const Matrix g_xt = detail::encoder_backward(p, dst, e2, g_z2 + kl_scale * e2.mu, true);
    const Matrix g_z1 = detail::generator_backward(p, dst, g1, g_xt, h.recon);
    detail::encoder_backward(p, src, e1, g_z1 + kl_scale * e1.mu, false);
  }
  return loss;
}

/// Every term of the joint objective for paired batches (row r of both
/// batches belongs to the same user). Term noise comes from term_rng(step_seed, ·).
inline LossBreakdown total_objective(const Matrix& batch_a, const Matrix& batch_b, D2DParams& p,
                                     const HyperParams& h, std::uint64_t step_seed,
                                     GradTarget target = GradTarget::none) {
  if (batch_a.rows() != batch_b.rows()) {
    throw ShapeError("total_objective: unpaired batches " + batch_a.shape() + " and " + batch_b.shape());
  }
  const GradTarget eg = target == GradTarget::encgen ? GradTarget::encgen : GradTarget::none;
  LossBreakdown lb;
  {
    auto rng = term_rng(step_seed, Term::vae_a);
    lb.vae_a = vae_loss(Domain::a, batch_a, p, h, rng, eg);
  }
  {
    auto rng = term_rng(step_seed, Term::vae_b);
    lb.vae_b = vae_loss(Domain::b, batch_b, p, h, rng, eg);
  }
  {
    auto rng = term_rng(step_seed, Term::gan_a);
    const auto g = gan_losses(Direction::b2a, batch_b, batch_a, p, h, rng, target);
    lb.gan_a = g.gen;
    lb.disc_a = g.disc;
  }
  {
    auto rng = term_rng(step_seed, Term::gan_b);
    const auto g = gan_losses(Direction::a2b, batch_a, batch_b, p, h, rng, target);
    lb.gan_b = g.gen;
    lb.disc_b = g.disc;
  }
  {
    auto rng = term_rng(step_seed, Term::cc_a);
    lb.cc_a = cc_loss(Domain::a, batch_a, p, h, rng, eg);
  }
  {
    auto rng = term_rng(step_seed, Term::cc_b);
    lb.cc_b = cc_loss(Domain::b, batch_b, p, h, rng, eg);
  }
  lb.total_encgen = lb.vae_a + lb.vae_b + lb.gan_a + lb.gan_b + lb.cc_a + lb.cc_b;
  lb.total_disc = lb.disc_a + lb.disc_b;
  return lb;
}

/// Discriminator-side losses only; with `accumulate` their gradients are
/// added to the discriminator blocks.
inline GanLosses disc_objective(const Matrix& batch_a, const Matrix& batch_b, D2DParams& p, const HyperParams& h,
                                std::uint64_t step_seed, bool accumulate) {
  const GradTarget t = accumulate ? GradTarget::disc : GradTarget::none;
  auto rng_a = term_rng(step_seed, Term::gan_a);
  const auto ga = gan_losses(Direction::b2a, batch_b, batch_a, p, h, rng_a, t);
  auto rng_b = term_rng(step_seed, Term::gan_b);
  const auto gb = gan_losses(Direction::a2b, batch_a, batch_b, p, h, rng_b, t);
  return {ga.disc + gb.disc, ga.gen + gb.gen};
}

}  // namespace d2dtm

#endif  // D2DTM_MODEL_HPP
