#ifndef D2DTM_CHECKPOINT_HPP
#define D2DTM_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "d2dtm/data.hpp"
#include "d2dtm/model.hpp"

namespace d2dtm {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "d2dtm-checkpoint";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File layout: a magic/version line, one line of JSON (architecture, loss
/// weights, seed, dataset fingerprint, item ids, block directory), then every
/// block's weight and bias values as little-endian float64 in directory order.
struct Checkpoint {
  D2DParams params;
  HyperParams hyper;
  std::string variant = "full";
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> items_a;
  std::vector<std::string> items_b;

  const std::vector<std::string>& items(Domain d) const { return d == Domain::a ? items_a : items_b; }
};

namespace detail {

inline nlohmann::json arch_to_json(const ArchSpec& a) {
  return {{"input_dim_a", a.input_dim_a},
          {"input_dim_b", a.input_dim_b},
          {"encoder_layer_sizes", a.encoder_layer_sizes},
          {"latent_dim", a.latent_dim},
          {"generator_layer_sizes", a.generator_layer_sizes},
          {"n_shared_encoder_layers", a.n_shared_encoder_layers},
          {"n_shared_generator_layers", a.n_shared_generator_layers},
          {"discriminator_layer_sizes", a.discriminator_layer_sizes}};
}

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  ArchSpec a;
  a.input_dim_a = j.at("input_dim_a").get<std::size_t>();
  a.input_dim_b = j.at("input_dim_b").get<std::size_t>();
  a.encoder_layer_sizes = j.at("encoder_layer_sizes").get<std::vector<std::size_t>>();
  a.latent_dim = j.at("latent_dim").get<std::size_t>();
  a.generator_layer_sizes = j.at("generator_layer_sizes").get<std::vector<std::size_t>>();
  a.n_shared_encoder_layers = j.at("n_shared_encoder_layers").get<std::size_t>();
  a.n_shared_generator_layers = j.at("n_shared_generator_layers").get<std::size_t>();
  a.discriminator_layer_sizes = j.at("discriminator_layer_sizes").get<std::vector<std::size_t>>();
  return a;
}

inline nlohmann::json hyper_to_json(const HyperParams& h) {
  return {{"lambda0", h.lambda0}, {"lambda1", h.lambda1}, {"lambda2", h.lambda2},
          {"lambda3", h.lambda3}, {"lambda4", h.lambda4}, {"recon", recon_loss_name(h.recon)},
          {"dropout_rate", h.dropout_rate}};
}

inline HyperParams hyper_from_json(const nlohmann::json& j) {
  HyperParams h;
  h.lambda0 = j.at("lambda0").get<double>();
  h.lambda1 = j.at("lambda1").get<double>();
  h.lambda2 = j.at("lambda2").get<double>();
  h.lambda3 = j.at("lambda3").get<double>();
  h.lambda4 = j.at("lambda4").get<double>();
  h.recon = parse_recon_loss(j.at("recon").get<std::string>());
  h.dropout_rate = j.at("dropout_rate").get<double>();
  return h;
}

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(bytes, 8);
}

inline double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw CheckpointError("checkpoint truncated in parameter data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const ParamBlock* b : ck.params.all_blocks()) {
    blocks.push_back({{"name", b->name}, {"rows", b->weight.rows()}, {"cols", b->weight.cols()}});
  }
  const nlohmann::json header = {{"arch", detail::arch_to_json(ck.params.arch)},
                                 {"hyper", detail::hyper_to_json(ck.hyper)},
                                 {"variant", ck.variant},
                                 {"seed", ck.seed},
                                 {"fingerprint", fingerprint_hex(ck.fingerprint)},
                                 {"items_a", ck.items_a},
                                 {"items_b", ck.items_b},
                                 {"blocks", blocks},
                                 {"byte_order", "little"},
                                 {"value_type", "float64"}};
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  for (const ParamBlock* b : ck.params.all_blocks()) {
    for (double v : b->weight.values()) detail::put_f64(out, v);
    for (double v : b->bias) detail::put_f64(out, v);
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("empty checkpoint");
  std::istringstream magic(line);
  std::string tag;
  int version = 0;
  if (!(magic >> tag >> version) || tag != kCheckpointMagic) throw CheckpointError("not a checkpoint file");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (!std::getline(in, line)) throw CheckpointError("checkpoint header missing");
  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
    ck.hyper = detail::hyper_from_json(header.at("hyper"));
    ck.variant = header.at("variant").get<std::string>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.fingerprint = std::stoull(header.at("fingerprint").get<std::string>(), nullptr, 16);
    ck.items_a = header.at("items_a").get<std::vector<std::string>>();
    ck.items_b = header.at("items_b").get<std::vector<std::string>>();
    ck.params = D2DParams::initialize(detail::arch_from_json(header.at("arch")), 0);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint header: ") + e.what());
  }
  const auto blocks = ck.params.all_blocks();
  const auto& dir = header.at("blocks");
  if (dir.size() != blocks.size()) throw CheckpointError("block directory does not match the architecture");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ParamBlock& b = *blocks[i];
    if (dir[i].at("name") != b.name || dir[i].at("rows") != b.weight.rows() || dir[i].at("cols") != b.weight.cols()) {
      throw CheckpointError("block " + std::to_string(i) + " in the directory does not match '" + b.name + "'");
    }
  }
  for (ParamBlock* b : blocks) {
    for (auto& v : b->weight.values()) v = detail::get_f64(in);
    for (auto& v : b->bias) v = detail::get_f64(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after parameter data");
  if (ck.items_a.size() != ck.params.arch.input_dim_a || ck.items_b.size() != ck.params.arch.input_dim_b) {
    throw CheckpointError("item lists do not match the architecture input widths");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ck);
  if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

/// Throws when the item counts differ from the architecture; returns a
/// warning message (empty when none) when only the fingerprint differs.
inline std::string check_compatible(const Checkpoint& ck, const DualDomainDataset& ds) {
  const auto& a = ck.params.arch;
  if (ds.domain_a.n_items() != a.input_dim_a || ds.domain_b.n_items() != a.input_dim_b) {
    throw CheckpointError("dataset has " + std::to_string(ds.domain_a.n_items()) + "/" +
                          std::to_string(ds.domain_b.n_items()) + " items but the checkpoint expects " +
                          std::to_string(a.input_dim_a) + "/" + std::to_string(a.input_dim_b));
  }
  const auto fp = dataset_fingerprint(ds);
  if (fp != ck.fingerprint) {
    return "warning: dataset fingerprint " + fingerprint_hex(fp) + " differs from checkpoint fingerprint " +
           fingerprint_hex(ck.fingerprint);
  }
  return {};
}

}  // namespace d2dtm

#endif  // D2DTM_CHECKPOINT_HPP
