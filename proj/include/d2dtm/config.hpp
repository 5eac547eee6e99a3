#ifndef D2DTM_CONFIG_HPP
#define D2DTM_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "d2dtm/data.hpp"
#include "d2dtm/model.hpp"
#include "d2dtm/training.hpp"

namespace d2dtm {

/// Every problem found in one config file, one message per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "invalid config:";
    for (const auto& s : p) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

/// Architecture without the input widths, which come from the dataset.
struct ModelConfig {
  std::string preset = "dense";  // dense or sparse; sets the layer defaults
  std::optional<std::vector<std::size_t>> encoder_layer_sizes;
  std::optional<std::size_t> latent_dim;
  std::optional<std::vector<std::size_t>> generator_layer_sizes;
  std::optional<std::size_t> n_shared_encoder_layers;
  std::optional<std::size_t> n_shared_generator_layers;
  std::optional<std::vector<std::size_t>> discriminator_layer_sizes;

  ArchSpec resolve(std::size_t ia, std::size_t ib) const {
    ArchSpec a = preset == "sparse" ? ArchSpec::sparse_default(ia, ib) : ArchSpec::dense_default(ia, ib);
    if (encoder_layer_sizes) a.encoder_layer_sizes = *encoder_layer_sizes;
    if (latent_dim) a.latent_dim = *latent_dim;
    if (generator_layer_sizes) a.generator_layer_sizes = *generator_layer_sizes;
    if (n_shared_encoder_layers) a.n_shared_encoder_layers = *n_shared_encoder_layers;
    if (n_shared_generator_layers) a.n_shared_generator_layers = *n_shared_generator_layers;
    if (discriminator_layer_sizes) a.discriminator_layer_sizes = *discriminator_layer_sizes;
    return a;
  }
};

struct RunConfig {
  std::string dataset_cache;
  std::string out_dir = "out";
  SplitSpec split;
  ModelConfig model;
  HyperParams hyper;
  TrainConfig train;
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::optional<std::vector<std::size_t>> parse_size_list(std::string_view s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ",")) {
    std::size_t v = 0;
    if (!parse_number(trim(part), v)) return std::nullopt;
    out.push_back(v);
  }
  return out;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  return std::nullopt;
}

/// One config key: applies a textual value (returning an error message on
/// failure) and renders the current value.
struct KeySpec {
  std::string section;
  std::string key;
  std::function<std::optional<std::string>(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::vector<KeySpec> config_keys() {
  std::vector<KeySpec> keys;
  auto number = [&keys](std::string section, std::string key, auto accessor) {
    keys.push_back({section, key,
                    [accessor](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                      auto& field = accessor(c);
                      std::remove_reference_t<decltype(field)> parsed{};
                      if (!parse_number(v, parsed)) return "expected a number, got '" + std::string(v) + "'";
                      field = parsed;
                      return std::nullopt;
                    },
                    [accessor](const RunConfig& c) {
                      auto& field = accessor(const_cast<RunConfig&>(c));
                      if constexpr (std::is_floating_point_v<std::remove_reference_t<decltype(field)>>) {
                        return format_double(field);
                      } else {
                        return std::to_string(field);
                      }
                    }});
  };
  auto opt_number = [&keys](std::string section, std::string key, auto accessor, auto fallback) {
    keys.push_back({section, key,
                    [accessor](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                      std::size_t parsed = 0;
                      if (!parse_number(v, parsed)) return "expected a non-negative integer, got '" + std::string(v) + "'";
                      accessor(c) = parsed;
                      return std::nullopt;
                    },
                    [accessor, fallback](const RunConfig& c) {
                      const auto& field = accessor(const_cast<RunConfig&>(c));
                      return field ? std::to_string(*field) : std::to_string(fallback(c));
                    }});
  };
  auto opt_list = [&keys](std::string section, std::string key, auto accessor, auto fallback) {
    keys.push_back({section, key,
                    [accessor](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                      auto parsed = parse_size_list(v);
                      if (!parsed) return "expected a comma-separated list of integers, got '" + std::string(v) + "'";
                      accessor(c) = *parsed;
                      return std::nullopt;
                    },
                    [accessor, fallback](const RunConfig& c) {
                      const auto& field = accessor(const_cast<RunConfig&>(c));
                      return join_sizes(field ? *field : fallback(c));
                    }});
  };
  auto text = [&keys](std::string section, std::string key, auto accessor, auto check) {
    keys.push_back({section, key,
                    [accessor, check](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                      if (auto err = check(v)) return err;
                      accessor(c) = std::string(v);
                      return std::nullopt;
                    },
                    [accessor](const RunConfig& c) { return std::string(accessor(const_cast<RunConfig&>(c))); }});
  };
  auto any_text = [](std::string_view) -> std::optional<std::string> { return std::nullopt; };
  auto arch_default = [](const RunConfig& c) { return c.model.resolve(1, 1); };

  text("data", "cache", [](RunConfig& c) -> std::string& { return c.dataset_cache; }, any_text);

  number("split", "train_frac", [](RunConfig& c) -> double& { return c.split.train_frac; });
  number("split", "valid_frac", [](RunConfig& c) -> double& { return c.split.valid_frac; });
  number("split", "test_frac", [](RunConfig& c) -> double& { return c.split.test_frac; });
  number("split", "seed", [](RunConfig& c) -> std::uint64_t& { return c.split.seed; });

  text("model", "preset", [](RunConfig& c) -> std::string& { return c.model.preset; },
       [](std::string_view v) -> std::optional<std::string> {
         if (v == "dense" || v == "sparse") return std::nullopt;
         return "expected dense or sparse, got '" + std::string(v) + "'";
       });
  opt_list("model", "encoder_layer_sizes", [](RunConfig& c) -> auto& { return c.model.encoder_layer_sizes; },
           [=](const RunConfig& c) { return arch_default(c).encoder_layer_sizes; });
  opt_number("model", "latent_dim", [](RunConfig& c) -> auto& { return c.model.latent_dim; },
             [=](const RunConfig& c) { return arch_default(c).latent_dim; });
  opt_list("model", "generator_layer_sizes", [](RunConfig& c) -> auto& { return c.model.generator_layer_sizes; },
           [=](const RunConfig& c) { return arch_default(c).generator_layer_sizes; });
  opt_number("model", "n_shared_encoder_layers", [](RunConfig& c) -> auto& { return c.model.n_shared_encoder_layers; },
             [=](const RunConfig& c) { return arch_default(c).n_shared_encoder_layers; });
  opt_number("model", "n_shared_generator_layers",
             [](RunConfig& c) -> auto& { return c.model.n_shared_generator_layers; },
             [=](const RunConfig& c) { return arch_default(c).n_shared_generator_layers; });
  opt_list("model", "discriminator_layer_sizes",
           [](RunConfig& c) -> auto& { return c.model.discriminator_layer_sizes; },
           [=](const RunConfig& c) { return arch_default(c).discriminator_layer_sizes; });

  number("loss", "lambda0", [](RunConfig& c) -> double& { return c.hyper.lambda0; });
  number("loss", "lambda1", [](RunConfig& c) -> double& { return c.hyper.lambda1; });
  number("loss", "lambda2", [](RunConfig& c) -> double& { return c.hyper.lambda2; });
  number("loss", "lambda3", [](RunConfig& c) -> double& { return c.hyper.lambda3; });
  number("loss", "lambda4", [](RunConfig& c) -> double& { return c.hyper.lambda4; });
  keys.push_back({"loss", "recon",
                  [](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                    try {
                      c.hyper.recon = parse_recon_loss(v);
                    } catch (const std::invalid_argument& e) {
                      return std::string(e.what());
                    }
                    return std::nullopt;
                  },
                  [](const RunConfig& c) { return recon_loss_name(c.hyper.recon); }});

  number("training", "epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
  number("training", "batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
  number("training", "lr_encgen", [](RunConfig& c) -> double& { return c.train.lr_encgen; });
  number("training", "lr_disc", [](RunConfig& c) -> double& { return c.train.lr_disc; });
  number("training", "disc_steps_per_gen_step",
         [](RunConfig& c) -> std::size_t& { return c.train.disc_steps_per_gen_step; });
  number("training", "dropout_rate", [](RunConfig& c) -> double& { return c.train.dropout_rate; });
  number("training", "seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; });
  keys.push_back({"training", "variant",
                  [](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                    try {
                      c.train.variant = parse_variant(v);
                    } catch (const std::invalid_argument& e) {
                      return std::string(e.what());
                    }
                    return std::nullopt;
                  },
                  [](const RunConfig& c) { return variant_name(c.train.variant); }});
  number("training", "early_stop_patience", [](RunConfig& c) -> std::size_t& { return c.train.early_stop_patience; });
  number("training", "eval_k_for_selection",
         [](RunConfig& c) -> std::size_t& { return c.train.eval_k_for_selection; });
  keys.push_back({"training", "eval_ks",
                  [](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                    auto parsed = parse_size_list(v);
                    if (!parsed || parsed->empty()) {
                      return "expected a comma-separated list of integers, got '" + std::string(v) + "'";
                    }
                    c.train.eval_ks = *parsed;
                    return std::nullopt;
                  },
                  [](const RunConfig& c) { return join_sizes(c.train.eval_ks); }});
  keys.push_back({"training", "tie_weights",
                  [](RunConfig& c, std::string_view v) -> std::optional<std::string> {
                    auto b = parse_bool(v);
                    if (!b) return "expected true or false, got '" + std::string(v) + "'";
                    c.train.tie_weights = *b;
                    return std::nullopt;
                  },
                  [](const RunConfig& c) { return std::string(c.train.tie_weights ? "true" : "false"); }});

  text("output", "dir", [](RunConfig& c) -> std::string& { return c.out_dir; }, any_text);
  return keys;
}

}  // namespace detail

/// Checks cross-field constraints; every failure is listed.
inline std::vector<std::string> config_problems(const RunConfig& c) {
  std::vector<std::string> out;
  auto check = [&out](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      out.push_back(std::string(what) + ": " + e.what());
    }
  };
  check("[split]", [&] { c.split.validate(); });
  check("[model]", [&] { c.model.resolve(1, 1).validate(); });
  check("[loss]", [&] { c.hyper.validate(); });
  check("[training]", [&] { c.train.validate(); });
  return out;
}

/// Parses "[section]" headers and "key = value" lines; '#' starts a comment.
/// Unknown sections or keys, duplicates and malformed values are all
/// collected and reported together.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  const auto keys = detail::config_keys();
  std::vector<std::string> problems;
  std::set<std::string> seen;
  std::set<std::string> sections;
  for (const auto& k : keys) sections.insert(k.section);
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back(where + "malformed section header '" + std::string(line) + "'");
        continue;
      }
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      if (!sections.count(section)) problems.push_back(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (section.empty()) {
      problems.push_back(where + "key '" + key + "' appears before any section");
      continue;
    }
    if (!sections.count(section)) continue;
    const std::string full = section + "." + key;
    const auto it = std::find_if(keys.begin(), keys.end(),
                                 [&](const detail::KeySpec& k) { return k.section == section && k.key == key; });
    if (it == keys.end()) {
      problems.push_back(where + "unknown key '" + full + "'");
      continue;
    }
    if (!seen.insert(full).second) {
      problems.push_back(where + "duplicate key '" + full + "'");
      continue;
    }
    if (auto err = it->set(base, value)) problems.push_back(where + full + ": " + *err);
  }
  if (problems.empty()) problems = config_problems(base);
  if (!problems.empty()) throw ConfigError(problems);
  return base;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  return parse_config(in);
}

/// Every key with its resolved value, defaults included.
inline std::map<std::string, std::string> resolved_values(const RunConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& k : detail::config_keys()) out[k.section + "." + k.key] = k.get(c);
  return out;
}

/// Writes the resolved config back in the input format.
inline void write_config(std::ostream& out, const RunConfig& c) {
  std::string section;
  for (const auto& k : detail::config_keys()) {
    if (k.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << k.section << "]\n";
      section = k.section;
    }
    out << k.key << " = " << k.get(c) << '\n';
  }
}

/// FNV-1a over a file's bytes; identifies manifest inputs.
inline std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

/// Run record with no timestamps or host details, so equal manifests mean
/// equal inputs and settings.
struct Manifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // name -> fingerprint hex
  std::vector<std::string> outputs;

  std::string to_json() const {
    const nlohmann::json j = {{"command", command}, {"config", config}, {"seed", seed},
                              {"inputs", inputs},   {"outputs", outputs}, {"format", "d2dtm-manifest 1"}};
    return j.dump(2) + "\n";
  }
};

inline void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest '" + path + "'");
  out << m.to_json();
}

}  // namespace d2dtm

#endif  // D2DTM_CONFIG_HPP
