#ifndef D2DTM_DATA_HPP
#define D2DTM_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "d2dtm/domain.hpp"
#include "d2dtm/matrix.hpp"
#include "d2dtm/rng.hpp"

namespace d2dtm {

struct RatingRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;

  bool operator==(const RatingRecord&) const = default;
};

/// Columnar text layout: user, item, rating[, timestamp].
struct RatingFormat {
  std::string delimiter = "::";
  bool require_timestamp = false;
  std::size_t header_lines = 0;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + delim.size();
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

/// One record per non-blank line, in input order. An empty stream yields an
/// empty list.
inline std::vector<RatingRecord> load_ratings(std::istream& in, const RatingFormat& fmt = {}) {
  if (fmt.delimiter.empty()) throw std::invalid_argument("rating delimiter must be non-empty");
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t min_fields = fmt.require_timestamp ? 4 : 3;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no <= fmt.header_lines) continue;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, fmt.delimiter);
    if (fields.size() < min_fields || fields.size() > 4) {
      throw ParseError(line_no, "expected " + std::to_string(min_fields) +
                                    (min_fields == 4 ? "" : "-4") + " fields, got " +
                                    std::to_string(fields.size()));
    }
    RatingRecord rec;
    rec.user_id = std::string(fields[0]);
    rec.item_id = std::string(fields[1]);
    if (rec.user_id.empty() || rec.item_id.empty()) throw ParseError(line_no, "empty user or item id");
    if (!detail::parse_number(fields[2], rec.rating) || !std::isfinite(rec.rating)) {
      throw ParseError(line_no, "invalid rating '" + std::string(fields[2]) + "'");
    }
    if (fields.size() == 4) {
      std::int64_t ts = 0;
      if (!detail::parse_number(fields[3], ts)) {
        throw ParseError(line_no, "invalid timestamp '" + std::string(fields[3]) + "'");
      }
      rec.timestamp = ts;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<RatingRecord> load_ratings_file(const std::string& path, const RatingFormat& fmt = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ratings file '" + path + "'");
  try {
    return load_ratings(in, fmt);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

/// MovieLens movies.dat: "id::title::Genre|Genre". Returns item id -> genres.
inline std::map<std::string, std::set<std::string>> load_movie_genres(std::istream& in) {
  std::map<std::string, std::set<std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, "::");
    if (fields.size() != 3) throw ParseError(line_no, "expected id::title::genres");
    auto& genres = out[std::string(fields[0])];
    for (auto g : detail::split(fields[2], "|")) genres.emplace(g);
  }
  return out;
}

/// Keeps records whose item carries `genre`.
inline std::vector<RatingRecord> filter_by_genre(
    std::span<const RatingRecord> records,
    const std::map<std::string, std::set<std::string>>& genres, const std::string& genre) {
  std::vector<RatingRecord> out;
  for (const auto& r : records) {
    const auto it = genres.find(r.item_id);
    if (it != genres.end() && it->second.contains(genre)) out.push_back(r);
  }
  return out;
}

using ClickSet = std::set<std::pair<std::string, std::string>>;

/// Any rating, whatever its value, counts as one click.
inline ClickSet binarize(std::span<const RatingRecord> records) {
  ClickSet out;
  for (const auto& r : records) out.emplace(r.user_id, r.item_id);
  return out;
}

/// Binary user-by-item matrix stored as sorted column lists per row.
struct ClickMatrix {
  std::vector<std::string> user_index;
  std::vector<std::string> item_index;
  std::vector<std::vector<std::uint32_t>> rows;

  std::size_t n_users() const { return user_index.size(); }
  std::size_t n_items() const { return item_index.size(); }
  std::size_t nnz() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }

  /// Dense 0/1 rows for the given user positions.
  Matrix dense(std::span<const std::size_t> users) const {
    Matrix out(users.size(), n_items());
    for (std::size_t i = 0; i < users.size(); ++i) {
      for (auto c : rows[users[i]]) out(i, c) = 1.0;
    }
    return out;
  }

  Matrix dense() const {
    std::vector<std::size_t> all(n_users());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return dense(all);
  }

  bool operator==(const ClickMatrix&) const = default;
};

struct DualDomainDataset {
  std::vector<std::string> users;
  ClickMatrix domain_a;
  ClickMatrix domain_b;

  std::size_t n_users() const { return users.size(); }
  const ClickMatrix& domain(Domain d) const { return d == Domain::a ? domain_a : domain_b; }
  ClickMatrix& domain(Domain d) { return d == Domain::a ? domain_a : domain_b; }

  bool operator==(const DualDomainDataset&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checks the structural invariants. `require_item_coverage` additionally
/// demands that every item column has a click (true for freshly built data,
/// not for splits).
inline void validate(const DualDomainDataset& ds, bool require_item_coverage = true) {
  for (Domain d : {Domain::a, Domain::b}) {
    const auto& m = ds.domain(d);
    if (m.user_index != ds.users) throw DatasetError("domain " + domain_name(d) + " user index differs");
    if (m.rows.size() != ds.users.size()) throw DatasetError("domain " + domain_name(d) + " row count");
    std::vector<bool> seen(m.n_items(), false);
    for (std::size_t u = 0; u < m.rows.size(); ++u) {
      const auto& r = m.rows[u];
      if (r.empty()) {
        throw DatasetError("user '" + ds.users[u] + "' has no clicks in domain " + domain_name(d));
      }
      for (std::size_t k = 0; k < r.size(); ++k) {
        if (r[k] >= m.n_items() || (k > 0 && r[k] <= r[k - 1])) {
          throw DatasetError("malformed row for user '" + ds.users[u] + "'");
        }
        seen[r[k]] = true;
      }
    }
    if (require_item_coverage &&
        std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw DatasetError("domain " + domain_name(d) + " has an item without clicks");
    }
  }
}

/// Keeps users present in both click sets and, per domain, the items those
/// users clicked. Users and items are ordered lexicographically.
inline DualDomainDataset build_dual_domain(const ClickSet& clicks_a, const ClickSet& clicks_b) {
  std::set<std::string> users_a, users_b;
  for (const auto& [u, i] : clicks_a) users_a.insert(u);
  for (const auto& [u, i] : clicks_b) users_b.insert(u);
  DualDomainDataset ds;
  std::set_intersection(users_a.begin(), users_a.end(), users_b.begin(), users_b.end(),
                        std::back_inserter(ds.users));
  if (ds.users.empty()) throw DatasetError("no overlapping users");

  std::map<std::string, std::size_t> user_pos;
  for (std::size_t i = 0; i < ds.users.size(); ++i) user_pos.emplace(ds.users[i], i);

  auto build = [&](const ClickSet& clicks) {
    ClickMatrix m;
    m.user_index = ds.users;
    std::set<std::string> items;
    for (const auto& [u, i] : clicks) {
      if (user_pos.contains(u)) items.insert(i);
    }
    m.item_index.assign(items.begin(), items.end());
    std::map<std::string, std::uint32_t> item_pos;
    for (std::size_t i = 0; i < m.item_index.size(); ++i) {
      item_pos.emplace(m.item_index[i], static_cast<std::uint32_t>(i));
    }
    m.rows.resize(ds.users.size());
    for (const auto& [u, i] : clicks) {
      const auto it = user_pos.find(u);
      if (it != user_pos.end()) m.rows[it->second].push_back(item_pos.at(i));
    }
    for (auto& r : m.rows) std::sort(r.begin(), r.end());
    return m;
  };
  ds.domain_a = build(clicks_a);
  ds.domain_b = build(clicks_b);
  return ds;
}

/// Dataset restricted to the given user positions, item indices unchanged.
inline DualDomainDataset subset_users(const DualDomainDataset& ds, std::span<const std::size_t> positions) {
  DualDomainDataset out;
  for (auto p : positions) out.users.push_back(ds.users[p]);
  for (Domain d : {Domain::a, Domain::b}) {
    const auto& src = ds.domain(d);
    auto& dst = out.domain(d);
    dst.user_index = out.users;
    dst.item_index = src.item_index;
    for (auto p : positions) dst.rows.push_back(src.rows[p]);
  }
  return out;
}

struct SplitSpec {
  double train_frac = 0.70;
  double valid_frac = 0.05;
  double test_frac = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train_frac > 0 && valid_frac > 0 && test_frac > 0)) {
      throw std::invalid_argument("split fractions must be positive");
    }
    if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9) {
      throw std::invalid_argument("split fractions must sum to 1");
    }
  }
};

struct DatasetSplit {
  DualDomainDataset train;
  DualDomainDataset valid;
  DualDomainDataset test;
};

/// Seeded user-level partition. Train gets floor(train_frac·U) users,
/// validation floor(valid_frac·U), test the remainder. Users keep their
/// original relative order inside each part.
inline DatasetSplit split_users(const DualDomainDataset& ds, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = ds.n_users();
  if (n < 3) throw DatasetError("need at least 3 users to split, have " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));

  const auto count = [n](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_train = count(spec.train_frac);
  const std::size_t n_valid = std::min(count(spec.valid_frac), n - n_train);

  auto part = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);
    std::sort(idx.begin(), idx.end());
    return subset_users(ds, idx);
  };
  return {part(0, n_train), part(n_train, n_train + n_valid), part(n_train + n_valid, n)};
}

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items_a = 0;
  std::size_t n_items_b = 0;
  double density_a = 0.0;  // percent
  double density_b = 0.0;  // percent
};

inline DatasetStats dataset_stats(const DualDomainDataset& ds) {
  auto density = [&](const ClickMatrix& m) {
    const double cells = static_cast<double>(ds.n_users()) * static_cast<double>(m.n_items());
    return cells == 0.0 ? 0.0 : 100.0 * static_cast<double>(m.nnz()) / cells;
  };
  return {ds.n_users(), ds.domain_a.n_items(), ds.domain_b.n_items(), density(ds.domain_a),
          density(ds.domain_b)};
}

/// Table row: name, #user, #item_A, #item_B, dense_A, dense_B.
inline std::string format_stats_table(const std::string& name, const DatasetStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %8s %8s %8s %8s %8s\n%-20s %8zu %8zu %8zu %8.2f %8.2f\n",
                "Dataset", "#user", "#item_A", "#item_B", "dense_A", "dense_B", name.c_str(),
                s.n_users, s.n_items_a, s.n_items_b, s.density_a, s.density_b);
  return buf;
}

/// 64-bit FNV-1a over the user list and both item lists.
inline std::uint64_t dataset_fingerprint(const DualDomainDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  feed("users");
  for (const auto& u : ds.users) feed(u);
  feed("items_a");
  for (const auto& i : ds.domain_a.item_index) feed(i);
  feed("items_b");
  for (const auto& i : ds.domain_b.item_index) feed(i);
  return h;
}

inline std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

// Dataset cache layout (text, one token group per line):
//
//   d2dtm-dataset 1
//   users <N>            followed by N id lines
//   items_a <M>          followed by M id lines
//   items_b <K>          followed by K id lines
//   clicks_a <nnz>       followed by nnz "row col" lines, sorted
//   clicks_b <nnz>       followed by nnz "row col" lines, sorted
inline constexpr const char* kDatasetCacheMagic = "d2dtm-dataset";
inline constexpr int kDatasetCacheVersion = 1;

inline void write_dataset_cache(std::ostream& out, const DualDomainDataset& ds) {
  auto check_id = [](const std::string& id) {
    if (id.empty() || id.find_first_of("\r\n") != std::string::npos ||
        detail::trim(id).size() != id.size()) {
      throw DatasetError("id '" + id + "' cannot be stored in the dataset cache");
    }
  };
  out << kDatasetCacheMagic << ' ' << kDatasetCacheVersion << '\n';
  out << "users " << ds.users.size() << '\n';
  for (const auto& u : ds.users) {
    check_id(u);
    out << u << '\n';
  }
  for (Domain d : {Domain::a, Domain::b}) {
    const auto& m = ds.domain(d);
    out << "items_" << domain_name(d) << ' ' << m.n_items() << '\n';
    for (const auto& i : m.item_index) {
      check_id(i);
      out << i << '\n';
    }
  }
  for (Domain d : {Domain::a, Domain::b}) {
    const auto& m = ds.domain(d);
    out << "clicks_" << domain_name(d) << ' ' << m.nnz() << '\n';
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
      for (auto c : m.rows[r]) out << r << ' ' << c << '\n';
    }
  }
}

inline DualDomainDataset read_dataset_cache(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(line_no + 1, "unexpected end of dataset cache");
    ++line_no;
    return line;
  };
  auto header = [&](const std::string& key) {
    std::istringstream ss(next());
    std::string k;
    std::size_t n = 0;
    if (!(ss >> k >> n) || k != key) throw ParseError(line_no, "expected '" + key + " <count>'");
    return n;
  };
  {
    std::istringstream ss(next());
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != kDatasetCacheMagic) {
      throw ParseError(line_no, "not a dataset cache");
    }
    if (version != kDatasetCacheVersion) {
      throw ParseError(line_no, "unsupported dataset cache version " + std::to_string(version));
    }
  }
  DualDomainDataset ds;
  const std::size_t n_users = header("users");
  for (std::size_t i = 0; i < n_users; ++i) ds.users.push_back(next());
  for (Domain d : {Domain::a, Domain::b}) {
    auto& m = ds.domain(d);
    const std::size_t n_items = header("items_" + domain_name(d));
    for (std::size_t i = 0; i < n_items; ++i) m.item_index.push_back(next());
    m.user_index = ds.users;
    m.rows.assign(n_users, {});
  }
  for (Domain d : {Domain::a, Domain::b}) {
    auto& m = ds.domain(d);
    const std::size_t nnz = header("clicks_" + domain_name(d));
    for (std::size_t k = 0; k < nnz; ++k) {
      std::istringstream ss(next());
      std::size_t r = 0, c = 0;
      if (!(ss >> r >> c) || r >= n_users || c >= m.n_items()) {
        throw ParseError(line_no, "bad coordinate pair");
      }
      m.rows[r].push_back(static_cast<std::uint32_t>(c));
    }
  }
  try {
    validate(ds);
  } catch (const DatasetError& e) {
    throw ParseError(line_no, std::string("invalid dataset cache: ") + e.what());
  }
  return ds;
}

inline void save_dataset_cache(const std::string& path, const DualDomainDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset cache '" + path + "'");
  write_dataset_cache(out, ds);
}

inline DualDomainDataset load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset cache '" + path + "'");
  try {
    return read_dataset_cache(in);
  } catch (const ParseError& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace d2dtm

#endif  // D2DTM_DATA_HPP
