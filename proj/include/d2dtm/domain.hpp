#ifndef D2DTM_DOMAIN_HPP
#define D2DTM_DOMAIN_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace d2dtm {

enum class Domain { a = 0, b = 1 };

inline constexpr Domain other(Domain d) { return d == Domain::a ? Domain::b : Domain::a; }
inline constexpr std::size_t index_of(Domain d) { return static_cast<std::size_t>(d); }
inline std::string domain_name(Domain d) { return d == Domain::a ? "a" : "b"; }

/// Translation direction, identified by its source domain.
enum class Direction { a2b, b2a };

inline constexpr Domain source_of(Direction dir) { return dir == Direction::a2b ? Domain::a : Domain::b; }
inline constexpr Domain target_of(Direction dir) { return other(source_of(dir)); }
inline constexpr Direction direction_from(Domain source) {
  return source == Domain::a ? Direction::a2b : Direction::b2a;
}
inline std::string direction_name(Direction dir) { return dir == Direction::a2b ? "a2b" : "b2a"; }
inline Direction parse_direction(std::string_view s) {
  if (s == "a2b") return Direction::a2b;
  if (s == "b2a") return Direction::b2a;
  throw std::invalid_argument("unknown direction '" + std::string(s) + "' (expected a2b or b2a)");
}

}  // namespace d2dtm

#endif  // D2DTM_DOMAIN_HPP
