#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "redoff/error.hpp"

namespace redoff {

inline constexpr int kMaxServers = 16;

/// Nonempty subset of servers {1..N}, stored as a bitmask where bit (n-1)
/// represents server n. Doubles as the controller action.
class ServerSet {
 public:
  ServerSet() = default;

  static ServerSet from_mask(std::uint32_t mask, int n_servers) {
    require(n_servers >= 1 && n_servers <= kMaxServers, ErrorKind::kValue,
            "server count must be in [1, " + std::to_string(kMaxServers) + "]");
    require(mask != 0, ErrorKind::kContractViolation, "server set must be nonempty");
    require((mask >> n_servers) == 0, ErrorKind::kContractViolation,
            "server set references a server above N=" + std::to_string(n_servers));
    ServerSet s;
    s.mask_ = mask;
    return s;
  }

  static ServerSet all(int n_servers) { return from_mask(full_mask(n_servers), n_servers); }

  static ServerSet single(int server_id, int n_servers) {
    require(server_id >= 1 && server_id <= n_servers, ErrorKind::kValue,
            "server id " + std::to_string(server_id) + " outside [1, N]");
    return from_mask(1u << (server_id - 1), n_servers);
  }

  static ServerSet from_ids(const std::vector<int>& ids, int n_servers) {
    std::uint32_t mask = 0;
    for (int id : ids) {
      require(id >= 1 && id <= n_servers, ErrorKind::kValue, "server id outside [1, N]");
      mask |= 1u << (id - 1);
    }
    return from_mask(mask, n_servers);
  }

  static constexpr std::uint32_t full_mask(int n_servers) {
    return n_servers >= 32 ? ~0u : ((1u << n_servers) - 1u);
  }

  std::uint32_t mask() const noexcept { return mask_; }
  bool empty() const noexcept { return mask_ == 0; }
  int size() const noexcept { return std::popcount(mask_); }
  bool contains(int server_id) const noexcept {
    return server_id >= 1 && server_id <= 32 && ((mask_ >> (server_id - 1)) & 1u);
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    for (int b = 0; b < 32; ++b)
      if ((mask_ >> b) & 1u) out.push_back(b + 1);
    return out;
  }

  /// "1|3" style rendering used in CSV outputs.
  std::string to_string() const {
    std::string out;
    for (int id : ids()) {
      if (!out.empty()) out += '|';
      out += std::to_string(id);
    }
    return out;
  }

  static ServerSet parse(const std::string& text, int n_servers) {
    std::vector<int> ids;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto next = text.find('|', pos);
      if (next == std::string::npos) next = text.size();
      auto token = text.substr(pos, next - pos);
      require(!token.empty(), ErrorKind::kSchema, "malformed server set '" + text + "'");
      try {
        ids.push_back(std::stoi(token));
      } catch (const std::exception&) {
        fail(ErrorKind::kSchema, "malformed server set '" + text + "'");
      }
      pos = next + 1;
    }
    return from_ids(ids, n_servers);
  }

  friend bool operator==(const ServerSet&, const ServerSet&) = default;

 private:
  std::uint32_t mask_ = 0;
};

/// Action index k <-> nonempty bitmask k+1.
inline std::size_t action_count(int n_servers) { return ServerSet::full_mask(n_servers); }

inline ServerSet action_to_set(std::size_t index, int n_servers) {
  require(index < action_count(n_servers), ErrorKind::kValue, "action index out of range");
  return ServerSet::from_mask(static_cast<std::uint32_t>(index + 1), n_servers);
}

inline std::size_t set_to_action(const ServerSet& set) {
  require(!set.empty(), ErrorKind::kContractViolation, "empty server set has no action index");
  return static_cast<std::size_t>(set.mask()) - 1;
}

}  // namespace redoff
