#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "logact/types.hpp"

namespace logact {

// Small fixed-universe set over the nine payload types.
class PayloadTypeSet {
 public:
  constexpr PayloadTypeSet() = default;
  constexpr PayloadTypeSet(std::initializer_list<PayloadType> types) {
    for (PayloadType t : types) insert(t);
  }

  static constexpr PayloadTypeSet all() {
    PayloadTypeSet s;
    s.mask_ = (1u << kPayloadTypeCount) - 1u;
    return s;
  }

  constexpr void insert(PayloadType type) { mask_ |= bit(type); }
  constexpr void erase(PayloadType type) { mask_ &= ~bit(type); }
  constexpr bool contains(PayloadType type) const { return (mask_ & bit(type)) != 0; }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr bool is_subset_of(PayloadTypeSet other) const { return (mask_ & ~other.mask_) == 0; }

  std::vector<PayloadType> to_vector() const;

  friend constexpr bool operator==(PayloadTypeSet, PayloadTypeSet) = default;

 private:
  static constexpr std::uint16_t bit(PayloadType type) {
    return static_cast<std::uint16_t>(1u << static_cast<unsigned>(type));
  }
  std::uint16_t mask_{0};
};

struct Permissions {
  PayloadTypeSet appendable;
  PayloadTypeSet readable;
  PayloadTypeSet pollable;  // must be a subset of readable

  bool valid() const { return pollable.is_subset_of(readable); }

  friend bool operator==(const Permissions&, const Permissions&) = default;
};

struct ClientIdentity {
  std::string client_id;
  Permissions permissions;

  friend bool operator==(const ClientIdentity&, const ClientIdentity&) = default;
};

}  // namespace logact
