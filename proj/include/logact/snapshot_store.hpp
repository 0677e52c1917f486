#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "logact/types.hpp"

namespace logact {

// Component state bound to the log prefix it covers.
struct Snapshot {
  std::string component_id;
  LogPosition log_position{0};  // state reflects entries [0, log_position)
  std::string state;            // opaque bytes
  std::uint64_t created_ts{0};
};

// Latest-wins key-value store for component snapshots: one directory per
// bus, one file per component_id, replaced by atomic rename.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path dir);

  void put(const Snapshot& snapshot) const;

  // Returns the latest snapshot, or nullopt if none was ever stored.
  // Raises CorruptSnapshot if the stored blob fails its checksum.
  std::optional<Snapshot> get_latest(const std::string& component_id) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path file_for(const std::string& component_id) const;

  std::filesystem::path dir_;
};

}  // namespace logact
