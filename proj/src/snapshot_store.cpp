#include "logact/snapshot_store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "logact/errors.hpp"

namespace logact {
namespace {

constexpr std::string_view kSnapMagic = "AGSNAPv1\n";

std::string sanitize(const std::string& id) {
  std::string out;
  out.reserve(id.size());
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '-' || c == '_' || c == '.';
    if (ok) {
      out.push_back(c);
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "%%%02x", static_cast<unsigned char>(c));
      out += buf;
    }
  }
  return out.empty() ? std::string("_") : out;
}

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

SnapshotStore::SnapshotStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) raise(Errc::IoFailure, "create snapshot dir: " + ec.message());
}

std::filesystem::path SnapshotStore::file_for(const std::string& component_id) const {
  return dir_ / (sanitize(component_id) + ".snap");
}

void SnapshotStore::put(const Snapshot& snapshot) const {
  nlohmann::json header{{"component_id", snapshot.component_id},
                        {"created_ts", snapshot.created_ts},
                        {"log_position", snapshot.log_position},
                        {"state_len", snapshot.state.size()}};
  std::string body = header.dump();
  body.push_back('\n');
  body += snapshot.state;

  std::string blob(kSnapMagic);
  char crc_buf[16];
  std::snprintf(crc_buf, sizeof(crc_buf), "%08x\n", crc_of(body));
  blob += crc_buf;
  blob += body;

  std::filesystem::path final_path = file_for(snapshot.component_id);
  std::filesystem::path tmp_path = final_path;
  tmp_path += ".tmp";

  int fd = ::open(tmp_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) raise(Errc::IoFailure, std::string("open snapshot tmp: ") + std::strerror(errno));
  std::size_t off = 0;
  while (off < blob.size()) {
    ssize_t n = ::write(fd, blob.data() + off, blob.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      raise(Errc::IoFailure, std::string("write snapshot: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  ::fdatasync(fd);
  ::close(fd);

  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
  if (ec) raise(Errc::IoFailure, "rename snapshot: " + ec.message());

  int dfd = ::open(dir_.c_str(), O_RDONLY | O_DIRECTORY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

std::optional<Snapshot> SnapshotStore::get_latest(const std::string& component_id) const {
  std::filesystem::path path = file_for(component_id);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto corrupt = [&](const char* why) -> std::optional<Snapshot> {
    raise(Errc::CorruptSnapshot, std::string(why) + " in '" + path.string() + "'");
  };

  if (blob.size() < kSnapMagic.size() + 9) return corrupt("truncated snapshot");
  if (std::string_view(blob).substr(0, kSnapMagic.size()) != kSnapMagic) {
    return corrupt("bad magic");
  }
  std::string crc_line = blob.substr(kSnapMagic.size(), 9);
  std::string body = blob.substr(kSnapMagic.size() + 9);
  char expect[16];
  std::snprintf(expect, sizeof(expect), "%08x\n", crc_of(body));
  if (crc_line != expect) return corrupt("checksum mismatch");

  std::size_t nl = body.find('\n');
  if (nl == std::string::npos) return corrupt("missing header");
  nlohmann::json header = nlohmann::json::parse(body.substr(0, nl), nullptr, false);
  if (header.is_discarded()) return corrupt("bad header");

  Snapshot snapshot;
  snapshot.component_id = header.at("component_id").get<std::string>();
  snapshot.log_position = header.at("log_position").get<LogPosition>();
  snapshot.created_ts = header.at("created_ts").get<std::uint64_t>();
  std::size_t state_len = header.at("state_len").get<std::size_t>();
  if (body.size() - nl - 1 != state_len) return corrupt("state length mismatch");
  snapshot.state = body.substr(nl + 1);
  return snapshot;
}

}  // namespace logact
