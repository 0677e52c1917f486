#include "logact/durable_bus.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "logact/errors.hpp"
#include "logact/serde.hpp"

namespace logact {
namespace {

// File layout, see docs/formats.md:
//   magic[8] = "AGBUSv1\n"
//   record   = frame_len:u32le  crc32(frame):u32le  frame
//   frame    = position:u64le  realtime_ts:u64le  type:u8  payload bytes
constexpr char kMagic[8] = {'A', 'G', 'B', 'U', 'S', 'v', '1', '\n'};
constexpr std::uint64_t kMagicSize = 8;
constexpr std::uint32_t kFrameHeaderSize = 8 + 8 + 1;
constexpr std::uint32_t kFrameMax = 64u << 20;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

bool pread_exact(int fd, void* buf, std::size_t size, std::uint64_t offset) {
  auto* out = static_cast<char*>(buf);
  while (size > 0) {
    ssize_t n = ::pread(fd, out, size, static_cast<off_t>(offset));
    if (n < 0) {
      if (errno == EINTR) continue;
      raise(Errc::IoFailure, std::string("pread: ") + std::strerror(errno));
    }
    if (n == 0) return false;  // short: caller treats as not-yet-written
    out += n;
    size -= static_cast<std::size_t>(n);
    offset += static_cast<std::uint64_t>(n);
  }
  return true;
}

void pwrite_exact(int fd, const void* buf, std::size_t size, std::uint64_t offset) {
  const auto* in = static_cast<const char*>(buf);
  while (size > 0) {
    ssize_t n = ::pwrite(fd, in, size, static_cast<off_t>(offset));
    if (n < 0) {
      if (errno == EINTR) continue;
      raise(Errc::IoFailure, std::string("pwrite: ") + std::strerror(errno));
    }
    in += n;
    size -= static_cast<std::size_t>(n);
    offset += static_cast<std::uint64_t>(n);
  }
}

std::uint64_t file_size_of(int fd) {
  struct stat st{};
  if (::fstat(fd, &st) != 0) raise(Errc::IoFailure, std::string("fstat: ") + std::strerror(errno));
  return static_cast<std::uint64_t>(st.st_size);
}

void fsync_parent_dir(const std::filesystem::path& path) {
  std::filesystem::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

struct FileLock {
  int fd;
  explicit FileLock(int fd_in) : fd(fd_in) {
    while (::flock(fd, LOCK_EX) != 0) {
      if (errno != EINTR) raise(Errc::IoFailure, std::string("flock: ") + std::strerror(errno));
    }
  }
  ~FileLock() { ::flock(fd, LOCK_UN); }
};

}  // namespace

std::uint64_t BusAccounting::total_payload_bytes() const {
  std::uint64_t total = 0;
  for (auto b : payload_bytes) total += b;
  return total;
}

std::unique_ptr<DurableBus> DurableBus::open(const std::filesystem::path& path,
                                             DurableBusOptions options) {
  auto bus = std::unique_ptr<DurableBus>(new DurableBus());
  bus->path_ = path;
  bus->options_ = options;
  if (!bus->options_.clock) bus->options_.clock = SystemClock::instance();

  int flags = options.read_only ? O_RDONLY : (O_RDWR | O_CREAT);
  bus->fd_ = ::open(path.c_str(), flags, 0644);
  if (bus->fd_ < 0) {
    raise(Errc::IoFailure, "open bus file '" + path.string() + "': " + std::strerror(errno));
  }

  if (!options.read_only) {
    FileLock lock(bus->fd_);
    std::uint64_t size = file_size_of(bus->fd_);
    if (size < kMagicSize) {
      // Fresh file (or a write torn inside the magic): start clean.
      if (::ftruncate(bus->fd_, 0) != 0) {
        raise(Errc::IoFailure, std::string("ftruncate: ") + std::strerror(errno));
      }
      pwrite_exact(bus->fd_, kMagic, kMagicSize, 0);
      ::fdatasync(bus->fd_);
      fsync_parent_dir(path);
    }
    std::lock_guard guard(bus->mutex_);
    bus->refresh_locked();  // validates magic, loads records
    if (bus->scanned_size_ < file_size_of(bus->fd_)) {
      // Torn tail record: silent repair by truncation.
      if (::ftruncate(bus->fd_, static_cast<off_t>(bus->scanned_size_)) != 0) {
        raise(Errc::IoFailure, std::string("ftruncate: ") + std::strerror(errno));
      }
      ::fdatasync(bus->fd_);
    }
  } else {
    std::lock_guard guard(bus->mutex_);
    bus->refresh_locked();
  }

  if (!options.read_only && options.sync_mode == SyncMode::Batched) {
    bus->flusher_ = std::jthread([self = bus.get()](std::stop_token st) {
      std::unique_lock lk(self->flush_mutex_);
      while (!st.stop_requested()) {
        self->flush_cv_.wait_for(lk, st,
                                 std::chrono::milliseconds(self->options_.batch_interval_ms),
                                 [] { return false; });
        if (self->dirty_.exchange(false)) ::fdatasync(self->fd_);
      }
    });
  }
  return bus;
}

DurableBus::~DurableBus() {
  if (flusher_.joinable()) {
    flusher_.request_stop();
    flush_cv_.notify_all();
    flusher_.join();
  }
  if (fd_ >= 0) {
    if (!options_.read_only && dirty_.exchange(false)) ::fdatasync(fd_);
    ::close(fd_);
  }
}

void DurableBus::refresh_locked() const {
  std::uint64_t size = file_size_of(fd_);
  if (!magic_ok_) {
    if (size < kMagicSize) return;  // not yet initialized by a writer
    char magic[kMagicSize];
    if (!pread_exact(fd_, magic, kMagicSize, 0)) return;
    if (std::memcmp(magic, kMagic, kMagicSize) != 0) {
      raise(Errc::CorruptLog, "bad magic in '" + path_.string() + "'");
    }
    magic_ok_ = true;
    scanned_size_ = kMagicSize;
  }

  while (scanned_size_ + 8 <= size) {
    unsigned char header[8];
    if (!pread_exact(fd_, header, 8, scanned_size_)) break;
    std::uint32_t frame_len = get_u32(header);
    std::uint32_t crc_expected = get_u32(header + 4);
    bool reaches_eof = scanned_size_ + 8 + frame_len >= size;
    if (frame_len < kFrameHeaderSize || frame_len > kFrameMax) {
      // A garbage length can only come from a torn tail; anything with
      // records after it is real corruption.
      if (reaches_eof) break;
      raise(Errc::CorruptLog, "bad record length at offset " + std::to_string(scanned_size_));
    }
    if (scanned_size_ + 8 + frame_len > size) break;  // incomplete tail record

    std::vector<unsigned char> frame(frame_len);
    if (!pread_exact(fd_, frame.data(), frame_len, scanned_size_ + 8)) break;
    if (crc_of(frame.data(), frame.size()) != crc_expected) {
      if (scanned_size_ + 8 + frame_len == size) break;  // torn tail record
      raise(Errc::CorruptLog, "checksum mismatch at offset " + std::to_string(scanned_size_));
    }

    Entry entry;
    entry.position = get_u64(frame.data());
    entry.realtime_ts = get_u64(frame.data() + 8);
    std::uint8_t type_tag = frame[16];
    if (entry.position != entries_.size() || type_tag >= kPayloadTypeCount) {
      raise(Errc::CorruptLog, "bad record framing at offset " + std::to_string(scanned_size_));
    }
    std::string_view payload_bytes(reinterpret_cast<const char*>(frame.data()) + kFrameHeaderSize,
                                   frame_len - kFrameHeaderSize);
    entry.payload = parse_payload(payload_bytes);
    if (payload_type(entry.payload) != static_cast<PayloadType>(type_tag)) {
      raise(Errc::CorruptLog, "type tag disagrees with payload at offset " +
                                  std::to_string(scanned_size_));
    }
    accounting_.payload_bytes[type_tag] += payload_bytes.size();
    accounting_.entry_count[type_tag] += 1;
    last_ts_ = std::max(last_ts_, entry.realtime_ts);
    entries_.push_back(std::move(entry));
    scanned_size_ += 8 + frame_len;
  }
}

LogPosition DurableBus::append(const ClientIdentity& client, const Payload& payload) {
  PayloadType type = payload_type(payload);
  if (!client.permissions.appendable.contains(type)) {
    raise(Errc::PermissionDenied, "client '" + client.client_id + "' may not append " +
                                      std::string(payload_type_name(type)));
  }
  if (options_.read_only) raise(Errc::PermissionDenied, "bus handle is read-only");

  std::unique_lock lock(mutex_);
  if (closed_) raise(Errc::BusClosed, "bus is closed");

  LogPosition position;
  {
    FileLock file_lock(fd_);
    refresh_locked();  // serialize with appenders in other processes
    position = entries_.size();
    last_ts_ = std::max(last_ts_, options_.clock->now_ms());

    std::string payload_bytes = serialize_payload(payload);
    std::string frame;
    frame.reserve(kFrameHeaderSize + payload_bytes.size());
    put_u64(frame, position);
    put_u64(frame, last_ts_);
    frame.push_back(static_cast<char>(type));
    frame += payload_bytes;

    std::string record;
    record.reserve(8 + frame.size());
    put_u32(record, static_cast<std::uint32_t>(frame.size()));
    put_u32(record, crc_of(reinterpret_cast<const unsigned char*>(frame.data()), frame.size()));
    record += frame;

    pwrite_exact(fd_, record.data(), record.size(), scanned_size_);
    if (options_.sync_mode == SyncMode::Always) {
      if (::fdatasync(fd_) != 0) {
        raise(Errc::IoFailure, std::string("fdatasync: ") + std::strerror(errno));
      }
    } else {
      dirty_.store(true, std::memory_order_release);
    }

    Entry entry{position, last_ts_, payload};
    accounting_.payload_bytes[static_cast<int>(type)] += payload_bytes.size();
    accounting_.entry_count[static_cast<int>(type)] += 1;
    entries_.push_back(std::move(entry));
    scanned_size_ += record.size();
  }
  lock.unlock();
  appended_.notify_all();
  return position;
}

std::vector<Entry> DurableBus::read(const ClientIdentity& client, LogPosition start,
                                    LogPosition end) const {
  if (start > end) raise(Errc::InvalidRange, "read start > end");
  std::lock_guard lock(mutex_);
  refresh_locked();
  std::vector<Entry> out;
  LogPosition limit = std::min<LogPosition>(end, entries_.size());
  for (LogPosition p = start; p < limit; ++p) {
    if (client.permissions.readable.contains(payload_type(entries_[p].payload))) {
      out.push_back(entries_[p]);
    }
  }
  return out;
}

LogPosition DurableBus::tail() const {
  std::lock_guard lock(mutex_);
  refresh_locked();
  return entries_.size();
}

std::vector<Entry> DurableBus::collect_locked(LogPosition start, PayloadTypeSet filter) const {
  std::vector<Entry> out;
  for (LogPosition p = start; p < entries_.size(); ++p) {
    if (filter.contains(payload_type(entries_[p].payload))) out.push_back(entries_[p]);
  }
  return out;
}

std::vector<Entry> DurableBus::poll(const ClientIdentity& client, LogPosition start,
                                    PayloadTypeSet filter, std::chrono::milliseconds timeout) {
  if (filter.empty()) raise(Errc::MalformedInput, "poll filter must be non-empty");
  if (!filter.is_subset_of(client.permissions.pollable)) {
    raise(Errc::PermissionDenied,
          "client '" + client.client_id + "' may not poll all requested types");
  }
  auto deadline = std::chrono::steady_clock::now() + timeout;
  // Appends from other processes surface on a short refresh tick.
  constexpr auto kRefreshTick = std::chrono::milliseconds(15);
  std::unique_lock lock(mutex_);
  while (true) {
    refresh_locked();
    std::vector<Entry> matches = collect_locked(start, filter);
    if (!matches.empty() || closed_) return matches;
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return matches;
    appended_.wait_until(lock, std::min(deadline, now + kRefreshTick));
  }
}

void DurableBus::flush() {
  if (!options_.read_only && dirty_.exchange(false)) ::fdatasync(fd_);
}

void DurableBus::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  flush();
  appended_.notify_all();
}

BusAccounting DurableBus::accounting() const {
  std::lock_guard lock(mutex_);
  refresh_locked();
  return accounting_;
}

}  // namespace logact
