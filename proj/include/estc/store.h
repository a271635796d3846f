#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "estc/quality_control.h"
#include "json.hpp"

namespace estc {

// Milliseconds since the Unix epoch.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

class SystemClock : public Clock {
 public:
  std::int64_t now_ms() const override;
};

class FixedClock : public Clock {
 public:
  explicit FixedClock(std::int64_t t) : t_(t) {}
  std::int64_t now_ms() const override { return t_; }

 private:
  std::int64_t t_;
};

enum class Decision { kAccept, kReject };

std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct ReviewEvent {
  std::string channel_id;
  Decision decision = Decision::kAccept;
  std::string reviewer;
  std::vector<std::string> removed_products;
  std::int64_t timestamp = 0;

  bool operator==(const ReviewEvent&) const = default;
};

// Immutable view of the store. Readers hold a shared_ptr and never lock.
struct StoreIndex {
  std::map<std::string, Channel> channels;
  std::vector<std::string> order;  // first-seen order of channel ids
  std::vector<ReviewEvent> reviews;

  std::size_t count(ChannelStatus status) const;
  nlohmann::json to_json() const;
};

// Exclusive advisory lock on "<store>.lock". Throws ConflictError when held
// elsewhere.
class StoreLease {
 public:
  explicit StoreLease(const std::filesystem::path& store_path);
  ~StoreLease();
  StoreLease(const StoreLease&) = delete;
  StoreLease& operator=(const StoreLease&) = delete;

 private:
  int fd_ = -1;
};

// Append-only JSONL log of channel versions and review events with an
// in-memory index rebuilt by replay. All mutations go through one writer
// mutex and are committed by writing a temp file and renaming it over the
// log, so a failed commit leaves the previous log intact.
class ChannelStore {
 public:
  ChannelStore(std::filesystem::path path, std::size_t min_products = 3,
               std::shared_ptr<const Clock> clock = nullptr);

  // Replays a log from empty. A missing file yields an empty index.
  static StoreIndex replay(const std::filesystem::path& path);
  static StoreIndex replay_text(std::string_view text);

  const std::filesystem::path& path() const { return path_; }
  std::shared_ptr<const StoreIndex> snapshot() const;

  // Re-reads the log if it changed on disk since the last load. Never blocks:
  // returns immediately while a mutation is in progress.
  void refresh();

  // Appends channels whose id is not yet present and returns those added.
  // Takes the store lease for the duration of the commit.
  std::vector<Channel> add_channels(const std::vector<Channel>& channels);

  Channel review(const std::string& channel_id, Decision decision,
                 const std::vector<std::string>& removed_products,
                 const std::string& reviewer);

  // published / (published + rejected) x 100 over reviews whose timestamp
  // lies in [from, to]. Throws ValidationError if there are none.
  double acceptance_rate(
      std::optional<std::pair<std::int64_t, std::int64_t>> window = {}) const;

  void export_channels(const std::filesystem::path& out) const;

 private:
  void commit(const std::vector<nlohmann::json>& records);
  void load_locked();

  std::filesystem::path path_;
  std::size_t min_products_;
  std::shared_ptr<const Clock> clock_;
  mutable std::mutex writer_;
  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const StoreIndex> index_;
  std::string log_;  // current log contents
  std::optional<std::filesystem::file_time_type> loaded_mtime_;
  std::uintmax_t loaded_size_ = 0;
};

}  // namespace estc
