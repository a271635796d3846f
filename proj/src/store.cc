#include "estc/store.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "estc/errors.h"

namespace estc {

using nlohmann::json;
namespace fs = std::filesystem;

std::int64_t SystemClock::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string_view to_string(Decision d) {
  return d == Decision::kAccept ? "accept" : "reject";
}

Decision decision_from_string(std::string_view s) {
  if (s == "accept") return Decision::kAccept;
  if (s == "reject") return Decision::kReject;
  throw ValidationError("decision must be 'accept' or 'reject', got '" +
                        std::string(s) + "'");
}

namespace {

json review_to_json(const ReviewEvent& e) {
  return {{"type", "review"},
          {"channel_id", e.channel_id},
          {"decision", std::string(to_string(e.decision))},
          {"reviewer", e.reviewer},
          {"removed_products", e.removed_products},
          {"timestamp", e.timestamp}};
}

ReviewEvent review_from_json(const json& j) {
  return {j.at("channel_id").get<std::string>(),
          decision_from_string(j.at("decision").get<std::string>()),
          j.at("reviewer").get<std::string>(),
          j.value("removed_products", std::vector<std::string>{}),
          j.at("timestamp").get<std::int64_t>()};
}

json channel_record(const Channel& c) {
  return {{"type", "channel"}, {"channel", c.to_json()}};
}

// Applies a review to a pending channel. Shared by live decisions and replay
// so both produce the same state.
void apply_review(Channel& c, const ReviewEvent& e) {
  if (c.status != ChannelStatus::kPending) {
    throw ConflictError("channel " + c.channel_id + " is already " +
                        std::string(to_string(c.status)));
  }
  if (e.decision == Decision::kReject) {
    c.status = ChannelStatus::kRejected;
    return;
  }
  const std::set<std::string> removed(e.removed_products.begin(),
                                      e.removed_products.end());
  std::erase_if(c.products, [&](const ScoredProduct& p) {
    return removed.contains(p.product_id);
  });
  c.status = ChannelStatus::kPublished;
}

void apply_record(StoreIndex& index, const json& rec) {
  const auto type = rec.at("type").get<std::string>();
  if (type == "channel") {
    auto c = Channel::from_json(rec.at("channel"));
    if (!index.channels.contains(c.channel_id)) index.order.push_back(c.channel_id);
    index.channels[c.channel_id] = std::move(c);
  } else if (type == "review") {
    auto e = review_from_json(rec);
    auto it = index.channels.find(e.channel_id);
    if (it == index.channels.end()) {
      throw ParseError("review references unknown channel " + e.channel_id);
    }
    apply_review(it->second, e);
    index.reviews.push_back(std::move(e));
  } else {
    throw ParseError("unknown record type '" + type + "'");
  }
}

}  // namespace

std::size_t StoreIndex::count(ChannelStatus status) const {
  return static_cast<std::size_t>(
      std::count_if(channels.begin(), channels.end(),
                    [&](const auto& kv) { return kv.second.status == status; }));
}

json StoreIndex::to_json() const {
  json chans = json::array();
  for (const auto& id : order) chans.push_back(channels.at(id).to_json());
  json revs = json::array();
  for (const auto& r : reviews) revs.push_back(review_to_json(r));
  return {{"channels", chans}, {"reviews", revs}};
}

StoreLease::StoreLease(const fs::path& store_path) {
  const auto lock_path = store_path.string() + ".lock";
  if (store_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(store_path.parent_path(), ec);
  }
  fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open lease file " + lock_path);
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ConflictError("store " + store_path.string() +
                        " is locked by another writer");
  }
}

StoreLease::~StoreLease() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

ChannelStore::ChannelStore(fs::path path, std::size_t min_products,
                           std::shared_ptr<const Clock> clock)
    : path_(std::move(path)),
      min_products_(min_products),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()) {
  std::lock_guard lock(writer_);
  load_locked();
}

StoreIndex ChannelStore::replay_text(std::string_view text) {
  StoreIndex index;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      apply_record(index, json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError("store line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError("store line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return index;
}

StoreIndex ChannelStore::replay(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return replay_text(read_file(path));
}

void ChannelStore::load_locked() {
  std::error_code ec;
  if (!fs::exists(path_, ec)) {
    log_.clear();
    loaded_mtime_.reset();
    loaded_size_ = 0;
    std::lock_guard lock(snapshot_mu_);
    index_ = std::make_shared<const StoreIndex>();
    return;
  }
  std::string text = read_file(path_);
  auto index = std::make_shared<const StoreIndex>(replay_text(text));
  log_ = std::move(text);
  loaded_mtime_ = fs::last_write_time(path_, ec);
  loaded_size_ = log_.size();
  std::lock_guard lock(snapshot_mu_);
  index_ = std::move(index);
}

void ChannelStore::refresh() {
  // Readers call this; when a writer is active its commit publishes a fresh
  // snapshot anyway, so there is nothing to wait for.
  std::unique_lock lock(writer_, std::try_to_lock);
  if (!lock.owns_lock()) return;
  std::error_code ec;
  const bool exists = fs::exists(path_, ec);
  if (!exists && !loaded_mtime_) return;
  if (exists && loaded_mtime_ && fs::last_write_time(path_, ec) == *loaded_mtime_ &&
      fs::file_size(path_, ec) == loaded_size_) {
    return;
  }
  load_locked();
}

std::shared_ptr<const StoreIndex> ChannelStore::snapshot() const {
  std::lock_guard lock(snapshot_mu_);
  return index_;
}

void ChannelStore::commit(const std::vector<json>& records) {
  std::string next = log_;
  auto index = std::make_shared<StoreIndex>(*snapshot());
  for (const auto& r : records) {
    apply_record(*index, r);
    next += r.dump();
    next += '\n';
  }
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  const fs::path tmp = path_.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << next;
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path_);
  log_ = std::move(next);
  std::error_code ec;
  loaded_mtime_ = fs::last_write_time(path_, ec);
  loaded_size_ = log_.size();
  std::lock_guard lock(snapshot_mu_);
  index_ = std::move(index);
}

std::vector<Channel> ChannelStore::add_channels(const std::vector<Channel>& channels) {
  std::lock_guard lock(writer_);
  StoreLease lease(path_);
  load_locked();
  const auto current = snapshot();
  std::set<std::string> seen;
  std::vector<Channel> added;
  std::vector<json> records;
  for (const auto& c : channels) {
    if (c.products.empty()) {
      throw ValidationError("channel " + c.channel_id + " has no products");
    }
    if (current->channels.contains(c.channel_id) || !seen.insert(c.channel_id).second) {
      continue;
    }
    added.push_back(c);
    records.push_back(channel_record(c));
  }
  if (!records.empty()) commit(records);
  return added;
}

Channel ChannelStore::review(const std::string& channel_id, Decision decision,
                             const std::vector<std::string>& removed_products,
                             const std::string& reviewer) {
  std::lock_guard lock(writer_);
  StoreLease lease(path_);
  load_locked();
  const auto current = snapshot();
  auto it = current->channels.find(channel_id);
  if (it == current->channels.end()) {
    throw NotFoundError("no channel " + channel_id);
  }
  if (it->second.status != ChannelStatus::kPending) {
    throw ConflictError("channel " + channel_id + " is already " +
                        std::string(to_string(it->second.status)));
  }
  std::set<std::string> members;
  for (const auto& p : it->second.products) members.insert(p.product_id);
  std::set<std::string> removed;
  for (const auto& id : removed_products) {
    if (!members.contains(id)) {
      throw ValidationError("product " + id + " is not in channel " + channel_id);
    }
    removed.insert(id);
  }
  if (decision == Decision::kAccept &&
      members.size() - removed.size() < std::max<std::size_t>(min_products_, 1)) {
    throw ValidationError("accepting would leave " +
                          std::to_string(members.size() - removed.size()) +
                          " products, minimum is " + std::to_string(min_products_));
  }
  ReviewEvent e{channel_id, decision, reviewer,
                std::vector<std::string>(removed.begin(), removed.end()),
                clock_->now_ms()};
  commit({review_to_json(e)});
  return snapshot()->channels.at(channel_id);
}

double ChannelStore::acceptance_rate(
    std::optional<std::pair<std::int64_t, std::int64_t>> window) const {
  const auto index = snapshot();
  std::size_t published = 0;
  std::size_t reviewed = 0;
  for (const auto& r : index->reviews) {
    if (window && (r.timestamp < window->first || r.timestamp > window->second)) {
      continue;
    }
    ++reviewed;
    if (r.decision == Decision::kAccept) ++published;
  }
  if (reviewed == 0) throw ValidationError("no reviewed channels in window");
  return 100.0 * static_cast<double>(published) / static_cast<double>(reviewed);
}

void ChannelStore::export_channels(const fs::path& out) const {
  const auto index = snapshot();
  std::vector<json> records;
  for (const auto& id : index->order) records.push_back(index->channels.at(id).to_json());
  write_jsonl(out, records);
}

}  // namespace estc
