#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "estc/store.h"

namespace httplib {
class Server;
}

namespace estc {

inline constexpr std::size_t kPageSize = 20;

// JSON review API over a ChannelStore:
//   GET  /api/channels?status=pending|published|rejected&page=N  (1-based)
//   GET  /api/channels/{id}
//   POST /api/channels/{id}/decision  {decision, removed_products[], reviewer}
//   GET  /api/stats
// Errors are {"error": message} with 400 (bad request), 404 (unknown
// channel), 409 (already decided) or 422 (decision violates invariants).
class ReviewServer {
 public:
  ReviewServer(ChannelStore& store,
               std::optional<std::filesystem::path> static_dir = {});
  ~ReviewServer();

  // Binds and serves until stop(). Returns false if binding failed.
  bool listen(const std::string& host, int port);
  // Binds to a free port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  void routes();

  ChannelStore& store_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace estc
