#include "estc/review_server.h"

#include <charconv>

#include "estc/errors.h"
#include "httplib.h"

namespace estc {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

std::optional<std::size_t> parse_page(const std::string& s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) return std::nullopt;
  return v;
}

json stats_json(const StoreIndex& index) {
  std::size_t accepted = 0;
  for (const auto& r : index.reviews) accepted += r.decision == Decision::kAccept;
  json rate = nullptr;
  if (!index.reviews.empty()) {
    rate = 100.0 * static_cast<double>(accepted) /
           static_cast<double>(index.reviews.size());
  }
  return {{"pending", index.count(ChannelStatus::kPending)},
          {"published", index.count(ChannelStatus::kPublished)},
          {"rejected", index.count(ChannelStatus::kRejected)},
          {"acceptance_rate", rate}};
}

}  // namespace

ReviewServer::ReviewServer(ChannelStore& store,
                           std::optional<std::filesystem::path> static_dir)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
  routes();
  if (static_dir && !server_->set_mount_point("/", static_dir->string())) {
    throw ValidationError("static directory not found: " + static_dir->string());
  }
}

ReviewServer::~ReviewServer() = default;

void ReviewServer::routes() {
  server_->Get("/api/channels", [this](const httplib::Request& req,
                                       httplib::Response& res) {
    std::optional<ChannelStatus> status;
    std::size_t page = 1;
    try {
      if (req.has_param("status")) {
        status = channel_status_from_string(req.get_param_value("status"));
      }
    } catch (const ValidationError& e) {
      return send_error(res, 400, e.what());
    }
    if (req.has_param("page")) {
      auto p = parse_page(req.get_param_value("page"));
      if (!p) return send_error(res, 400, "page must be a positive integer");
      page = *p;
    }
    store_.refresh();
    const auto index = store_.snapshot();
    std::vector<const Channel*> matching;
    for (const auto& id : index->order) {
      const auto& c = index->channels.at(id);
      if (!status || c.status == *status) matching.push_back(&c);
    }
    json items = json::array();
    for (std::size_t i = (page - 1) * kPageSize;
         i < matching.size() && i < page * kPageSize; ++i) {
      items.push_back(matching[i]->to_json());
    }
    send_json(res, 200,
              {{"channels", items},
               {"page", page},
               {"page_size", kPageSize},
               {"total", matching.size()}});
  });

  server_->Get(R"(/api/channels/([^/]+))", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
    store_.refresh();
    const auto index = store_.snapshot();
    auto it = index->channels.find(req.matches[1].str());
    if (it == index->channels.end()) {
      return send_error(res, 404, "no channel " + req.matches[1].str());
    }
    send_json(res, 200, it->second.to_json());
  });

  server_->Post(R"(/api/channels/([^/]+)/decision)",
                [this](const httplib::Request& req, httplib::Response& res) {
    Decision decision;
    std::vector<std::string> removed;
    std::string reviewer;
    try {
      const auto body = json::parse(req.body);
      decision = decision_from_string(body.at("decision").get<std::string>());
      removed = body.value("removed_products", std::vector<std::string>{});
      reviewer = body.value("reviewer", std::string{});
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("bad request body: ") + e.what());
    } catch (const ValidationError& e) {
      return send_error(res, 400, e.what());
    }
    if (trim(reviewer).empty()) return send_error(res, 400, "reviewer is required");
    try {
      const auto updated = store_.review(req.matches[1].str(), decision, removed, reviewer);
      send_json(res, 200, updated.to_json());
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const ValidationError& e) {
      send_error(res, 422, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  server_->Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
    store_.refresh();
    send_json(res, 200, stats_json(*store_.snapshot()));
  });
}

bool ReviewServer::listen(const std::string& host, int port) {
  return server_->listen(host, port);
}

int ReviewServer::bind_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool ReviewServer::listen_after_bind() { return server_->listen_after_bind(); }

void ReviewServer::wait_until_ready() const { server_->wait_until_ready(); }

void ReviewServer::stop() { server_->stop(); }

}  // namespace estc
