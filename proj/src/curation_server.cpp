#include "chopnet/curation_server.hpp"

#include <charconv>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "chopnet/error.hpp"

namespace chopnet {

namespace {

using ordered_json = nlohmann::ordered_json;

void send_error(httplib::Response& res, int status, std::string_view error, const std::string& message) {
  res.status = status;
  ordered_json j;
  j["error"] = error;
  j["message"] = message;
  res.set_content(j.dump(), "application/json");
}

void send_library_error(httplib::Response& res, const Error& e) {
  int status = 500;
  switch (e.code()) {
    case ErrorCode::NotFound: status = 404; break;
    case ErrorCode::BadPagination: status = 400; break;
    default: break;
  }
  send_error(res, status, to_string(e.code()), e.detail());
}

std::optional<std::size_t> parse_count(const std::string& text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

}  // namespace

struct CurationServer::Impl {
  CurationStore& store;
  httplib::Server server;

  explicit Impl(CurationStore& s) : store(s) {
    // The library default is SO_REUSEPORT, which would let a second server
    // share a busy port silently.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
  }

  void routes(const std::optional<std::filesystem::path>& ui_dir) {
    server.Get("/api/classes", [this](const httplib::Request&, httplib::Response& res) {
      ordered_json j = ordered_json::array();
      for (const auto& c : store.classes()) j.push_back({{"id", c.id}, {"name", c.name}});
      res.set_content(j.dump(), "application/json");
    });

    server.Get("/api/tiles", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t offset = 0;
      std::size_t limit = 50;
      if (req.has_param("offset")) {
        const auto v = parse_count(req.get_param_value("offset"));
        if (!v) return send_error(res, 400, "BadPagination", "offset must be a non-negative integer");
        offset = *v;
      }
      if (req.has_param("limit")) {
        const auto v = parse_count(req.get_param_value("limit"));
        if (!v) return send_error(res, 400, "BadPagination", "limit must be an integer in [1, 1000]");
        limit = *v;
      }
      std::optional<int> label;
      if (req.has_param("label") && !req.get_param_value("label").empty()) {
        label = resolve_label(store.classes(), req.get_param_value("label"));
        if (!label) return send_error(res, 400, "BadRequest", "unknown label '" + req.get_param_value("label") + "'");
      }
      std::optional<bool> rejected;
      if (req.has_param("rejected") && !req.get_param_value("rejected").empty()) {
        const auto v = req.get_param_value("rejected");
        if (v == "true") {
          rejected = true;
        } else if (v == "false") {
          rejected = false;
        } else {
          return send_error(res, 400, "BadRequest", "rejected must be true or false");
        }
      }
      try {
        const TilePage page = store.list_tiles(offset, limit, label, rejected);
        ordered_json j;
        j["total"] = page.total;
        j["offset"] = page.offset;
        j["limit"] = page.limit;
        auto tiles = ordered_json::array();
        for (const auto& r : page.records) tiles.push_back(record_to_json(r));
        j["tiles"] = std::move(tiles);
        res.set_content(j.dump(), "application/json");
      } catch (const Error& e) {
        send_library_error(res, e);
      }
    });

    server.Get(R"(/api/tiles/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const auto bytes = store.tile_image(req.matches[1]);
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
      } catch (const Error& e) {
        send_library_error(res, e);
      }
    });

    server.Post(R"(/api/tiles/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("rejected") || !body["rejected"].is_boolean()) {
        return send_error(res, 400, "BadRequest", "body must be {\"rejected\": true|false}");
      }
      try {
        const TileRecord r = store.post_decision(req.matches[1], body["rejected"].get<bool>());
        res.set_content(record_to_json(r).dump(), "application/json");
      } catch (const Error& e) {
        send_library_error(res, e);
      }
    });

    server.Get("/api/export/rejects", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(store.export_reject_list(), "text/plain");
    });

    if (ui_dir && std::filesystem::is_directory(*ui_dir)) {
      server.set_mount_point("/", ui_dir->string());
    } else {
      server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            "<!doctype html><title>chopnet curation</title>"
            "<p>No UI bundle configured; start with --ui-dir to serve the review grid. "
            "The JSON API is available under /api/.</p>",
            "text/html");
      });
    }

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) send_error(res, 404, "NotFound", "no such endpoint");
    });
  }
};

CurationServer::CurationServer(CurationStore& store, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(store)) {
  impl_->routes(ui_dir);
}

CurationServer::~CurationServer() { stop(); }

int CurationServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
  return bound;
}

void CurationServer::run() { impl_->server.listen_after_bind(); }

void CurationServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool CurationServer::running() const { return impl_->server.is_running(); }

}  // namespace chopnet
