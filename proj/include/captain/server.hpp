#ifndef CAPTAIN_SERVER_HPP
#define CAPTAIN_SERVER_HPP

// HTTP + WebSocket front end for SessionManager.
//
//   GET  /cases                   case ids
//   GET  /cases/{id}/volume       CAPV1 bytes
//   GET  /cases/{id}/plan         CAPP1 bytes
//   POST /sessions                {"case_id":..., "guidance_enabled":bool}
//   POST /sessions/{id}/finish    metrics, log persisted server-side
//   WS   /sessions/{id}/stream    pose frames in, tick frames out
//
// One blocking worker thread per connection; the acceptor runs on an
// io_context thread.

#include <sys/socket.h>

#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "captain/error.hpp"
#include "captain/service.hpp"

namespace captain {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

inline http::status status_for(Errc e) {
  switch (e) {
    case Errc::UnknownCase:
    case Errc::UnknownSession: return http::status::not_found;
    case Errc::SessionClosed: return http::status::conflict;
    case Errc::ResourceExhausted: return http::status::service_unavailable;
    case Errc::MalformedMessage:
    case Errc::InvalidArgument: return http::status::bad_request;
    default: return http::status::internal_server_error;
  }
}

namespace server_detail {

inline std::vector<std::string> split_path(std::string_view target) {
  const auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= target.size()) {
    auto slash = target.find('/', pos);
    if (slash == std::string_view::npos) slash = target.size();
    if (slash > pos) parts.emplace_back(target.substr(pos, slash - pos));
    pos = slash + 1;
  }
  return parts;
}

inline std::string_view target_of(const http::request<http::string_body>& req) {
  return {req.target().data(), req.target().size()};
}

}  // namespace server_detail

class Server {
 public:
  /// Binds immediately; throws Error(IoError) if the port is unavailable.
  Server(SessionManager& sessions, const std::string& address, unsigned short port)
      : sessions_(sessions), acceptor_(ioc_) {
    beast::error_code ec;
    const tcp::endpoint ep(net::ip::make_address(address, ec), port);
    if (ec) throw Error(Errc::IoError, "bad address " + address);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error(Errc::IoError, "cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
  }

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
    beast::error_code ec;
    acceptor_.close(ec);
    {
      std::lock_guard lock(mu_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    std::unique_lock lock(mu_);
    idle_.wait(lock, [this] { return active_ == 0; });
  }

 private:
  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      if (stopped_) return;
      {
        std::lock_guard lock(mu_);
        ++active_;
        open_fds_.insert(socket.native_handle());
      }
      std::thread([this, s = std::move(socket)]() mutable { serve_connection(std::move(s)); }).detach();
      do_accept();
    });
  }

  void release(int fd) {
    std::lock_guard lock(mu_);
    open_fds_.erase(fd);
  }

  void done() {
    std::lock_guard lock(mu_);
    --active_;
    idle_.notify_all();
  }

  void serve_connection(tcp::socket socket) {
    const int fd = socket.native_handle();
    try {
      beast::flat_buffer buffer;
      for (;;) {
        http::request<http::string_body> req;
        beast::error_code ec;
        http::read(socket, buffer, req, ec);
        if (ec) break;
        if (websocket::is_upgrade(req)) {
          serve_stream(std::move(socket), std::move(req), fd);
          done();
          return;
        }
        auto res = handle_http(req);
        http::write(socket, res, ec);
        if (ec || !req.keep_alive()) break;
      }
      release(fd);
      beast::error_code ec;
      socket.shutdown(tcp::socket::shutdown_both, ec);
      socket.close(ec);
    } catch (...) {
      release(fd);
    }
    done();
  }

  template <typename Body>
  static http::response<http::string_body> make_response(const http::request<Body>& req, http::status status,
                                                         std::string body, const char* type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, "captain");
    res.set(http::field::content_type, type);
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  template <typename Body>
  static http::response<http::string_body> json_response(const http::request<Body>& req, http::status status,
                                                         const ordered_json& j) {
    return make_response(req, status, j.dump(), "application/json");
  }

  http::response<http::string_body> handle_http(const http::request<http::string_body>& req) {
    const auto parts = server_detail::split_path(server_detail::target_of(req));
    try {
      if (req.method() == http::verb::get && parts.size() == 1 && parts[0] == "cases") {
        ordered_json j = ordered_json::array();
        for (const auto& id : sessions_.catalog().ids()) j.push_back(id);
        return json_response(req, http::status::ok, j);
      }
      if (req.method() == http::verb::get && parts.size() == 3 && parts[0] == "cases") {
        const auto c = sessions_.catalog().find(parts[1]);
        if (parts[2] == "volume") return make_response(req, http::status::ok, c->volume_bytes, "application/octet-stream");
        if (parts[2] == "plan") return make_response(req, http::status::ok, c->plan_bytes, "application/octet-stream");
      }
      if (req.method() == http::verb::post && parts.size() == 1 && parts[0] == "sessions") {
        const json body = json::parse(req.body(), nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("case_id") || !body["case_id"].is_string())
          throw Error(Errc::MalformedMessage, "body needs case_id");
        bool guidance = true;
        if (auto it = body.find("guidance_enabled"); it != body.end()) {
          if (!it->is_boolean()) throw Error(Errc::MalformedMessage, "guidance_enabled must be boolean");
          guidance = it->get<bool>();
        }
        const auto d = sessions_.create(body["case_id"].get<std::string>(), guidance);
        return json_response(req, http::status::created, descriptor_to_json(d));
      }
      if (req.method() == http::verb::post && parts.size() == 3 && parts[0] == "sessions" && parts[2] == "finish") {
        return json_response(req, http::status::ok, finished_to_json(sessions_.finish(parts[1])));
      }
      ordered_json j;
      j["error"] = "NotFound";
      j["detail"] = std::string(server_detail::target_of(req));
      return json_response(req, http::status::not_found, j);
    } catch (const Error& e) {
      return json_response(req, status_for(e.code()), error_frame(e));
    }
  }

  void serve_stream(tcp::socket socket, http::request<http::string_body> req, int fd) {
    const auto parts = server_detail::split_path(server_detail::target_of(req));
    std::shared_ptr<Session> session;
    try {
      if (parts.size() != 3 || parts[0] != "sessions" || parts[2] != "stream")
        throw Error(Errc::UnknownSession, std::string(server_detail::target_of(req)));
      session = sessions_.get(parts[1]);
      if (!session->attach_stream()) throw Error(Errc::SessionClosed, "stream already used or session finished");
    } catch (const Error& e) {
      beast::error_code ec;
      http::write(socket, json_response(req, status_for(e.code()), error_frame(e)), ec);
      release(fd);
      socket.shutdown(tcp::socket::shutdown_both, ec);
      return;
    }

    websocket::stream<tcp::socket> ws(std::move(socket));
    beast::error_code ec;
    ws.accept(req, ec);
    if (!ec) {
      beast::flat_buffer buffer;
      for (;;) {
        ws.read(buffer, ec);
        if (ec) break;
        const std::string frame = beast::buffers_to_string(buffer.data());
        buffer.consume(buffer.size());
        const std::string reply = session->handle_frame(frame);
        ws.text(true);
        ws.write(net::buffer(reply), ec);
        if (ec) break;
      }
    }
    release(fd);
    if (ws.is_open()) ws.close(websocket::close_code::normal, ec);
  }

  SessionManager& sessions_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::thread io_thread_;
  std::atomic<bool> stopped_{false};
  std::mutex mu_;
  std::condition_variable idle_;
  std::set<int> open_fds_;
  int active_ = 0;
};

}  // namespace captain

#endif  // CAPTAIN_SERVER_HPP
