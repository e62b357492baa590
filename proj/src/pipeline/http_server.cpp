#include <httplib.h>

#include "urbansolar/error.hpp"
#include "urbansolar/log.hpp"
#include "urbansolar/service.hpp"

namespace urbansolar {

struct HttpServer::Impl {
    httplib::Server server;
};

HttpServer::HttpServer(const InferenceService& service, int threads) : impl_(std::make_unique<Impl>()) {
    auto& server = impl_->server;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<size_t>(std::max(1, threads))); };
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        const auto out = service.handle(req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    };
    for (const char* route : {"/health", "/points", "/meta", "/encode", "/generate", "/traverse"}) {
        server.Get(route, forward);
        server.Post(route, forward);
    }
    // unknown routes still get the JSON error contract
    server.set_error_handler([&service](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const auto out = service.handle(req.method, req.path, req.body);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw UsageError("cannot listen on " + host + ":" + std::to_string(port));
    return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace urbansolar
