#include <httplib.h>

#include <algorithm>
#include <cctype>

#include "bam/service.hpp"

namespace bam {

struct HttpServer::Impl {
    Session& session;
    ServeOptions options;
    httplib::Server server;
    int port = -1;

    Impl(Session& s, ServeOptions o) : session(s), options(std::move(o)) {}

    void dispatch(const httplib::Request& in, httplib::Response& out) {
        HttpRequest req;
        req.method = in.method;
        req.path = in.path;
        req.body = in.body;
        for (const auto& [k, v] : in.params) req.query.emplace(k, v);
        for (const auto& [k, v] : in.headers) {
            std::string key = k;
            std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
            req.headers.emplace(std::move(key), v);
        }
        auto res = session.handle(req);
        out.status = res.status;
        out.set_content(res.body.dump(), "application/json");
    }
};

HttpServer::HttpServer(Session& session, ServeOptions options)
    : impl_(std::make_unique<Impl>(session, std::move(options))) {
    auto& srv = impl_->server;
    if (impl_->options.staticDir && !srv.set_mount_point("/", impl_->options.staticDir->string())) {
        throw Error("static directory not found: " + impl_->options.staticDir->string());
    }
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    auto handler = [this](const httplib::Request& in, httplib::Response& out) { impl_->dispatch(in, out); };
    srv.Get(".*", handler);
    srv.Post(".*", handler);
    srv.Delete(".*", handler);
    srv.Put(".*", handler);
}

HttpServer::~HttpServer() {
    stop();
}

int HttpServer::bind() {
    auto& o = impl_->options;
    if (o.port == 0) impl_->port = impl_->server.bind_to_any_port(o.host);
    else impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
    if (impl_->port < 0) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
    return impl_->port;
}

void HttpServer::run() {
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

} // namespace bam
