#pragma once

#include <string>

#include "httplib.h"
#include "json.hpp"

#include "histmod/error.hpp"
#include "histmod/study.hpp"

namespace histmod::study {

/// HTTP/JSON front end of a StudyService.
///   POST /studies                    create a study
///   POST /studies/{id}/sessions      open a participant session
///   GET  /sessions/{id}/next         next unanswered question
///   POST /sessions/{id}/responses    record a positional answer
///   GET  /studies/{id}/report        aggregate report
class StudyServer {
public:
    explicit StudyServer(StudyService& service) : service_(service) {
        server_.Post("/studies", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, 201, [&] { return service_.create_study(parse(req)); });
        });
        server_.Post(R"(/studies/([^/]+)/sessions)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, 201, [&] { return service_.open_session(req.matches[1], parse(req)); });
        });
        server_.Get(R"(/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, 200, [&] { return service_.next_question(req.matches[1]); });
        });
        server_.Post(R"(/sessions/([^/]+)/responses)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, 201, [&] { return service_.record_response(req.matches[1], parse(req)); });
        });
        server_.Get(R"(/studies/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, 200, [&] { return service_.report(req.matches[1]); });
        });
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
    }

    /// Serves static files (e.g. a participant UI bundle) under "/".
    bool mount_static(const std::string& dir) { return server_.set_mount_point("/", dir); }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void wait_until_ready() const { server_.wait_until_ready(); }
    void stop() { server_.stop(); }

private:
    StudyService& service_;
    httplib::Server server_;

    static nlohmann::json parse(const httplib::Request& req) {
        if (req.body.empty()) return nlohmann::json::object();
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("study", std::string("request body is not JSON: ") + e.what());
        }
    }

    template <typename Fn>
    static void handle(httplib::Response& res, int ok_status, Fn&& fn) {
        auto send = [&](int status, const nlohmann::json& body) {
            res.status = status;
            res.set_content(body.dump(), "application/json");
        };
        try {
            send(ok_status, fn());
        } catch (const NotFoundError& e) {
            send(404, {{"error", e.what()}});
        } catch (const ConflictError& e) {
            send(409, {{"error", e.what()}});
        } catch (const ValidationError& e) {
            send(400, {{"error", e.what()}});
        } catch (const InputError& e) {
            send(400, {{"error", e.what()}});
        } catch (const std::exception& e) {
            send(500, {{"error", e.what()}});
        }
    }
};

} // namespace histmod::study
