#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bam/engine.hpp"
#include "bam/errors.hpp"

namespace bam {

/// Transport-neutral request. `path` excludes the query string.
struct HttpRequest {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers;  // lower-case names
};

struct HttpResponse {
    int status = 200;
    nlohmann::json body;
};

struct CommittedEvent {
    std::uint64_t id = 0;
    SecurityEvent event;
};

/// One operator session: a built model, the committed event log and the
/// report computed from it.
///
/// Every mutation (a batch of events, or a retraction) bumps the revision by
/// one and is appended to the log file before it becomes visible. Reads and
/// what-if requests work on immutable snapshots, so they never block on
/// inference done by a writer.
class Session {
public:
    /// Replays `logPath` when it exists. Throws SchemaError on a corrupt log.
    explicit Session(Model model, std::optional<std::filesystem::path> logPath = std::nullopt, unsigned workers = 1);

    struct Snapshot {
        std::uint64_t revision = 0;
        std::vector<CommittedEvent> log;  // commit order
        EvidenceState state;
        RiskReport report;
    };

    std::shared_ptr<const Snapshot> snapshot() const;
    std::uint64_t revision() const { return snapshot()->revision; }
    const Model& model() const { return model_; }

    /// Commits a batch. `expectedRevision` makes the write conditional.
    /// Throws RevisionConflict, UnknownId, ImpossibleEvidence (nothing committed).
    std::shared_ptr<const Snapshot> commit(const std::vector<SecurityEvent>& events,
                                           std::optional<std::uint64_t> expectedRevision = std::nullopt);
    std::shared_ptr<const Snapshot> retract(std::uint64_t eventId,
                                            std::optional<std::uint64_t> expectedRevision = std::nullopt);
    /// Report for the committed events plus `events`, without committing.
    RiskReport what_if(const std::vector<SecurityEvent>& events) const;

    HttpResponse handle(const HttpRequest& request);

private:
    struct Evaluated {
        EvidenceState state;
        RiskReport report;
    };
    // Applies events in timestamp order, ties in commit order.
    Evaluated evaluate(const std::vector<SecurityEvent>& events) const;
    RiskReport what_if(const Snapshot& base, const std::vector<SecurityEvent>& events) const;
    void append_log(const nlohmann::json& record);
    void check_revision(const Snapshot& current, std::optional<std::uint64_t> expected) const;

    HttpResponse get_model() const;
    HttpResponse get_risk() const;
    HttpResponse get_events() const;
    HttpResponse explain(const std::string& source, const HttpRequest& request) const;

    Model model_;
    std::optional<std::filesystem::path> logPath_;
    unsigned workers_;
    std::uint64_t nextId_ = 1;
    mutable std::shared_mutex mutex_;  // guards current_ and nextId_
    std::mutex writer_;                // serializes mutations
    std::shared_ptr<const Snapshot> current_;
};

class RevisionConflict : public Error {
public:
    RevisionConflict(std::uint64_t expected, std::uint64_t actual);
    std::uint64_t actual() const noexcept { return actual_; }

private:
    std::uint64_t actual_;
};

/// Accepts a single event object, an array of events, or {"events": [...]}.
std::vector<SecurityEvent> parse_event_batch(const nlohmann::json& body);

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> staticDir;
};

/// HTTP front end over Session::handle, with optional static file serving
/// for the console bundle.
class HttpServer {
public:
    HttpServer(Session& session, ServeOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds the socket and returns the port. Throws Error on failure.
    int bind();
    /// Serves until stop(). bind() must have succeeded.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// BAM_PORT when set and valid, `fallback` otherwise.
int port_from_env(int fallback);

} // namespace bam
