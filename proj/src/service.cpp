#include "bam/service.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bam/errors.hpp"
#include "bam/inference.hpp"

namespace bam {

using nlohmann::json;

RevisionConflict::RevisionConflict(std::uint64_t expected, std::uint64_t actual)
    : Error("stale revision " + std::to_string(expected) + ", current is " + std::to_string(actual)),
      actual_(actual) {}

std::vector<SecurityEvent> parse_event_batch(const json& body) {
    const json* list = &body;
    if (body.is_object() && body.contains("events")) list = &body["events"];
    std::vector<SecurityEvent> out;
    if (list->is_array()) {
        for (std::size_t i = 0; i < list->size(); ++i) {
            try {
                out.push_back(parse_event((*list)[i]));
            } catch (const SchemaError& e) {
                throw SchemaError("/events/" + std::to_string(i) + e.path(), e.what());
            }
        }
    } else if (list->is_object()) {
        out.push_back(parse_event(*list));
    } else {
        throw SchemaError("", "expected an event, an array of events or {\"events\": [...]}");
    }
    return out;
}

namespace {

std::optional<std::uint64_t> parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < path.size()) {
        if (path[i] == '/') {
            ++i;
            continue;
        }
        std::size_t j = path.find('/', i);
        if (j == std::string_view::npos) j = path.size();
        parts.emplace_back(path.substr(i, j - i));
        i = j;
    }
    return parts;
}

HttpResponse error_response(int status, std::string_view message) {
    return {status, json{{"error", message}}};
}

json committed_json(const CommittedEvent& c) {
    return {{"id", c.id}, {"event", to_json(c.event)}};
}

std::string_view evidence_name(EvidenceMode m) {
    switch (m) {
    case EvidenceMode::HardPositive:
        return "HardPositive";
    case EvidenceMode::HardNegative:
        return "HardNegative";
    case EvidenceMode::Soft:
        return "Soft";
    }
    return "?";
}

} // namespace

Session::Session(Model model, std::optional<std::filesystem::path> logPath, unsigned workers)
    : model_(std::move(model)), logPath_(std::move(logPath)), workers_(workers) {
    auto snap = std::make_shared<Snapshot>();
    if (logPath_ && std::filesystem::exists(*logPath_)) {
        std::ifstream in(*logPath_);
        std::string line;
        std::size_t lineNo = 0;
        while (std::getline(in, line)) {
            ++lineNo;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                auto rec = json::parse(line);
                auto op = rec.at("op").get<std::string>();
                if (op == "commit") {
                    for (const auto& e : rec.at("events")) {
                        CommittedEvent c{e.at("id").get<std::uint64_t>(), parse_event(e.at("event"))};
                        nextId_ = std::max(nextId_, c.id + 1);
                        snap->log.push_back(std::move(c));
                    }
                } else if (op == "retract") {
                    auto id = rec.at("id").get<std::uint64_t>();
                    std::erase_if(snap->log, [&](const CommittedEvent& c) { return c.id == id; });
                } else {
                    throw SchemaError("/op", "unknown log operation '" + op + "'");
                }
                ++snap->revision;
            } catch (const SchemaError& e) {
                throw SchemaError(logPath_->string() + ": line " + std::to_string(lineNo) + e.path(), e.what());
            } catch (const json::exception& e) {
                throw SchemaError(logPath_->string() + ": line " + std::to_string(lineNo), e.what());
            }
        }
    }
    std::vector<SecurityEvent> events;
    for (const auto& c : snap->log) events.push_back(c.event);
    auto ev = evaluate(events);
    snap->state = std::move(ev.state);
    snap->report = std::move(ev.report);
    current_ = std::move(snap);
}

std::shared_ptr<const Session::Snapshot> Session::snapshot() const {
    std::shared_lock lock(mutex_);
    return current_;
}

Session::Evaluated Session::evaluate(const std::vector<SecurityEvent>& events) const {
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return events[a].timestamp < events[b].timestamp; });
    Evaluated out;
    for (auto i : order) out.state = apply_event(model_, std::move(out.state), events[i]);
    out.report = assess(model_, out.state, workers_);
    return out;
}

void Session::check_revision(const Snapshot& current, std::optional<std::uint64_t> expected) const {
    if (expected && *expected != current.revision) throw RevisionConflict(*expected, current.revision);
}

void Session::append_log(const json& record) {
    if (!logPath_) return;
    std::ofstream out(*logPath_, std::ios::app);
    out << record.dump() << '\n';
    out.flush();
    if (!out) throw Error("cannot append to event log " + logPath_->string());
}

std::shared_ptr<const Session::Snapshot> Session::commit(const std::vector<SecurityEvent>& events,
                                                         std::optional<std::uint64_t> expectedRevision) {
    std::lock_guard writer(writer_);
    auto cur = snapshot();
    check_revision(*cur, expectedRevision);

    auto next = std::make_shared<Snapshot>();
    next->revision = cur->revision + 1;
    next->log = cur->log;
    json records = json::array();
    std::uint64_t id = nextId_;
    for (const auto& e : events) {
        next->log.push_back({id, e});
        records.push_back(committed_json(next->log.back()));
        ++id;
    }
    std::vector<SecurityEvent> all;
    for (const auto& c : next->log) all.push_back(c.event);
    auto ev = evaluate(all);  // throws before anything is persisted
    next->state = std::move(ev.state);
    next->report = std::move(ev.report);

    append_log({{"op", "commit"}, {"revision", next->revision}, {"events", records}});
    std::unique_lock lock(mutex_);
    nextId_ = id;
    current_ = next;
    return next;
}

std::shared_ptr<const Session::Snapshot> Session::retract(std::uint64_t eventId,
                                                          std::optional<std::uint64_t> expectedRevision) {
    std::lock_guard writer(writer_);
    auto cur = snapshot();
    check_revision(*cur, expectedRevision);
    auto it = std::find_if(cur->log.begin(), cur->log.end(), [&](const CommittedEvent& c) { return c.id == eventId; });
    if (it == cur->log.end()) throw UnknownId(std::to_string(eventId), "unknown event id");

    auto next = std::make_shared<Snapshot>();
    next->revision = cur->revision + 1;
    next->log = cur->log;
    next->log.erase(next->log.begin() + (it - cur->log.begin()));
    std::vector<SecurityEvent> all;
    for (const auto& c : next->log) all.push_back(c.event);
    auto ev = evaluate(all);
    next->state = std::move(ev.state);
    next->report = std::move(ev.report);

    append_log({{"op", "retract"}, {"revision", next->revision}, {"id", eventId}});
    std::unique_lock lock(mutex_);
    current_ = next;
    return next;
}

RiskReport Session::what_if(const std::vector<SecurityEvent>& events) const {
    return what_if(*snapshot(), events);
}

RiskReport Session::what_if(const Snapshot& base, const std::vector<SecurityEvent>& events) const {
    std::vector<SecurityEvent> all;
    for (const auto& c : base.log) all.push_back(c.event);
    all.insert(all.end(), events.begin(), events.end());
    return evaluate(all).report;
}

HttpResponse Session::get_model() const {
    const auto& m = model_;
    json bats = json::array();
    for (const auto& bat : m.bam.bats) {
        bats.push_back({{"source", m.tag.node_id(bat.source())}, {"nodes", bat.size()}, {"edges", bat.edge_count()}});
    }
    return {200,
            {{"revision", revision()},
             {"topology", to_json(m.topology)},
             {"params", to_json(m.params)},
             {"tag", to_json(m.tag)},
             {"bam", {{"bats", bats}}},
             {"sensors", m.sensorIds}}};
}

HttpResponse Session::get_risk() const {
    auto cur = snapshot();
    return {200, {{"revision", cur->revision}, {"report", to_json(cur->report)}}};
}

HttpResponse Session::get_events() const {
    auto cur = snapshot();
    json list = json::array();
    for (const auto& c : cur->log) list.push_back(committed_json(c));
    return {200, {{"revision", cur->revision}, {"events", list}}};
}

HttpResponse Session::explain(const std::string& source, const HttpRequest& request) const {
    auto src = model_.tag.find_node(source);
    if (!src) throw UnknownId(source, "unknown attack source");
    auto cur = snapshot();
    const Bat& bat = model_.bam.bats.at(*src);
    auto evidence = resolve_evidence(model_, cur->state).at(*src);
    Marginals m;
    try {
        m = infer_marginals_unchecked(bat, evidence);
    } catch (const ImpossibleEvidence&) {
        throw ImpossibleEvidence(source);
    }
    std::map<BatNodeId, EvidenceItem> byNode;
    for (const auto& e : evidence) byNode[e.node] = e;

    std::optional<TagNodeIndex> only;
    if (auto it = request.query.find("asset"); it != request.query.end()) {
        only = model_.tag.find_node(it->second);
        if (!only) throw UnknownId(it->second, "unknown asset");
    }

    // Best instance of each host inside this BAT.
    std::map<TagNodeIndex, BatNodeId> best;
    for (BatNodeId i = 0; i < bat.size(); ++i) {
        if (!bat.is_topological(i)) continue;
        auto h = bat.node(i).ref;
        auto it = best.find(h);
        if (it == best.end() || m[i] > m[it->second]) best[h] = i;
    }
    if (only && !best.count(*only)) throw UnknownId(model_.tag.node_id(*only), "asset not reachable in this BAT");

    auto node_json = [&](BatNodeId id) {
        json j{{"node", id}, {"kind", to_string(bat.node(id).kind)}, {"probability", m[id]}};
        if (auto e = byNode.find(id); e != byNode.end()) {
            j["evidence"] = evidence_name(e->second.mode);
            if (e->second.mode == EvidenceMode::Soft) j["evidenceP"] = e->second.p;
        }
        return j;
    };

    json assets = json::array();
    for (const auto& [host, id] : best) {
        if (only && host != *only) continue;
        std::vector<BatNodeId> chain;
        for (BatNodeId at = id; at != kNoNode; at = bat.node(at).pathParent) chain.push_back(at);
        std::reverse(chain.begin(), chain.end());
        json hops = json::array();
        for (auto topo : chain) {
            json hop = node_json(topo);
            hop["host"] = model_.tag.node_id(bat.node(topo).ref);
            if (bat.node(topo).kind == NodeKind::Topological) {
                BatNodeId step = bat.parents(topo)[0];
                const auto& tstep = model_.tag.steps[bat.node(step).ref];
                json via = node_json(step);
                via["source"] = model_.tag.node_id(tstep.source);
                via["target"] = model_.tag.node_id(tstep.target);
                via["type"] = to_string(tstep.type);
                for (BatNodeId k = step + 1; k < bat.size() && k < topo; ++k) {
                    if (bat.node(k).kind == NodeKind::Sensor && bat.parents(k)[0] == step) via["sensor"] = node_json(k);
                }
                hop["via"] = std::move(via);
            }
            hops.push_back(std::move(hop));
        }
        assets.push_back({{"host", model_.tag.node_id(host)}, {"probability", m[id]}, {"path", hops}});
    }
    return {200, {{"revision", cur->revision}, {"source", source}, {"nodes", bat.size()}, {"assets", assets}}};
}

HttpResponse Session::handle(const HttpRequest& req) {
    auto parts = split_path(req.path);
    auto body_json = [&]() -> json {
        try {
            return json::parse(req.body);
        } catch (const json::parse_error& e) {
            throw SchemaError("", std::string("invalid JSON body: ") + e.what());
        }
    };
    auto expected_revision = [&](const json* body) -> std::optional<std::uint64_t> {
        std::optional<std::string> raw;
        if (auto it = req.headers.find("if-match"); it != req.headers.end()) raw = it->second;
        if (auto it = req.query.find("revision"); it != req.query.end()) raw = it->second;
        if (raw) {
            std::string s = *raw;
            std::erase(s, '"');
            auto v = parse_u64(s);
            if (!v) throw SchemaError("/revision", "revision must be a non-negative integer");
            return v;
        }
        if (body && body->is_object() && body->contains("revision")) {
            const auto& r = (*body)["revision"];
            if (!r.is_number_unsigned()) throw SchemaError("/revision", "revision must be a non-negative integer");
            return r.get<std::uint64_t>();
        }
        return std::nullopt;
    };

    try {
        if (parts.size() == 1 && parts[0] == "model") {
            if (req.method == "GET") return get_model();
        } else if (parts.size() == 1 && parts[0] == "risk") {
            if (req.method == "GET") return get_risk();
        } else if (parts.size() == 1 && parts[0] == "events") {
            if (req.method == "GET") return get_events();
            if (req.method == "POST") {
                json body = body_json();
                auto events = parse_event_batch(body);
                auto snap = commit(events, expected_revision(&body));
                json ids = json::array();
                for (std::size_t i = snap->log.size() - events.size(); i < snap->log.size(); ++i) {
                    ids.push_back(snap->log[i].id);
                }
                return {200, {{"revision", snap->revision}, {"ids", ids}, {"report", to_json(snap->report)}}};
            }
        } else if (parts.size() == 2 && parts[0] == "events") {
            if (req.method == "DELETE") {
                auto id = parse_u64(parts[1]);
                if (!id) throw UnknownId(parts[1], "unknown event id");
                auto snap = retract(*id, expected_revision(nullptr));
                return {200, {{"revision", snap->revision}, {"report", to_json(snap->report)}}};
            }
        } else if (parts.size() == 1 && parts[0] == "whatif") {
            if (req.method == "POST") {
                auto cur = snapshot();
                auto report = what_if(*cur, parse_event_batch(body_json()));
                return {200, {{"revision", cur->revision}, {"hypothetical", true}, {"report", to_json(report)}}};
            }
        } else if (parts.size() == 3 && parts[0] == "bats" && parts[2] == "explain") {
            if (req.method == "GET") return explain(parts[1], req);
        } else {
            return error_response(404, "no such endpoint: " + req.path);
        }
        return error_response(405, "method " + req.method + " not allowed on " + req.path);
    } catch (const RevisionConflict& e) {
        auto r = error_response(409, e.what());
        r.body["revision"] = e.actual();
        return r;
    } catch (const UnknownId& e) {
        auto r = error_response(404, e.what());
        r.body["id"] = e.id();
        return r;
    } catch (const SchemaError& e) {
        auto r = error_response(400, e.what());
        r.body["path"] = e.path();
        return r;
    } catch (const InvalidArgument& e) {
        return error_response(400, e.what());
    } catch (const ImpossibleEvidence& e) {
        auto r = error_response(422, e.what());
        r.body["batSource"] = e.bat_source();
        return r;
    } catch (const ContradictoryEvidence& e) {
        return error_response(422, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

int port_from_env(int fallback) {
    const char* v = std::getenv("BAM_PORT");
    if (!v) return fallback;
    auto p = parse_u64(v);
    if (!p || *p > 65535) return fallback;
    return static_cast<int>(*p);
}

} // namespace bam
