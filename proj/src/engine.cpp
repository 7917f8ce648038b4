#include "bam/engine.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "bam/errors.hpp"
#include "bam/parallel.hpp"

namespace bam {

using nlohmann::json;

std::set<std::string> sensor_ids(const Topology& t) {
    std::set<std::string> ids;
    for (const auto& h : t.hosts) {
        for (const auto& v : h.vulnerabilities) {
            if (v.sensor) ids.insert(v.sensor->id);
        }
    }
    return ids;
}

Model build_model(Topology topology, const ModelParams& params, unsigned workers) {
    params.validate();
    topology.validate();
    Model m;
    m.topology = std::move(topology);
    m.params = params;
    m.tag = generate_tag(m.topology, params);
    m.priors.reserve(m.tag.nodes.size());
    for (const auto& id : m.tag.nodes) m.priors.push_back(source_prior(m.topology, id, params));
    m.bam = build_bam(m.tag, params, m.priors, workers);
    m.sensorIds = sensor_ids(m.topology);
    return m;
}

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::SensorAlert: return "SensorAlert";
    case EventKind::SensorSilent: return "SensorSilent";
    case EventKind::SensorUnobserved: return "SensorUnobserved";
    case EventKind::HostCompromised: return "HostCompromised";
    case EventKind::HostHealthy: return "HostHealthy";
    }
    return "?";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
    for (auto k : {EventKind::SensorAlert, EventKind::SensorSilent, EventKind::SensorUnobserved,
                   EventKind::HostCompromised, EventKind::HostHealthy}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

SecurityEvent parse_event(const json& j) {
    if (!j.is_object()) throw SchemaError("", "event must be an object");
    SecurityEvent e;
    auto kind = j.find("kind");
    if (kind == j.end() || !kind->is_string()) throw SchemaError("/kind", "missing or non-string event kind");
    auto k = parse_event_kind(kind->get<std::string>());
    if (!k) throw SchemaError("/kind", "unknown event kind '" + kind->get<std::string>() + "'");
    e.kind = *k;
    auto subject = j.find("subjectId");
    if (subject == j.end() || !subject->is_string()) throw SchemaError("/subjectId", "missing or non-string subjectId");
    e.subjectId = subject->get<std::string>();
    if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw SchemaError("/confidence", "expected a number");
        double c = it->get<double>();
        if (!(c >= 0.0 && c <= 1.0)) throw SchemaError("/confidence", "confidence out of range");
        e.confidence = c;
    }
    if (auto it = j.find("timestamp"); it != j.end() && !it->is_null()) {
        if (!it->is_number()) throw SchemaError("/timestamp", "expected a number");
        e.timestamp = it->get<double>();
    }
    if (auto it = j.find("source"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw SchemaError("/source", "expected a string");
        e.source = it->get<std::string>();
    }
    return e;
}

json to_json(const SecurityEvent& e) {
    json j = {{"kind", to_string(e.kind)}, {"subjectId", e.subjectId}, {"timestamp", e.timestamp}};
    if (e.confidence) j["confidence"] = *e.confidence;
    if (e.source) j["source"] = *e.source;
    return j;
}

std::vector<NumberedEvent> parse_event_lines(std::string_view text) {
    std::vector<NumberedEvent> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back({lineNo, parse_event(json::parse(line))});
        } catch (const json::parse_error& e) {
            throw SchemaError("line " + std::to_string(lineNo), std::string("invalid JSON: ") + e.what());
        } catch (const SchemaError& e) {
            throw SchemaError("line " + std::to_string(lineNo) + e.path(), e.what());
        }
    }
    return out;
}

std::vector<SecurityEvent> parse_event_stream(std::string_view text) {
    std::vector<SecurityEvent> out;
    for (auto& n : parse_event_lines(text)) out.push_back(std::move(n.event));
    return out;
}

namespace {

bool is_sensor_event(EventKind k) {
    return k == EventKind::SensorAlert || k == EventKind::SensorSilent || k == EventKind::SensorUnobserved;
}

// Item for a single known observation, without node id.
std::optional<EvidenceItem> item_for(const Observation& o) {
    switch (o.state) {
    case Observation::State::Unobserved: return std::nullopt;
    case Observation::State::Positive:
        return o.confidence ? EvidenceItem::soft(0, *o.confidence) : EvidenceItem::positive(0);
    case Observation::State::Negative:
        return o.confidence ? EvidenceItem::soft(0, 1.0 - *o.confidence) : EvidenceItem::negative(0);
    }
    return std::nullopt;
}

// Grouped sensors fire when any member fires.
std::optional<EvidenceItem> combine_members(const std::vector<Observation>& members) {
    bool allNegative = !members.empty();
    bool allHardNegative = true;
    double softAlert = -1.0;
    double softQuiet = 0.0;
    for (const auto& o : members) {
        if (o.state == Observation::State::Positive) {
            if (!o.confidence) return EvidenceItem::positive(0);
            softAlert = std::max(softAlert, *o.confidence);
            allNegative = false;
        } else if (o.state == Observation::State::Negative) {
            if (o.confidence) {
                allHardNegative = false;
                softQuiet = std::max(softQuiet, 1.0 - *o.confidence);
            }
        } else {
            allNegative = false;
        }
    }
    if (softAlert >= 0.0) return EvidenceItem::soft(0, softAlert);
    if (allNegative) return allHardNegative ? EvidenceItem::negative(0) : EvidenceItem::soft(0, softQuiet);
    return std::nullopt;
}

std::vector<std::optional<EvidenceItem>> step_evidence(const Model& model, const EvidenceState& state) {
    std::vector<std::optional<EvidenceItem>> out(model.tag.steps.size());
    std::vector<Observation> members;
    for (std::size_t i = 0; i < model.tag.steps.size(); ++i) {
        const auto& step = model.tag.steps[i];
        if (!step.sensor) continue;
        const std::string& source = model.tag.node_id(step.source);
        members.clear();
        for (const auto& sensor : step.sensor->memberSensorIds) {
            if (auto it = state.sensors.find({sensor, source}); it != state.sensors.end()) {
                members.push_back(it->second);
            } else if (auto it2 = state.sensors.find({sensor, std::string()}); it2 != state.sensors.end()) {
                members.push_back(it2->second);
            } else {
                members.push_back({state.assumeSilentSensors ? Observation::State::Negative
                                                             : Observation::State::Unobserved,
                                   std::nullopt});
            }
        }
        out[i] = combine_members(members);
    }
    return out;
}

std::vector<std::optional<EvidenceItem>> host_evidence(const Model& model, const EvidenceState& state) {
    std::vector<std::optional<EvidenceItem>> out(model.tag.nodes.size());
    for (std::size_t i = 0; i < model.tag.nodes.size(); ++i) {
        if (auto it = state.hosts.find(model.tag.nodes[i]); it != state.hosts.end()) out[i] = item_for(it->second);
    }
    return out;
}

std::vector<EvidenceItem> bat_evidence(const Bat& bat, const std::vector<std::optional<EvidenceItem>>& steps,
                                       const std::vector<std::optional<EvidenceItem>>& hosts) {
    std::vector<EvidenceItem> items;
    auto nodes = bat.nodes();
    for (BatNodeId id = 0; id < nodes.size(); ++id) {
        const auto& n = nodes[id];
        const std::optional<EvidenceItem>* e = nullptr;
        if (n.kind == NodeKind::Sensor) {
            e = &steps[n.ref];
        } else if (n.kind == NodeKind::Topological || n.kind == NodeKind::AttackSource) {
            e = &hosts[n.ref];
        }
        if (e && *e) {
            EvidenceItem item = **e;
            item.node = id;
            items.push_back(item);
        }
    }
    return items;
}

} // namespace

EvidenceState apply_event(const Model& model, EvidenceState state, const SecurityEvent& event) {
    if (event.confidence && !(*event.confidence >= 0.0 && *event.confidence <= 1.0)) {
        throw InvalidArgument("event confidence out of range");
    }
    Observation obs;
    obs.confidence = event.confidence;
    switch (event.kind) {
    case EventKind::SensorAlert:
    case EventKind::HostCompromised: obs.state = Observation::State::Positive; break;
    case EventKind::SensorSilent:
    case EventKind::HostHealthy: obs.state = Observation::State::Negative; break;
    case EventKind::SensorUnobserved:
        obs.state = Observation::State::Unobserved;
        obs.confidence.reset();
        break;
    }
    if (is_sensor_event(event.kind)) {
        if (!model.sensorIds.contains(event.subjectId)) throw UnknownId(event.subjectId, "unknown sensor");
        std::string source;
        if (event.source) {
            if (!model.topology.find_host(*event.source)) throw UnknownId(*event.source, "unknown source host");
            source = *event.source;
        } else {
            // An unscoped event supersedes every earlier scoped one.
            auto first = state.sensors.lower_bound({event.subjectId, std::string()});
            auto last = first;
            while (last != state.sensors.end() && last->first.first == event.subjectId) ++last;
            state.sensors.erase(first, last);
        }
        state.sensors[{event.subjectId, source}] = obs;
    } else {
        if (event.source) throw InvalidArgument("host events cannot be scoped to a source");
        if (!model.topology.find_host(event.subjectId)) throw UnknownId(event.subjectId, "unknown host");
        state.hosts[event.subjectId] = obs;
    }
    return state;
}

std::vector<std::vector<EvidenceItem>> resolve_evidence(const Model& model, const EvidenceState& state) {
    auto steps = step_evidence(model, state);
    auto hosts = host_evidence(model, state);
    std::vector<std::vector<EvidenceItem>> out;
    out.reserve(model.bam.bats.size());
    for (const auto& bat : model.bam.bats) out.push_back(bat_evidence(bat, steps, hosts));
    return out;
}

std::string_view to_string(RiskLevel level) {
    switch (level) {
    case RiskLevel::NotSignificant: return "NotSignificant";
    case RiskLevel::Low: return "Low";
    case RiskLevel::Medium: return "Medium";
    case RiskLevel::High: return "High";
    }
    return "?";
}

RiskLevel risk_level(double p) {
    if (p <= 0.25) return RiskLevel::NotSignificant;
    if (p <= 0.5) return RiskLevel::Low;
    if (p <= 0.75) return RiskLevel::Medium;
    return RiskLevel::High;
}

const AssetRisk& RiskReport::at(std::string_view host) const {
    auto it = std::find_if(perAsset.begin(), perAsset.end(), [&](const AssetRisk& a) { return a.host == host; });
    if (it == perAsset.end()) throw UnknownId(std::string(host), "unknown host");
    return *it;
}

json to_json(const RiskReport& r) {
    json perAsset = json::object();
    json levels = json::object();
    json paths = json::object();
    for (const auto& a : r.perAsset) {
        perAsset[a.host] = a.probability;
        levels[a.host] = to_string(a.level);
        paths[a.host] = a.bestPath;
    }
    return {{"perAsset", std::move(perAsset)},
            {"ranking", r.ranking},
            {"riskLevel", std::move(levels)},
            {"bestPath", std::move(paths)}};
}

std::vector<Marginals> infer_all(const Model& model, const EvidenceState& state, unsigned workers) {
    auto steps = step_evidence(model, state);
    auto hosts = host_evidence(model, state);
    const auto& bats = model.bam.bats;
    std::vector<Marginals> out(bats.size());
    parallel_for(bats.size(), workers, [&](std::size_t i) {
        auto evidence = bat_evidence(bats[i], steps, hosts);
        try {
            out[i] = infer_marginals_unchecked(bats[i], evidence);
        } catch (const ImpossibleEvidence&) {
            throw ImpossibleEvidence(model.tag.node_id(bats[i].source()));
        }
    });
    return out;
}

RiskReport consolidate(const Model& model, const std::vector<Marginals>& marginals) {
    const auto& tag = model.tag;
    std::vector<double> best(tag.nodes.size(), -1.0);
    std::vector<std::pair<std::size_t, BatNodeId>> where(tag.nodes.size(), {0, 0});
    for (std::size_t b = 0; b < model.bam.bats.size(); ++b) {
        const auto& bat = model.bam.bats[b];
        const auto& m = marginals.at(b);
        auto nodes = bat.nodes();
        for (BatNodeId id = 0; id < nodes.size(); ++id) {
            auto kind = nodes[id].kind;
            if (kind != NodeKind::Topological && kind != NodeKind::AttackSource) continue;
            auto host = nodes[id].ref;
            if (m[id] > best[host]) {
                best[host] = m[id];
                where[host] = {b, id};
            }
        }
    }
    RiskReport r;
    for (std::size_t h = 0; h < tag.nodes.size(); ++h) {
        AssetRisk a;
        a.host = tag.nodes[h];
        a.probability = std::max(0.0, best[h]);
        a.level = risk_level(a.probability);
        if (best[h] >= 0.0) {
            const auto& bat = model.bam.bats[where[h].first];
            a.batSource = tag.node_id(bat.source());
            a.node = where[h].second;
            for (auto t : bat.path_memory(a.node)) a.bestPath.push_back(tag.node_id(t));
        }
        r.perAsset.push_back(std::move(a));
    }
    std::vector<std::size_t> order(r.perAsset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const auto& a = r.perAsset[x];
        const auto& b = r.perAsset[y];
        if (a.probability != b.probability) return a.probability > b.probability;
        return a.host < b.host;
    });
    for (auto i : order) r.ranking.push_back(r.perAsset[i].host);
    return r;
}

RiskReport assess(const Model& model, const EvidenceState& state, unsigned workers) {
    return consolidate(model, infer_all(model, state, workers));
}

} // namespace bam
