#include "bam/topology.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "bam/errors.hpp"

namespace bam {

using nlohmann::json;

namespace {

bool in_unit_interval(double p) { return p >= 0.0 && p <= 1.0; }

std::string join(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string join(const std::string& base, std::size_t index) { return base + "/" + std::to_string(index); }

const json& require(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaError(join(path, key), "missing required field");
    }
    return *it;
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) {
        throw SchemaError(path, "expected a string");
    }
    return v.get<std::string>();
}

double as_probability(const json& v, const std::string& path, const char* what) {
    if (!v.is_number()) {
        throw SchemaError(path, "expected a number");
    }
    double p = v.get<double>();
    if (!in_unit_interval(p)) {
        throw SchemaError(path, std::string(what) + " out of range");
    }
    return p;
}

const json& as_array(const json& v, const std::string& path) {
    if (!v.is_array()) {
        throw SchemaError(path, "expected an array");
    }
    return v;
}

// Metric values accept the CVSS vector letter or the spelled-out name.
template <typename Enum>
Enum parse_metric(const json& v, const std::string& path,
                  std::initializer_list<std::pair<std::string_view, Enum>> letters,
                  std::initializer_list<std::pair<std::string_view, Enum>> names) {
    std::string s = as_string(v, path);
    for (auto& [k, e] : letters) {
        if (s == k) return e;
    }
    std::string lower = s;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto& [k, e] : names) {
        if (lower == k) return e;
    }
    throw SchemaError(path, "unknown metric value '" + s + "'");
}

SensorSpec parse_sensor(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    SensorSpec s;
    s.id = as_string(require(j, "id", path), join(path, "id"));
    if (auto it = j.find("fp"); it != j.end()) s.falsePositive = as_probability(*it, join(path, "fp"), "falsePositive");
    if (auto it = j.find("fn"); it != j.end()) s.falseNegative = as_probability(*it, join(path, "fn"), "falseNegative");
    return s;
}

Vulnerability parse_vulnerability(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    Vulnerability v;
    v.id = as_string(require(j, "id", path), join(path, "id"));
    v.attackVector = parse_metric<AttackVector>(
        require(j, "av", path), join(path, "av"),
        {{"N", AttackVector::Network}, {"A", AttackVector::Adjacent}, {"L", AttackVector::Local}, {"P", AttackVector::Physical}},
        {{"network", AttackVector::Network}, {"adjacent", AttackVector::Adjacent},
         {"local", AttackVector::Local}, {"physical", AttackVector::Physical}});
    v.attackComplexity = parse_metric<AttackComplexity>(
        require(j, "ac", path), join(path, "ac"),
        {{"L", AttackComplexity::Low}, {"H", AttackComplexity::High}},
        {{"low", AttackComplexity::Low}, {"high", AttackComplexity::High}});
    v.privilegesRequired = parse_metric<PrivilegesRequired>(
        require(j, "pr", path), join(path, "pr"),
        {{"N", PrivilegesRequired::None}, {"L", PrivilegesRequired::Low}, {"H", PrivilegesRequired::High}},
        {{"none", PrivilegesRequired::None}, {"low", PrivilegesRequired::Low}, {"high", PrivilegesRequired::High}});
    v.userInteraction = parse_metric<UserInteraction>(
        require(j, "ui", path), join(path, "ui"),
        {{"N", UserInteraction::None}, {"R", UserInteraction::Required}},
        {{"none", UserInteraction::None}, {"required", UserInteraction::Required}});
    if (auto it = j.find("probability"); it != j.end() && !it->is_null()) {
        v.explicitProbability = as_probability(*it, join(path, "probability"), "probability");
    }
    if (auto it = j.find("sensor"); it != j.end() && !it->is_null()) {
        v.sensor = parse_sensor(*it, join(path, "sensor"));
    }
    return v;
}

HostSpec parse_host(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path, "expected an object");
    HostSpec h;
    h.id = as_string(require(j, "id", path), join(path, "id"));
    if (auto it = j.find("vulnerabilities"); it != j.end()) {
        const auto& arr = as_array(*it, join(path, "vulnerabilities"));
        for (std::size_t i = 0; i < arr.size(); ++i) {
            h.vulnerabilities.push_back(parse_vulnerability(arr[i], join(join(path, "vulnerabilities"), i)));
        }
    }
    if (auto it = j.find("services"); it != j.end()) {
        const auto& arr = as_array(*it, join(path, "services"));
        for (std::size_t i = 0; i < arr.size(); ++i) {
            auto p = join(join(path, "services"), i);
            const auto& s = arr[i];
            if (!s.is_object()) throw SchemaError(p, "expected an object");
            Service svc;
            const auto& port = require(s, "port", p);
            if (!port.is_number_integer()) throw SchemaError(join(p, "port"), "expected an integer");
            svc.port = port.get<int>();
            svc.name = as_string(require(s, "name", p), join(p, "name"));
            h.services.push_back(std::move(svc));
        }
    }
    if (auto it = j.find("multiplicity"); it != j.end()) {
        if (!it->is_number_integer() || it->get<int>() < 1) {
            throw SchemaError(join(path, "multiplicity"), "expected a positive integer");
        }
        h.multiplicity = it->get<int>();
    }
    return h;
}

} // namespace

const HostSpec* Topology::find_host(std::string_view id) const {
    auto it = std::find_if(hosts.begin(), hosts.end(), [&](const HostSpec& h) { return h.id == id; });
    return it == hosts.end() ? nullptr : &*it;
}

void Topology::validate() const {
    std::set<std::string_view> ids;
    for (std::size_t i = 0; i < hosts.size(); ++i) {
        const auto& h = hosts[i];
        std::string path = "/hosts/" + std::to_string(i);
        if (h.id.empty()) throw SchemaError(path + "/id", "empty host id");
        if (!ids.insert(h.id).second) throw SchemaError(path + "/id", "duplicate host id '" + h.id + "'");
        std::set<std::string_view> vulnIds;
        for (std::size_t k = 0; k < h.vulnerabilities.size(); ++k) {
            const auto& v = h.vulnerabilities[k];
            std::string vpath = path + "/vulnerabilities/" + std::to_string(k);
            if (!vulnIds.insert(v.id).second) {
                throw SchemaError(vpath + "/id", "duplicate vulnerability id '" + v.id + "'");
            }
            if (v.explicitProbability && !in_unit_interval(*v.explicitProbability)) {
                throw SchemaError(vpath + "/probability", "probability out of range");
            }
            if (v.sensor) {
                if (v.sensor->id.empty()) throw SchemaError(vpath + "/sensor/id", "empty sensor id");
                if (v.sensor->falsePositive && !in_unit_interval(*v.sensor->falsePositive)) {
                    throw SchemaError(vpath + "/sensor/fp", "falsePositive out of range");
                }
                if (v.sensor->falseNegative && !in_unit_interval(*v.sensor->falseNegative)) {
                    throw SchemaError(vpath + "/sensor/fn", "falseNegative out of range");
                }
            }
        }
    }
    for (std::size_t i = 0; i < subnets.size(); ++i) {
        for (std::size_t k = 0; k < subnets[i].hosts.size(); ++k) {
            if (!ids.contains(subnets[i].hosts[k])) {
                throw SchemaError("/subnets/" + std::to_string(i) + "/hosts/" + std::to_string(k),
                                  "unknown host '" + subnets[i].hosts[k] + "'");
            }
        }
    }
    std::set<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < reachability.size(); ++i) {
        const auto& [src, dst] = reachability[i];
        std::string path = "/reachability/" + std::to_string(i);
        if (!ids.contains(src)) throw SchemaError(path + "/0", "unknown host '" + src + "'");
        if (!ids.contains(dst)) throw SchemaError(path + "/1", "unknown host '" + dst + "'");
        if (src == dst) throw SchemaError(path, "self reachability for '" + src + "'");
        if (!pairs.insert(reachability[i]).second) throw SchemaError(path, "duplicate reachability pair");
    }
    for (const auto& [host, p] : sourcePriors) {
        if (!ids.contains(host)) throw SchemaError("/sourcePriors/" + host, "unknown host '" + host + "'");
        if (!in_unit_interval(p)) throw SchemaError("/sourcePriors/" + host, "prior out of range");
    }
}

Topology parse_topology(const json& doc) {
    if (!doc.is_object()) throw SchemaError("", "topology document must be an object");
    if (auto it = doc.find("formatVersion"); it != doc.end()) {
        if (!it->is_number_integer() || it->get<int>() != kTopologyFormatVersion) {
            throw SchemaError("/formatVersion", "unsupported format version");
        }
    }
    Topology t;
    if (auto it = doc.find("hosts"); it != doc.end()) {
        const auto& arr = as_array(*it, "/hosts");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            t.hosts.push_back(parse_host(arr[i], join("/hosts", i)));
        }
    }
    if (auto it = doc.find("subnets"); it != doc.end()) {
        const auto& arr = as_array(*it, "/subnets");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            auto path = join("/subnets", i);
            if (!arr[i].is_object()) throw SchemaError(path, "expected an object");
            Subnet s;
            s.id = as_string(require(arr[i], "id", path), join(path, "id"));
            const auto& members = as_array(require(arr[i], "hosts", path), join(path, "hosts"));
            for (std::size_t k = 0; k < members.size(); ++k) {
                s.hosts.push_back(as_string(members[k], join(join(path, "hosts"), k)));
            }
            t.subnets.push_back(std::move(s));
        }
    }
    if (auto it = doc.find("reachability"); it != doc.end()) {
        const auto& arr = as_array(*it, "/reachability");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            auto path = join("/reachability", i);
            if (!arr[i].is_array() || arr[i].size() != 2) throw SchemaError(path, "expected a [source, target] pair");
            t.reachability.emplace_back(as_string(arr[i][0], join(path, 0)), as_string(arr[i][1], join(path, 1)));
        }
    }
    if (auto it = doc.find("sourcePriors"); it != doc.end()) {
        if (!it->is_object()) throw SchemaError("/sourcePriors", "expected an object");
        for (const auto& [host, p] : it->items()) {
            t.sourcePriors[host] = as_probability(p, "/sourcePriors/" + host, "prior");
        }
    }
    t.validate();
    return t;
}

Topology parse_topology(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_topology(doc);
}

Topology load_topology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open topology file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_topology(std::string_view(ss.str()));
    } catch (const SchemaError& e) {
        std::string msg = e.what();
        if (!e.path().empty() && msg.rfind(e.path() + ": ", 0) == 0) msg.erase(0, e.path().size() + 2);
        throw SchemaError(e.path().empty() ? path : path + "#" + e.path(), msg);
    }
}

std::string_view to_string(AttackVector v) {
    switch (v) {
    case AttackVector::Network: return "N";
    case AttackVector::Adjacent: return "A";
    case AttackVector::Local: return "L";
    case AttackVector::Physical: return "P";
    }
    return "?";
}

std::string_view to_string(AttackComplexity v) { return v == AttackComplexity::Low ? "L" : "H"; }

std::string_view to_string(PrivilegesRequired v) {
    switch (v) {
    case PrivilegesRequired::None: return "N";
    case PrivilegesRequired::Low: return "L";
    case PrivilegesRequired::High: return "H";
    }
    return "?";
}

std::string_view to_string(UserInteraction v) { return v == UserInteraction::None ? "N" : "R"; }

json to_json(const Topology& t) {
    json hosts = json::array();
    for (const auto& h : t.hosts) {
        json vulns = json::array();
        for (const auto& v : h.vulnerabilities) {
            json jv = {{"id", v.id},
                       {"av", to_string(v.attackVector)},
                       {"ac", to_string(v.attackComplexity)},
                       {"pr", to_string(v.privilegesRequired)},
                       {"ui", to_string(v.userInteraction)}};
            if (v.explicitProbability) jv["probability"] = *v.explicitProbability;
            if (v.sensor) {
                json s = {{"id", v.sensor->id}};
                if (v.sensor->falsePositive) s["fp"] = *v.sensor->falsePositive;
                if (v.sensor->falseNegative) s["fn"] = *v.sensor->falseNegative;
                jv["sensor"] = std::move(s);
            }
            vulns.push_back(std::move(jv));
        }
        json jh = {{"id", h.id}, {"vulnerabilities", std::move(vulns)}};
        if (!h.services.empty()) {
            json services = json::array();
            for (const auto& s : h.services) services.push_back({{"port", s.port}, {"name", s.name}});
            jh["services"] = std::move(services);
        }
        if (h.multiplicity != 1) jh["multiplicity"] = h.multiplicity;
        hosts.push_back(std::move(jh));
    }
    json subnets = json::array();
    for (const auto& s : t.subnets) subnets.push_back({{"id", s.id}, {"hosts", s.hosts}});
    json reach = json::array();
    for (const auto& [a, b] : t.reachability) reach.push_back({a, b});
    return {{"formatVersion", kTopologyFormatVersion},
            {"hosts", std::move(hosts)},
            {"subnets", std::move(subnets)},
            {"reachability", std::move(reach)},
            {"sourcePriors", t.sourcePriors}};
}

double cvss_exploit_probability(const Vulnerability& v) {
    if (v.explicitProbability) return *v.explicitProbability;

    // CVSS v3.1 exploitability coefficients.
    double ac = v.attackComplexity == AttackComplexity::Low ? 0.77 : 0.44;
    double pr = 0.85;
    switch (v.privilegesRequired) {
    case PrivilegesRequired::None: pr = 0.85; break;
    case PrivilegesRequired::Low: pr = 0.62; break;
    case PrivilegesRequired::High: pr = 0.27; break;
    }
    double ui = v.userInteraction == UserInteraction::None ? 0.85 : 0.62;
    return (ac * pr * ui) / (0.77 * 0.85 * 0.85);
}

double source_prior(const Topology& topology, std::string_view host, const ModelParams& params) {
    if (auto it = topology.sourcePriors.find(std::string(host)); it != topology.sourcePriors.end()) {
        return it->second;
    }
    return host == kInternetHost ? params.probabilityInternet : params.probabilityOtherHosts;
}

} // namespace bam
