#include "bam/tag.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "bam/errors.hpp"

namespace bam {

using nlohmann::json;

std::string_view to_string(AttackType t) {
    switch (t) {
    case AttackType::RemoteExploit: return "RemoteExploit";
    case AttackType::CredentialTheft: return "CredentialTheft";
    }
    return "?";
}

std::optional<TagNodeIndex> Tag::find_node(std::string_view id) const {
    auto it = std::find(nodes.begin(), nodes.end(), id);
    if (it == nodes.end()) return std::nullopt;
    return static_cast<TagNodeIndex>(it - nodes.begin());
}

std::vector<std::vector<std::uint32_t>> Tag::out_steps() const {
    std::vector<std::vector<std::uint32_t>> out(nodes.size());
    for (std::uint32_t i = 0; i < steps.size(); ++i) out.at(steps[i].source).push_back(i);
    for (auto& list : out) {
        std::stable_sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            const auto& sa = steps[a];
            const auto& sb = steps[b];
            const auto& ta = nodes[sa.target];
            const auto& tb = nodes[sb.target];
            if (ta != tb) return ta < tb;
            return sa.type < sb.type;
        });
    }
    return out;
}

std::size_t Tag::max_step_types() const {
    std::map<std::pair<TagNodeIndex, TagNodeIndex>, std::vector<AttackType>> types;
    for (const auto& s : steps) {
        auto& v = types[{s.source, s.target}];
        if (std::find(v.begin(), v.end(), s.type) == v.end()) v.push_back(s.type);
    }
    std::size_t k = 0;
    for (const auto& [_, v] : types) k = std::max(k, v.size());
    return k;
}

namespace {

using GroupKey = std::tuple<TagNodeIndex, TagNodeIndex, AttackType>;

// P(a or b) for independent events; exact for a single term (0 + p - 0).
double or_accumulate(double a, double b) { return a + b - a * b; }

struct Accumulator {
    double anySucceeds = 0.0;  // 1 - prod (1 - P(c_i)), accumulated as a running OR
    std::vector<std::string> vulns;
    std::vector<std::string> sensors;
    bool hasSensor = false;
    double sensorMissAll = 1.0;   // prod FN_i
    double sensorAnyFalseAlarm = 0.0;  // 1 - prod (1 - FP_i)
    std::vector<std::string> descriptions;
};

std::vector<AttackStep> finish(std::map<GroupKey, Accumulator>& groups, const std::vector<GroupKey>& order) {
    std::vector<AttackStep> out;
    out.reserve(order.size());
    for (const auto& key : order) {
        auto& acc = groups.at(key);
        AttackStep step;
        std::tie(step.source, step.target, step.type) = key;
        std::string description = "at least one of ";
        for (std::size_t i = 0; i < acc.vulns.size(); ++i) {
            if (i) description += ", ";
            description += acc.vulns[i];
        }
        description += " exploited";
        step.conditions.push_back({std::move(description), acc.anySucceeds});
        if (acc.hasSensor) {
            step.sensor = GroupedSensor{acc.sensors, acc.sensorAnyFalseAlarm, acc.sensorMissAll};
        }
        step.memberVulnIds = std::move(acc.vulns);
        out.push_back(std::move(step));
    }
    return out;
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

} // namespace

std::vector<AttackStep> group_attack_steps(std::span<const RawStep> raw) {
    std::map<GroupKey, Accumulator> groups;
    std::vector<GroupKey> order;
    for (const auto& r : raw) {
        GroupKey key{r.source, r.target, r.type};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        auto& acc = it->second;
        acc.anySucceeds = or_accumulate(acc.anySucceeds, r.probability);
        acc.vulns.push_back(r.vulnId);
        if (r.sensorId) {
            acc.hasSensor = true;
            add_unique(acc.sensors, *r.sensorId);
            acc.sensorMissAll *= r.sensorFalseNegative;
            acc.sensorAnyFalseAlarm = or_accumulate(acc.sensorAnyFalseAlarm, r.sensorFalsePositive);
        }
    }
    return finish(groups, order);
}

std::vector<AttackStep> group_attack_steps(std::span<const AttackStep> steps) {
    std::map<GroupKey, Accumulator> groups;
    std::vector<GroupKey> order;
    for (const auto& s : steps) {
        GroupKey key{s.source, s.target, s.type};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) order.push_back(key);
        auto& acc = it->second;
        for (const auto& c : s.conditions) acc.anySucceeds = or_accumulate(acc.anySucceeds, c.probability);
        for (const auto& v : s.memberVulnIds) acc.vulns.push_back(v);
        if (s.sensor) {
            acc.hasSensor = true;
            for (const auto& id : s.sensor->memberSensorIds) add_unique(acc.sensors, id);
            acc.sensorMissAll *= s.sensor->falseNegative;
            acc.sensorAnyFalseAlarm = or_accumulate(acc.sensorAnyFalseAlarm, s.sensor->falsePositive);
        }
    }
    return finish(groups, order);
}

Tag generate_tag(const Topology& topology, const ModelParams& params) {
    Tag tag;
    tag.nodes.reserve(topology.hosts.size());
    for (const auto& h : topology.hosts) tag.nodes.push_back(h.id);

    std::vector<RawStep> raw;
    for (const auto& [src, dst] : topology.reachability) {
        auto s = tag.find_node(src);
        auto t = tag.find_node(dst);
        if (!s || !t) throw SchemaError("/reachability", "pair references unknown host");
        const HostSpec& target = topology.hosts[*t];
        for (const auto& v : target.vulnerabilities) {
            if (v.attackVector != AttackVector::Network && v.attackVector != AttackVector::Adjacent) continue;
            RawStep r;
            r.source = *s;
            r.target = *t;
            r.type = AttackType::RemoteExploit;
            r.vulnId = v.id;
            r.probability = cvss_exploit_probability(v);
            if (v.sensor) {
                r.sensorId = v.sensor->id;
                r.sensorFalsePositive = v.sensor->falsePositive.value_or(params.falsePositive);
                r.sensorFalseNegative = v.sensor->falseNegative.value_or(params.falseNegative);
            }
            raw.push_back(std::move(r));
        }
    }
    tag.steps = group_attack_steps(raw);
    return tag;
}

json to_json(const Tag& tag) {
    json steps = json::array();
    for (const auto& s : tag.steps) {
        json js = {{"source", tag.nodes.at(s.source)},
                   {"target", tag.nodes.at(s.target)},
                   {"type", to_string(s.type)},
                   {"members", s.memberVulnIds}};
        if (s.conditions.size() == 1) {
            js["conditionP"] = s.conditions.front().probability;
        } else {
            json conds = json::array();
            for (const auto& c : s.conditions) conds.push_back({{"description", c.description}, {"p", c.probability}});
            js["conditions"] = std::move(conds);
        }
        if (s.sensor) {
            js["sensor"] = {{"members", s.sensor->memberSensorIds},
                            {"fp", s.sensor->falsePositive},
                            {"fn", s.sensor->falseNegative}};
        }
        steps.push_back(std::move(js));
    }
    return {{"formatVersion", kTagFormatVersion}, {"nodes", tag.nodes}, {"steps", std::move(steps)}};
}

} // namespace bam
