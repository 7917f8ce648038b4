#include "bam/bat.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "bam/errors.hpp"
#include "bam/parallel.hpp"

namespace bam {

using nlohmann::json;

std::string_view to_string(NodeKind k) {
    switch (k) {
    case NodeKind::AttackSource: return "AttackSource";
    case NodeKind::Topological: return "Topological";
    case NodeKind::AttackStep: return "AttackStep";
    case NodeKind::Condition: return "Condition";
    case NodeKind::Sensor: return "Sensor";
    }
    return "?";
}

StateLabels state_labels(NodeKind k) {
    switch (k) {
    case NodeKind::AttackSource:
    case NodeKind::Topological: return {"Compromised", "NotCompromised"};
    case NodeKind::AttackStep:
    case NodeKind::Condition: return {"Succeeded", "Failed"};
    case NodeKind::Sensor: return {"Alert", "NoAlert"};
    }
    return {"?", "?"};
}

std::uint32_t Bat::add_cpt(Cpt cpt) {
    cpts_.push_back(std::move(cpt));
    return static_cast<std::uint32_t>(cpts_.size() - 1);
}

BatNodeId Bat::add_node(const BatNode& prototype, std::span<const BatNodeId> parents, std::uint32_t cptIndex) {
    if (cptIndex >= cpts_.size()) throw InvalidArgument("unknown CPT index");
    if (cpts_[cptIndex].arity() != parents.size()) {
        throw InvalidArgument("CPT arity " + std::to_string(cpts_[cptIndex].arity()) + " does not match " +
                              std::to_string(parents.size()) + " parents");
    }
    BatNode n = prototype;
    n.firstParent = static_cast<std::uint32_t>(parentIds_.size());
    n.numParents = static_cast<std::uint32_t>(parents.size());
    n.cpt = cptIndex;
    parentIds_.insert(parentIds_.end(), parents.begin(), parents.end());
    nodes_.push_back(n);
    return static_cast<BatNodeId>(nodes_.size() - 1);
}

BatNodeId Bat::add_node(const BatNode& prototype, std::span<const BatNodeId> parents, Cpt cpt) {
    return add_node(prototype, parents, add_cpt(std::move(cpt)));
}

std::span<const BatNodeId> Bat::parents(BatNodeId id) const {
    const auto& n = nodes_.at(id);
    return std::span<const BatNodeId>(parentIds_).subspan(n.firstParent, n.numParents);
}

std::vector<TagNodeIndex> Bat::path_memory(BatNodeId id) const {
    std::vector<TagNodeIndex> path;
    if (!is_topological(id)) return path;
    for (BatNodeId cur = id; cur != kNoNode; cur = nodes_.at(cur).pathParent) {
        path.push_back(nodes_.at(cur).ref);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

bool Bat::operator==(const Bat& other) const {
    if (source_ != other.source_ || nodes_.size() != other.nodes_.size() || parentIds_ != other.parentIds_) {
        return false;
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& a = nodes_[i];
        const auto& b = other.nodes_[i];
        if (a.kind != b.kind || a.ref != b.ref || a.slot != b.slot || a.depth != b.depth ||
            a.pathParent != b.pathParent || a.numParents != b.numParents || !(cpts_[a.cpt] == other.cpts_[b.cpt])) {
            return false;
        }
    }
    return true;
}

namespace {

class BatBuilder {
public:
    BatBuilder(const Tag& tag, const std::vector<std::vector<std::uint32_t>>& out, const ModelParams& params,
               TagNodeIndex source, double prior)
        : tag_(tag), out_(out), params_(params), bat_(source),
          conditionCpt_(tag.steps.size()), sensorCpt_(tag.steps.size()) {
        topologicalCpt_ = bat_.add_cpt(cpt_topological(1, params.probabilityUnknownAttack));
        BatNode root;
        root.kind = NodeKind::AttackSource;
        root.ref = source;
        bat_.add_node(root, {}, Cpt::prior(prior));
        onPath_.assign(tag.nodes.size(), false);
    }

    Bat build() && {
        expand(bat_.root(), bat_.node(bat_.root()).ref, 0);
        return std::move(bat_);
    }

private:
    void expand(BatNodeId from, TagNodeIndex terminal, int depth) {
        if (depth >= params_.nbSteps) return;
        onPath_[terminal] = true;
        for (std::uint32_t stepIndex : out_[terminal]) {
            const AttackStep& step = tag_.steps[stepIndex];
            if (onPath_[step.target]) continue;
            BatNodeId topo = add_step(from, stepIndex, depth);
            expand(topo, step.target, depth + 1);
        }
        onPath_[terminal] = false;
    }

    // Adds condition(s), attack step, optional sensor and the target
    // topological node for one instance of `stepIndex`. Returns the latter.
    BatNodeId add_step(BatNodeId from, std::uint32_t stepIndex, int depth) {
        const AttackStep& step = tag_.steps[stepIndex];
        parentScratch_.clear();
        parentScratch_.push_back(from);
        for (std::size_t c = 0; c < step.conditions.size(); ++c) {
            BatNode cond;
            cond.kind = NodeKind::Condition;
            cond.ref = stepIndex;
            cond.slot = static_cast<std::uint16_t>(c);
            parentScratch_.push_back(bat_.add_node(cond, {}, condition_cpt(stepIndex, c)));
        }
        BatNode as;
        as.kind = NodeKind::AttackStep;
        as.ref = stepIndex;
        BatNodeId asId = bat_.add_node(as, parentScratch_, step_cpt(step.conditions.size()));

        if (step.sensor) {
            BatNode sen;
            sen.kind = NodeKind::Sensor;
            sen.ref = stepIndex;
            BatNodeId parent[] = {asId};
            bat_.add_node(sen, parent, sensor_cpt(stepIndex));
        }

        BatNode topo;
        topo.kind = NodeKind::Topological;
        topo.ref = step.target;
        topo.depth = static_cast<std::uint16_t>(depth + 1);
        topo.pathParent = from;
        BatNodeId parent[] = {asId};
        return bat_.add_node(topo, parent, topologicalCpt_);
    }

    std::uint32_t condition_cpt(std::uint32_t stepIndex, std::size_t slot) {
        auto& cache = conditionCpt_[stepIndex];
        if (cache.empty()) {
            for (const auto& c : tag_.steps[stepIndex].conditions) cache.push_back(bat_.add_cpt(Cpt::prior(c.probability)));
        }
        return cache[slot];
    }

    std::uint32_t sensor_cpt(std::uint32_t stepIndex) {
        auto& cache = sensorCpt_[stepIndex];
        if (!cache) {
            const auto& s = *tag_.steps[stepIndex].sensor;
            cache = bat_.add_cpt(cpt_sensor(s.falsePositive, s.falseNegative));
        }
        return *cache;
    }

    std::uint32_t step_cpt(std::size_t numConditions) {
        if (stepCpt_.size() <= numConditions) stepCpt_.resize(numConditions + 1);
        auto& cache = stepCpt_[numConditions];
        if (!cache) cache = bat_.add_cpt(cpt_attack_step(numConditions, params_.probabilityNewAttackStep));
        return *cache;
    }

    const Tag& tag_;
    const std::vector<std::vector<std::uint32_t>>& out_;
    const ModelParams& params_;
    Bat bat_;
    std::uint32_t topologicalCpt_ = 0;
    std::vector<std::vector<std::uint32_t>> conditionCpt_;
    std::vector<std::optional<std::uint32_t>> sensorCpt_;
    std::vector<std::optional<std::uint32_t>> stepCpt_;
    std::vector<bool> onPath_;
    std::vector<BatNodeId> parentScratch_;
};

Bat build_bat_with(const Tag& tag, const std::vector<std::vector<std::uint32_t>>& out, TagNodeIndex source,
                   const ModelParams& params, std::span<const double> priors) {
    return BatBuilder(tag, out, params, source, priors[source]).build();
}

void check_inputs(const Tag& tag, const ModelParams& params, std::span<const double> priors) {
    params.validate();
    if (priors.size() != tag.nodes.size()) {
        throw InvalidArgument("expected one source prior per TAG node");
    }
    for (const auto& s : tag.steps) {
        if (s.source >= tag.nodes.size() || s.target >= tag.nodes.size()) {
            throw InvalidArgument("attack step references unknown TAG node");
        }
    }
}

} // namespace

Bat build_bat(const Tag& tag, TagNodeIndex source, const ModelParams& params, std::span<const double> priors) {
    if (source >= tag.nodes.size()) throw UnknownId(std::to_string(source), "attack source not in TAG:");
    check_inputs(tag, params, priors);
    return build_bat_with(tag, tag.out_steps(), source, params, priors);
}

Bam build_bam(const Tag& tag, const ModelParams& params, std::span<const double> priors, unsigned workers) {
    check_inputs(tag, params, priors);
    auto out = tag.out_steps();
    Bam bam;
    bam.bats.resize(tag.nodes.size());
    parallel_for(tag.nodes.size(), workers, [&](std::size_t i) {
        bam.bats[i] = build_bat_with(tag, out, static_cast<TagNodeIndex>(i), params, priors);
    });
    return bam;
}

bool validate_polytree(const Bat& bat) {
    const std::size_t n = bat.size();
    std::vector<std::uint32_t> indegree(n, 0);
    std::vector<std::vector<BatNodeId>> children(n);
    for (BatNodeId v = 0; v < n; ++v) {
        for (BatNodeId p : bat.parents(v)) {
            if (p >= n) return false;
            children[p].push_back(v);
            ++indegree[v];
        }
    }
    // Kahn's algorithm for directed acyclicity.
    std::vector<BatNodeId> queue;
    for (BatNodeId v = 0; v < n; ++v) {
        if (indegree[v] == 0) queue.push_back(v);
    }
    std::size_t visited = 0;
    while (!queue.empty()) {
        BatNodeId v = queue.back();
        queue.pop_back();
        ++visited;
        for (BatNodeId c : children[v]) {
            if (--indegree[c] == 0) queue.push_back(c);
        }
    }
    if (visited != n) return false;

    // Skeleton is a forest iff no edge joins two already-connected nodes.
    std::vector<BatNodeId> uf(n);
    std::iota(uf.begin(), uf.end(), 0);
    auto find = [&](BatNodeId x) {
        while (uf[x] != x) {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        return x;
    };
    for (BatNodeId v = 0; v < n; ++v) {
        for (BatNodeId p : bat.parents(v)) {
            auto a = find(v);
            auto b = find(p);
            if (a == b) return false;
            uf[a] = b;
        }
    }
    return true;
}

std::vector<std::string> structural_violations(const Bat& bat) {
    std::vector<std::string> out;
    auto complain = [&](BatNodeId id, const std::string& what) {
        out.push_back("node " + std::to_string(id) + " (" + std::string(to_string(bat.node(id).kind)) + "): " + what);
    };
    for (BatNodeId id = 0; id < bat.size(); ++id) {
        const auto& n = bat.node(id);
        auto parents = bat.parents(id);
        auto kind_of = [&](BatNodeId p) { return p < bat.size() ? bat.node(p).kind : NodeKind::Condition; };
        switch (n.kind) {
        case NodeKind::AttackSource:
            if (!parents.empty()) complain(id, "attack source has parents");
            if (id != bat.root()) complain(id, "attack source is not the root");
            break;
        case NodeKind::Condition:
            if (!parents.empty()) complain(id, "condition has parents");
            break;
        case NodeKind::Sensor:
            if (parents.size() != 1 || kind_of(parents[0]) != NodeKind::AttackStep) {
                complain(id, "sensor needs exactly one attack-step parent");
            }
            break;
        case NodeKind::Topological:
            if (parents.empty()) complain(id, "topological node without parents");
            for (auto p : parents) {
                if (kind_of(p) != NodeKind::AttackStep) complain(id, "topological parent is not an attack step");
            }
            break;
        case NodeKind::AttackStep: {
            std::size_t topo = 0;
            for (auto p : parents) {
                auto k = kind_of(p);
                if (k == NodeKind::Topological || k == NodeKind::AttackSource) {
                    ++topo;
                } else if (k != NodeKind::Condition) {
                    complain(id, "attack-step parent must be topological or condition");
                }
            }
            if (topo != 1) complain(id, "attack step needs exactly one topological parent");
            break;
        }
        }
        if (bat.is_topological(id)) {
            auto path = bat.path_memory(id);
            auto sorted = path;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) complain(id, "path memory repeats a node");
            if (path.empty() || path.front() != bat.source()) complain(id, "path memory does not start at the source");
        }
    }
    return out;
}

std::uint64_t node_count_bound(std::uint64_t numNodes, std::uint64_t maxStepTypes, std::uint64_t nbSteps) {
    if (nbSteps < 1) throw InvalidArgument("nbSteps must be >= 1");
    if (nbSteps > numNodes) throw InvalidArgument("nbSteps must not exceed the number of TAG nodes");
    std::uint64_t falling = 1;
    for (std::uint64_t i = 0; i < nbSteps; ++i) {
        std::uint64_t factor = numNodes - i;
        if (falling > std::numeric_limits<std::uint64_t>::max() / factor) throw InvalidArgument("node count bound overflows");
        falling *= factor;
    }
    std::uint64_t scale = 4 * maxStepTypes;
    if (scale != 0 && falling > std::numeric_limits<std::uint64_t>::max() / scale) {
        throw InvalidArgument("node count bound overflows");
    }
    return scale * falling;
}

json to_json(const Bat& bat, const Tag& tag) {
    json nodes = json::array();
    for (BatNodeId id = 0; id < bat.size(); ++id) {
        const auto& n = bat.node(id);
        json jn = {{"id", id}, {"kind", to_string(n.kind)}};
        jn["parents"] = std::vector<BatNodeId>(bat.parents(id).begin(), bat.parents(id).end());
        if (bat.is_topological(id)) {
            json path = json::array();
            for (auto t : bat.path_memory(id)) path.push_back(tag.node_id(t));
            jn["pathMemory"] = std::move(path);
        } else {
            const auto& step = tag.steps.at(n.ref);
            jn["step"] = {tag.node_id(step.source), tag.node_id(step.target), to_string(step.type)};
            if (n.kind == NodeKind::Condition) jn["condition"] = n.slot;
        }
        const Cpt& cpt = bat.cpt(id);
        if (cpt.arity() <= 10) {
            jn["cpt"] = cpt.rows();
        } else {
            jn["cptArity"] = cpt.arity();
        }
        nodes.push_back(std::move(jn));
    }
    return {{"source", tag.node_id(bat.source())}, {"nodes", std::move(nodes)}};
}

} // namespace bam
