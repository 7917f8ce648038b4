#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bam/cpt.hpp"
#include "bam/params.hpp"
#include "bam/tag.hpp"

namespace bam {

using BatNodeId = std::uint32_t;
inline constexpr BatNodeId kNoNode = std::numeric_limits<BatNodeId>::max();

enum class NodeKind : std::uint8_t { AttackSource, Topological, AttackStep, Condition, Sensor };

std::string_view to_string(NodeKind k);

struct StateLabels {
    std::string_view positive;
    std::string_view negative;
};

/// (Compromised, NotCompromised) / (Succeeded, Failed) / (Alert, NoAlert).
StateLabels state_labels(NodeKind k);

struct BatNode {
    NodeKind kind = NodeKind::Topological;
    // Topological / AttackSource: terminal TAG node. Others: index of the
    // originating TAG attack step.
    std::uint32_t ref = 0;
    // Condition: index of the condition within its step.
    std::uint16_t slot = 0;
    // Topological: number of attack steps from the source (0 for the source).
    std::uint16_t depth = 0;
    // Topological: previous topological node on the path, kNoNode for the source.
    BatNodeId pathParent = kNoNode;
    std::uint32_t firstParent = 0;
    std::uint32_t numParents = 0;
    std::uint32_t cpt = 0;
};

/// One Bayesian Attack Tree: the polytree unrolling of every non-backtracking
/// attack path from a single source. Nodes are stored in creation order;
/// parents live in one flat array to keep very large trees compact.
class Bat {
public:
    Bat() = default;
    explicit Bat(TagNodeIndex source) : source_(source) {}

    TagNodeIndex source() const noexcept { return source_; }
    BatNodeId root() const noexcept { return 0; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t edge_count() const noexcept { return parentIds_.size(); }

    std::uint32_t add_cpt(Cpt cpt);

    /// Parent ids are not checked here; validate_polytree() reports dangling ones.
    BatNodeId add_node(const BatNode& prototype, std::span<const BatNodeId> parents, std::uint32_t cptIndex);
    BatNodeId add_node(const BatNode& prototype, std::span<const BatNodeId> parents, Cpt cpt);

    const BatNode& node(BatNodeId id) const { return nodes_.at(id); }
    std::span<const BatNode> nodes() const noexcept { return nodes_; }
    std::span<const BatNodeId> parents(BatNodeId id) const;
    const Cpt& cpt(BatNodeId id) const { return cpts_.at(nodes_.at(id).cpt); }
    std::span<const Cpt> cpts() const noexcept { return cpts_; }

    bool is_topological(BatNodeId id) const {
        auto k = nodes_[id].kind;
        return k == NodeKind::Topological || k == NodeKind::AttackSource;
    }

    /// TAG node path (tn_1 ... tn_n) of a topological or attack-source node.
    std::vector<TagNodeIndex> path_memory(BatNodeId id) const;

    bool operator==(const Bat&) const;

private:
    TagNodeIndex source_ = 0;
    std::vector<BatNode> nodes_;
    std::vector<BatNodeId> parentIds_;
    std::vector<Cpt> cpts_;
};

/// The attack model: one BAT per TAG node, bats[i].source() == i.
struct Bam {
    std::vector<Bat> bats;
};

/// Unrolls every path from `source` of at most params.nbSteps attack steps that
/// never revisits a node. Each step instance gets its own condition, sensor and
/// target topological node, so the result is always a polytree.
/// `priors` is indexed by TAG node.
Bat build_bat(const Tag& tag, TagNodeIndex source, const ModelParams& params, std::span<const double> priors);

/// build_bat for every TAG node, optionally on `workers` threads (0 = hardware).
Bam build_bam(const Tag& tag, const ModelParams& params, std::span<const double> priors, unsigned workers = 1);

/// True iff the graph is a DAG whose undirected skeleton is a forest.
bool validate_polytree(const Bat& bat);

/// Kind-level invariants (parent counts and kinds). Empty when well-formed.
std::vector<std::string> structural_violations(const Bat& bat);

/// Worst-case BAT size estimate 4 * k * N! / (N - nbSteps)!.
std::uint64_t node_count_bound(std::uint64_t numNodes, std::uint64_t maxStepTypes, std::uint64_t nbSteps);

nlohmann::json to_json(const Bat& bat, const Tag& tag);

} // namespace bam
