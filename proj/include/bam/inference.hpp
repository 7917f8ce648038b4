#pragma once

#include <array>
#include <span>
#include <vector>

#include "bam/bat.hpp"

namespace bam {

enum class EvidenceMode : std::uint8_t { HardPositive, HardNegative, Soft };

/// Observation on one node. Soft(p) is virtual evidence: a hidden child with
/// P(obs | positive) = p and P(obs | negative) = 1 - p, observed.
struct EvidenceItem {
    BatNodeId node = 0;
    EvidenceMode mode = EvidenceMode::HardPositive;
    double p = 1.0;

    static EvidenceItem positive(BatNodeId n) { return {n, EvidenceMode::HardPositive, 1.0}; }
    static EvidenceItem negative(BatNodeId n) { return {n, EvidenceMode::HardNegative, 0.0}; }
    static EvidenceItem soft(BatNodeId n, double p) { return {n, EvidenceMode::Soft, p}; }

    /// Likelihood pair {negative, positive}.
    std::array<double, 2> likelihood() const;

    bool operator==(const EvidenceItem&) const = default;
};

/// Posterior probability of the positive state, indexed by node id.
using Marginals = std::vector<double>;

/// Exact posterior marginals by Pearl's lambda/pi message passing on a polytree.
/// Runs in time linear in the number of nodes (times the CPT cost for explicit
/// tables; OR/AND families are evaluated in closed form).
/// Throws NotPolytree, ContradictoryEvidence, InvalidArgument or ImpossibleEvidence.
Marginals infer_marginals(const Bat& bat, std::span<const EvidenceItem> evidence);

/// Same contract as infer_marginals, without re-checking the polytree property.
/// For callers that built the BAT themselves.
Marginals infer_marginals_unchecked(const Bat& bat, std::span<const EvidenceItem> evidence);

inline constexpr std::size_t kMaxBruteForceNodes = 22;

/// Reference answer by summing the full joint distribution. At most 22 nodes.
Marginals brute_force_marginals(const Bat& bat, std::span<const EvidenceItem> evidence);

} // namespace bam
