#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

namespace bam {

// Parent states are packed in a bitmask: bit i set means parent i is in its
// positive state (Compromised / Succeeded / Alert).
using ParentMask = std::uint32_t;

/// Explicit table: rows[mask] = P(positive | parents = mask), 2^arity entries.
/// A root node is a table of arity 0 holding its prior.
struct TableCpt {
    std::vector<double> rows;
    bool operator==(const TableCpt&) const = default;
};

/// ifAny when at least one parent is positive, ifNone otherwise (noisy-OR with leak).
struct OrCpt {
    double ifAny = 1.0;
    double ifNone = 0.0;
    bool operator==(const OrCpt&) const = default;
};

/// ifAll when every parent is positive, otherwise `otherwise`.
struct AndCpt {
    double ifAll = 1.0;
    double otherwise = 0.0;
    bool operator==(const AndCpt&) const = default;
};

class Cpt {
public:
    using Family = std::variant<TableCpt, OrCpt, AndCpt>;

    Cpt() : arity_(0), family_(TableCpt{{0.5}}) {}
    Cpt(std::size_t arity, Family family);

    static Cpt prior(double p) { return Cpt(0, TableCpt{{p}}); }
    static Cpt table(std::size_t arity, std::vector<double> rows) { return Cpt(arity, TableCpt{std::move(rows)}); }

    std::size_t arity() const noexcept { return arity_; }
    const Family& family() const noexcept { return family_; }

    /// P(positive | parent states). Bit-identical to the entry of the expanded table.
    double probability(ParentMask mask) const;

    /// Expanded rows, 2^arity entries.
    std::vector<double> rows() const;

    bool operator==(const Cpt&) const = default;

private:
    std::size_t arity_;
    Family family_;
};

// Limit on explicit tables and brute-force expansion.
inline constexpr std::size_t kMaxTableArity = 24;

/// Topological node: noisy-OR over its attack-step parents with leak `pua`.
Cpt cpt_topological(std::size_t numAttackStepParents, double pua);

/// Attack step: parent 0 is the topological source, parents 1..m the conditions.
/// pnas when every parent is positive, 0 otherwise.
Cpt cpt_attack_step(std::size_t numConditionParents, double pnas);

/// Sensor: Alert with 1-fn when the attack step succeeded, fp when it failed.
Cpt cpt_sensor(double falsePositive, double falseNegative);

} // namespace bam
