#include "bam/cpt.hpp"

#include <string>

#include "bam/errors.hpp"

namespace bam {

namespace {

void check_probability(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(std::string(what) + " must lie in [0,1]");
}

} // namespace

Cpt::Cpt(std::size_t arity, Family family) : arity_(arity), family_(std::move(family)) {
    if (const auto* t = std::get_if<TableCpt>(&family_)) {
        if (arity_ > kMaxTableArity) throw InvalidArgument("table CPT arity too large");
        if (t->rows.size() != (std::size_t{1} << arity_)) {
            throw InvalidArgument("table CPT needs 2^arity rows, got " + std::to_string(t->rows.size()));
        }
        for (double p : t->rows) check_probability(p, "CPT entry");
    } else if (const auto* o = std::get_if<OrCpt>(&family_)) {
        check_probability(o->ifAny, "OR CPT ifAny");
        check_probability(o->ifNone, "OR CPT ifNone");
    } else if (const auto* a = std::get_if<AndCpt>(&family_)) {
        check_probability(a->ifAll, "AND CPT ifAll");
        check_probability(a->otherwise, "AND CPT otherwise");
    }
}

double Cpt::probability(ParentMask mask) const {
    const ParentMask full = arity_ >= 32 ? ~ParentMask{0} : ((ParentMask{1} << arity_) - 1);
    mask &= full;
    return std::visit(
        [&](const auto& f) -> double {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, TableCpt>) {
                return f.rows[mask];
            } else if constexpr (std::is_same_v<F, OrCpt>) {
                return mask != 0 ? f.ifAny : f.ifNone;
            } else {
                return mask == full ? f.ifAll : f.otherwise;
            }
        },
        family_);
}

std::vector<double> Cpt::rows() const {
    if (arity_ > kMaxTableArity) throw InvalidArgument("CPT arity too large to expand");
    std::vector<double> out(std::size_t{1} << arity_);
    for (std::size_t m = 0; m < out.size(); ++m) out[m] = probability(static_cast<ParentMask>(m));
    return out;
}

Cpt cpt_topological(std::size_t numAttackStepParents, double pua) {
    if (numAttackStepParents == 0) throw InvalidArgument("topological node needs at least one attack-step parent");
    check_probability(pua, "probabilityUnknownAttack");
    return Cpt(numAttackStepParents, OrCpt{1.0, pua});
}

Cpt cpt_attack_step(std::size_t numConditionParents, double pnas) {
    check_probability(pnas, "probabilityNewAttackStep");
    return Cpt(numConditionParents + 1, AndCpt{pnas, 0.0});
}

Cpt cpt_sensor(double falsePositive, double falseNegative) {
    check_probability(falsePositive, "falsePositive");
    check_probability(falseNegative, "falseNegative");
    return Cpt::table(1, {falsePositive, 1.0 - falseNegative});
}

} // namespace bam
