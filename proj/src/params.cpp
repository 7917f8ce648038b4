#include "bam/params.hpp"

#include <string>

#include "bam/errors.hpp"

namespace bam {

namespace {

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument(std::string(name) + " must lie in [0,1], got " + std::to_string(p));
    }
}

} // namespace

void ModelParams::validate() const {
    check_probability(probabilityUnknownAttack, "probabilityUnknownAttack");
    check_probability(probabilityNewAttackStep, "probabilityNewAttackStep");
    check_probability(falsePositive, "falsePositive");
    check_probability(falseNegative, "falseNegative");
    check_probability(probabilityInternet, "probabilityInternet");
    check_probability(probabilityOtherHosts, "probabilityOtherHosts");
    if (nbSteps < 1) {
        throw InvalidArgument("nbSteps must be >= 1, got " + std::to_string(nbSteps));
    }
}

nlohmann::json to_json(const ModelParams& p) {
    return {{"probabilityUnknownAttack", p.probabilityUnknownAttack},
            {"probabilityNewAttackStep", p.probabilityNewAttackStep},
            {"nbSteps", p.nbSteps},
            {"falsePositive", p.falsePositive},
            {"falseNegative", p.falseNegative},
            {"probabilityInternet", p.probabilityInternet},
            {"probabilityOtherHosts", p.probabilityOtherHosts}};
}

} // namespace bam
