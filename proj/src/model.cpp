#include "dlq/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dlq/errors.hpp"

namespace dlq {

void ModelParams::validate() const {
    if (!std::isfinite(b) || !std::isfinite(sigma) || !std::isfinite(d) || !std::isfinite(T)) {
        throw ParameterError("model parameters must be finite");
    }
    if (!(sigma > 0.0)) {
        throw ParameterError("sigma must be > 0, got " + std::to_string(sigma));
    }
    if (d < 0.0) {
        throw ParameterError("delay d must be >= 0, got " + std::to_string(d));
    }
    if (!(T > 0.0)) {
        throw ParameterError("horizon T must be > 0, got " + std::to_string(T));
    }
}

double FeasibilityReport::a(int n) const {
    if (a_seq.empty()) {
        return 1.0;
    }
    if (n < 0) {
        n = 0;
    }
    const auto idx = static_cast<std::size_t>(n);
    return idx < a_seq.size() ? a_seq[idx] : a_seq.back();
}

int default_feasibility_cap(const ModelParams& params) {
    if (params.d <= 0.0) {
        return 1;
    }
    return static_cast<int>(std::ceil(params.T / params.d)) + 1;
}

FeasibilityReport feasibility(const ModelParams& params) {
    return feasibility(params, default_feasibility_cap(params));
}

FeasibilityReport feasibility(const ModelParams& params, int cap) {
    params.validate();
    if (cap < 1) {
        throw ParameterError("feasibility cap must be >= 1");
    }

    FeasibilityReport report;
    report.a_seq.push_back(1.0);

    if (params.d == 0.0) {
        // Undelayed problem: the condition reduces to sigma != 0.
        report.n_cal = cap;
        report.exceeds_cap = true;
        report.sufficient_holds = true;
        report.margin = std::numeric_limits<double>::infinity();
        return report;
    }

    const double ratio_sq = (params.b / params.sigma) * (params.b / params.sigma);
    int first_nonpositive = -1;
    for (int n = 0; n <= cap; ++n) {
        const double a_n = report.a_seq.back();
        const double next = a_n - params.d / a_n * ratio_sq;
        report.a_seq.push_back(next);
        if (next <= 0.0) {
            first_nonpositive = n + 1;
            break;
        }
    }

    if (first_nonpositive < 0) {
        report.n_cal = cap;
        report.exceeds_cap = true;
        report.sufficient_holds = true;
        report.margin = std::numeric_limits<double>::infinity();
        return report;
    }

    // a_1 <= 0 gives n_cal = 0, which never satisfies the condition.
    report.n_cal = first_nonpositive - 1;
    report.margin = report.n_cal * params.d - params.T;
    report.sufficient_holds = report.n_cal >= 2 && params.T < report.n_cal * params.d;
    return report;
}

}  // namespace dlq
