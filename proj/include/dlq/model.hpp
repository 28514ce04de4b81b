#pragma once

#include <vector>

namespace dlq {

/// Coefficients of the delayed linear-quadratic problem
///
///   dX_t = alpha_{t-d} (b dt + sigma dW_t),   minimize E[X_T^2].
struct ModelParams {
    double b = 0.0;      ///< drift coefficient
    double sigma = 1.0;  ///< volatility coefficient, strictly positive
    double d = 0.0;      ///< execution delay
    double T = 1.0;      ///< horizon

    /// Throws ParameterError unless sigma > 0, d >= 0, T > 0 and all finite.
    void validate() const;
};

/// Outcome of the sufficient existence check for the Riccati system.
struct FeasibilityReport {
    /// Computed prefix a_0, a_1, ... of the lower-bound sequence. Stops at the
    /// first nonpositive term or once the cap is reached.
    std::vector<double> a_seq;
    /// Last index with a_n > 0 before the first nonpositive term. When no
    /// nonpositive term shows up within the cap this holds the cap and
    /// `exceeds_cap` is set.
    int n_cal = 0;
    bool exceeds_cap = false;
    bool sufficient_holds = false;
    /// n_cal * d - T; +infinity when `exceeds_cap`.
    double margin = 0.0;

    /// a_n if it was computed, otherwise the last computed term. With
    /// `exceeds_cap` every uncomputed term is bounded below by that value.
    double a(int n) const;
};

/// Smallest cap that decides the condition T < n_cal * d.
int default_feasibility_cap(const ModelParams& params);

/// Runs a_{n+1} = a_n - (d / a_n) (b / sigma)^2 from a_0 = 1, computing at
/// most a_0 .. a_{cap+1}.
FeasibilityReport feasibility(const ModelParams& params, int cap);
FeasibilityReport feasibility(const ModelParams& params);

}  // namespace dlq
