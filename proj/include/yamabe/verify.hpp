#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "yamabe/flow.hpp"

namespace yamabe {

enum class VerdictStatus { pass, fail, inconclusive };

inline const char* to_string(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::pass: return "pass";
        case VerdictStatus::fail: return "fail";
        case VerdictStatus::inconclusive: return "inconclusive";
    }
    return "?";
}

/// Outcome of one executable check.  margin is the worst-case signed slack of
/// the asserted inequalities (positive means satisfied); a check passes iff
/// margin >= -tolerance.  Checks whose hypotheses fail mid-run come back
/// inconclusive, never pass.  In reversed mode (negation harness) every
/// inequality is asserted in the opposite direction with zero tolerance, so a
/// generically satisfied check must fail; this guards against tolerance
/// windows wide enough to accept both directions.
struct VerdictReport {
    std::string check_id;
    VerdictStatus status = VerdictStatus::fail;
    double margin = 0;
    double tolerance = 0;
    std::string statement;
    std::vector<std::string> details;

    bool passed() const { return status == VerdictStatus::pass; }
};

namespace detail {

struct SlackAccumulator {
    double min_slack = std::numeric_limits<double>::infinity();
    double max_slack = -std::numeric_limits<double>::infinity();
    void add(double s) {
        min_slack = std::min(min_slack, s);
        max_slack = std::max(max_slack, s);
    }
    bool empty() const { return min_slack > max_slack; }
};

inline VerdictReport finish(std::string id, std::string statement, const SlackAccumulator& acc,
                            double tolerance, bool reversed,
                            std::vector<std::string> details = {}) {
    VerdictReport r;
    r.check_id = std::move(id);
    r.statement = std::move(statement);
    r.details = std::move(details);
    if (acc.empty()) {
        r.status = VerdictStatus::inconclusive;
        r.details.push_back("no samples to evaluate");
        return r;
    }
    r.margin = reversed ? -acc.max_slack : acc.min_slack;
    r.tolerance = reversed ? 0.0 : tolerance;
    r.status = r.margin >= -r.tolerance ? VerdictStatus::pass : VerdictStatus::fail;
    return r;
}

inline void require_samples(const FlowTrace& trace, const char* who) {
    if (trace.samples.empty())
        throw std::invalid_argument(std::string(who) + ": trace has no samples");
}

inline char* fmt(char* buf, std::size_t n, const char* f, double a, double b) {
    std::snprintf(buf, n, f, a, b);
    return buf;
}

}  // namespace detail

/// c = sandwich_coeff * (min R0 / max R0 - 1) from the initial curvature
/// extrema; requires max R0 < 0, and then c >= 0.
inline double sandwich_constant(const ConformalLaws& laws, double min_r0, double max_r0) {
    if (!(max_r0 < 0))
        throw std::invalid_argument("sandwich_constant: requires max R(0) < 0");
    return laws.sandwich_coeff() * (min_r0 / max_r0 - 1.0);
}

// ---------------------------------------------------------------------------
// pointwise curvature bounds along the flow
// ---------------------------------------------------------------------------

inline VerdictReport check_max_negative(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_max_negative");
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples) acc.add(-s.max_curvature);
    return detail::finish("max-neg-preserved", "max R(t) < 0 for all t", acc, 0.0, reversed);
}

inline VerdictReport check_max_bound(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_max_bound");
    const auto& first = trace.front();
    const double tol = 1e-6 * std::abs(first.min_curvature);
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples) acc.add(first.max_curvature - s.max_curvature);
    return detail::finish("max-bound", "max R(t) <= max R(0)", acc, tol, reversed);
}

inline VerdictReport check_min_bound(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_min_bound");
    const auto& first = trace.front();
    const double tol = 1e-6 * std::abs(first.min_curvature);
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples) acc.add(s.min_curvature - first.min_curvature);
    return detail::finish("min-bound", "min R(t) >= min R(0)", acc, tol, reversed);
}

inline VerdictReport check_average_pinching(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_average_pinching");
    const auto& first = trace.front();
    const double tol = 1e-6 * std::abs(first.min_curvature);
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples) {
        acc.add(s.avg_curvature - first.min_curvature);
        acc.add(first.max_curvature - s.avg_curvature);
    }
    return detail::finish("avg-pinching", "min R(0) <= avg R(t) <= max R(0)", acc, tol, reversed);
}

/// min R(0) >= 0 stays nonnegative along the unnormalized flow.
inline VerdictReport check_positivity_preserved(const FlowTrace& trace, double tol,
                                                bool reversed = false) {
    detail::require_samples(trace, "check_positivity_preserved");
    if (trace.front().min_curvature < 0)
        throw std::invalid_argument("check_positivity_preserved: requires min R(0) >= 0");
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples) acc.add(s.min_curvature);
    return detail::finish("positivity-preserved", "min R(t) >= 0 when min R(0) >= 0", acc, tol,
                          reversed);
}

// ---------------------------------------------------------------------------
// accumulated-integral bounds
// ---------------------------------------------------------------------------

inline VerdictReport check_integral_upper(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_integral_upper");
    const auto& first = trace.front();
    const double spread = first.max_curvature - first.min_curvature;
    const double tol = 1e-6 * std::abs(first.min_curvature);
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples)
        acc.add(first.avg_curvature + spread + first.max_curvature * s.integral_plus -
                s.max_curvature);
    return detail::finish("integral-upper",
                          "R(t) <= avg R(0) + (max-min) R(0) + max R(0) * Iplus(t)", acc, tol,
                          reversed);
}

inline VerdictReport check_integral_lower(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_integral_lower");
    const auto& first = trace.front();
    const double spread = first.max_curvature - first.min_curvature;
    const double tol = 1e-6 * std::abs(first.min_curvature);
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples)
        acc.add(s.min_curvature -
                (first.avg_curvature - spread + first.max_curvature * s.integral_minus));
    return detail::finish("integral-lower",
                          "R(t) >= avg R(0) - (max-min) R(0) + max R(0) * Iminus(t)", acc, tol,
                          reversed);
}

/// Infinite-horizon accumulator budgets, evaluated at the converged endpoint
/// with a tail allowance for the truncated horizon.
inline VerdictReport check_integral_budget(const ConformalLaws& laws, const FlowTrace& trace,
                                           double tail_tolerance, bool reversed = false) {
    detail::require_samples(trace, "check_integral_budget");
    const auto& first = trace.front();
    sandwich_constant(laws, first.min_curvature, first.max_curvature);  // precondition
    const double budget = 2.0 * (first.min_curvature / first.max_curvature - 1.0);
    if (trace.status != FlowStatus::converged) {
        VerdictReport pre;
        pre.check_id = "integral-budget";
        pre.status = VerdictStatus::inconclusive;
        pre.statement = "Iplus(inf) <= 2(min/max - 1) and -Iminus(inf) <= 2(min/max - 1)";
        pre.details.push_back("flow did not converge; accumulators not terminal");
        return pre;
    }
    const auto& last = trace.back();
    detail::SlackAccumulator acc;
    acc.add(budget - last.integral_plus);
    acc.add(budget + last.integral_minus);
    return detail::finish("integral-budget",
                          "Iplus(inf) <= 2(min/max - 1) and -Iminus(inf) <= 2(min/max - 1)", acc,
                          tail_tolerance, reversed);
}

// ---------------------------------------------------------------------------
// conserved / monotone quantities of the normalized flow
// ---------------------------------------------------------------------------

inline VerdictReport check_volume_conserved(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_volume_conserved");
    const double v0 = trace.front().volume;
    detail::SlackAccumulator acc;
    for (const auto& s : trace.samples)
        acc.add(1e-6 * std::max(s.t, 1e-12) - std::abs(s.volume - v0) / v0);
    return detail::finish("volume-conserved", "|V(t) - V(0)|/V(0) <= 1e-6 per unit time", acc, 0.0,
                          reversed);
}

inline VerdictReport check_average_monotone(const FlowTrace& trace, bool reversed = false) {
    detail::require_samples(trace, "check_average_monotone");
    detail::SlackAccumulator acc;
    double tol = 0;
    for (std::size_t k = 0; k + 1 < trace.samples.size(); ++k) {
        acc.add(trace.samples[k].avg_curvature - trace.samples[k + 1].avg_curvature);
        tol = std::max(tol, 1e-8 * std::abs(trace.samples[k].avg_curvature));
    }
    if (trace.samples.size() == 1) acc.add(0.0);
    return detail::finish("avg-monotone", "avg R(t) nonincreasing", acc, tol, reversed);
}

// ---------------------------------------------------------------------------
// log-eigenvalue and diameter bands
// ---------------------------------------------------------------------------

/// Sampled difference quotients of log lambda_1 against the curvature band,
/// worst-cased over both endpoints, with tolerance 1e-4 + 10 dt.
inline VerdictReport log_eig_bounds_check(const ConformalLaws& laws, const FlowTrace& trace,
                                          std::size_t op_index = 0, bool reversed = false) {
    detail::require_samples(trace, "log_eig_bounds_check");
    if (op_index >= trace.op_ids.size())
        throw std::invalid_argument("log_eig_bounds_check: op_index out of range");
    const double gb = laws.grad_band();
    const double mb = laws.mass_band();
    detail::SlackAccumulator acc;
    double tol = 0;
    for (std::size_t k = 0; k + 1 < trace.samples.size(); ++k) {
        const auto& s0 = trace.samples[k];
        const auto& s1 = trace.samples[k + 1];
        const double l0 = s0.lambda[op_index];
        const double l1 = s1.lambda[op_index];
        if (!(l0 > 0) || !(l1 > 0))
            throw std::invalid_argument("log_eig_bounds_check: nonpositive eigenvalue sample");
        const double dt = s1.t - s0.t;
        const double q = (std::log(l1) - std::log(l0)) / dt;
        auto lower = [&](const TraceSample& s) {
            return -gb * (s.max_curvature - s.avg_curvature) +
                   mb * (s.min_curvature - s.avg_curvature);
        };
        auto upper = [&](const TraceSample& s) {
            return -gb * (s.min_curvature - s.avg_curvature) +
                   mb * (s.max_curvature - s.avg_curvature);
        };
        const double lo = std::min(lower(s0), lower(s1));
        const double hi = std::max(upper(s0), upper(s1));
        acc.add(q - lo);
        acc.add(hi - q);
        tol = std::max(tol, 1e-4 + 10.0 * dt);
    }
    if (trace.samples.size() == 1) acc.add(0.0);
    return detail::finish("log-eig-band",
                          "band on dlog(lambda_1)/dt from curvature extrema", acc, tol, reversed);
}

/// Difference quotients of log diameter inside [ (avg-max)/2, (avg-min)/2 ],
/// plus the endpoint comparison of initial and final diameters through the
/// sandwich constant.
inline VerdictReport diameter_bounds_check(const ConformalLaws& laws, const FlowTrace& trace,
                                           bool reversed = false) {
    detail::require_samples(trace, "diameter_bounds_check");
    const auto& first = trace.front();
    const double c = sandwich_constant(laws, first.min_curvature, first.max_curvature);
    detail::SlackAccumulator acc;
    double tol = 0;
    for (std::size_t k = 0; k + 1 < trace.samples.size(); ++k) {
        const auto& s0 = trace.samples[k];
        const auto& s1 = trace.samples[k + 1];
        const double dt = s1.t - s0.t;
        const double q = (std::log(s1.diameter) - std::log(s0.diameter)) / dt;
        auto lower = [&](const TraceSample& s) { return 0.5 * (s.avg_curvature - s.max_curvature); };
        auto upper = [&](const TraceSample& s) { return 0.5 * (s.avg_curvature - s.min_curvature); };
        acc.add(q - std::min(lower(s0), lower(s1)));
        acc.add(std::max(upper(s0), upper(s1)) - q);
        tol = std::max(tol, 1e-4 + 10.0 * dt);
    }
    // endpoint comparison: exp(-e) d_final <= d_initial <= exp(e) d_final
    const double e = c / laws.sandwich_coeff();
    const double log_ratio = std::log(trace.front().diameter) - std::log(trace.back().diameter);
    acc.add(e - log_ratio);
    acc.add(log_ratio + e);
    tol = std::max(tol, 1e-4);
    return detail::finish("diameter-band",
                          "band on dlog(diam)/dt and endpoint diameter comparison", acc, tol,
                          reversed);
}

// ---------------------------------------------------------------------------
// eigenvalue monotonicity and its derivative formula
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t op_index_of(const FlowTrace& trace, const OperatorDescriptor& op) {
    const std::string id = op.id();
    for (std::size_t k = 0; k < trace.op_ids.size(); ++k)
        if (trace.op_ids[k] == id) return k;
    throw std::invalid_argument("trace does not track operator " + id);
}

}  // namespace detail

/// lambda_1 of -lap_g + a R_g nondecreasing along the unnormalized flow,
/// under regime (i) 0 <= a < borderline with min R >= ratio * max R >= 0, or
/// regime (ii) a >= borderline with min R >= 0.  Hypotheses are verified at
/// every sample; violation yields an inconclusive verdict naming the sample.
inline VerdictReport monotonicity_check(const ConformalLaws& laws, const FlowTrace& trace,
                                        const OperatorDescriptor& op, bool reversed = false) {
    detail::require_samples(trace, "monotonicity_check");
    if (trace.mode != FlowMode::unnormalized)
        throw std::invalid_argument("monotonicity_check: trace must come from unnormalized mode");
    const std::size_t idx = detail::op_index_of(trace, op);
    const double a = op.kind == OperatorKind::schrodinger ? op.a : 0.0;
    if (a < 0) throw std::invalid_argument("monotonicity_check: requires a >= 0");

    VerdictReport r;
    r.check_id = "eig-monotone[" + op.id() + "]";
    r.statement = "lambda_1(t) nondecreasing along the unnormalized flow";

    const bool regime_two = a >= laws.borderline_a() - 1e-15;
    const double hyp_tol = 1e-10;
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        const auto& s = trace.samples[k];
        bool ok = regime_two
                      ? s.min_curvature >= -hyp_tol
                      : (s.max_curvature >= -hyp_tol &&
                         s.min_curvature >= laws.regime_ratio() * s.max_curvature - hyp_tol);
        if (!ok) {
            r.status = VerdictStatus::inconclusive;
            char buf[96];
            std::snprintf(buf, sizeof buf, "curvature hypothesis fails at sample %zu (t=%g)", k,
                          s.t);
            r.details.push_back(buf);
            return r;
        }
    }

    detail::SlackAccumulator acc;
    double tol = 0;
    for (std::size_t k = 0; k + 1 < trace.samples.size(); ++k) {
        const double l0 = trace.samples[k].lambda[idx];
        const double l1 = trace.samples[k + 1].lambda[idx];
        acc.add(l1 - l0);
        tol = std::max(tol, 1e-6 * std::max(1.0, std::abs(l0)));
        if (trace.samples[k].gap[idx] < 1e-6 * std::abs(l0)) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "eigen-gap warning at sample %zu (t=%g)", k,
                          trace.samples[k].t);
            r.details.push_back(buf);
        }
    }
    if (trace.samples.size() == 1) acc.add(0.0);
    auto fin = detail::finish(r.check_id, r.statement, acc, tol, reversed, r.details);
    return fin;
}

/// Centered-difference d lambda_1/dt against the curvature pairing formula
///   deriv_energy_coeff(a) Int R (|grad f|^2 + a R f^2) dV
///   - deriv_mass_coeff(a) lambda_1 Int R f^2 dV
/// at the middle of three consecutive uniform-dt samples.  Passes when the
/// relative error is within 2% + 10 dt^2; gap below threshold is
/// inconclusive.
inline VerdictReport derivative_formula_check(const Background& bg, const FlowTrace& trace,
                                              const OperatorDescriptor& op, std::size_t center,
                                              double gap_threshold = 1e-4, bool reversed = false) {
    detail::require_samples(trace, "derivative_formula_check");
    if (center == 0 || center + 1 >= trace.samples.size())
        throw std::invalid_argument("derivative_formula_check: window out of range");
    const std::size_t idx = detail::op_index_of(trace, op);
    const auto& s0 = trace.samples[center - 1];
    const auto& s1 = trace.samples[center];
    const auto& s2 = trace.samples[center + 1];
    const double dt01 = s1.t - s0.t;
    const double dt12 = s2.t - s1.t;
    if (std::abs(dt01 - dt12) > 1e-9 * dt01)
        throw std::invalid_argument("derivative_formula_check: samples must be uniform in dt");

    VerdictReport r;
    r.check_id = "eig-derivative[" + op.id() + "]";
    r.statement = "d lambda_1/dt matches the curvature pairing formula";
    if (s1.gap[idx] < gap_threshold * std::max(1.0, std::abs(s1.lambda[idx]))) {
        r.status = VerdictStatus::inconclusive;
        r.details.push_back("eigen-gap below threshold at the window center");
        return r;
    }

    const double a = op.kind == OperatorKind::schrodinger ? op.a : 0.0;
    const double dldt = (s2.lambda[idx] - s0.lambda[idx]) / (s2.t - s0.t);

    SpectralResult eig = first_eigen(bg, s1.u, op);
    const Eigen::VectorXd curv = scalar_curvature(bg, s1.u);
    const Eigen::VectorXd mass = volume_element(bg, s1.u).per_vertex;
    const double energy_term =
        curvature_weighted_energy(bg, s1.u, curv, eig.f) +
        a * (curv.array().square() * eig.f.array().square() * mass.array()).sum();
    const double mass_term = (curv.array() * eig.f.array().square() * mass.array()).sum();
    const double formula = bg.laws.deriv_energy_coeff(a) * energy_term -
                           bg.laws.deriv_mass_coeff(a) * eig.lambda * mass_term;

    const double dt = dt01;
    const double tol_rel = 0.02 + 10.0 * dt * dt;
    const double scale = std::max({std::abs(dldt), std::abs(formula),
                                   1e-12 * std::max(1.0, std::abs(eig.lambda))});
    const double err = std::abs(dldt - formula) / scale;

    r.margin = reversed ? err - tol_rel : tol_rel - err;
    r.tolerance = 0.0;
    r.status = r.margin >= 0 ? VerdictStatus::pass : VerdictStatus::fail;
    char buf[128];
    std::snprintf(buf, sizeof buf, "difference %g, formula %g, relative error %g", dldt, formula,
                  err);
    r.details.push_back(buf);
    return r;
}

// ---------------------------------------------------------------------------
// sandwich comparison and chained closed-form bounds
// ---------------------------------------------------------------------------

/// Two-sided comparison exp(-c) lambda_Y <= lambda_0 <= exp(c) lambda_Y with
/// c from the initial extrema, evaluated in the log domain, plus the terminal
/// accumulator budgets.  Unconverged traces are inconclusive.
inline VerdictReport sandwich_check(const ConformalLaws& laws, const FlowTrace& trace,
                                    double lambda0, double lambdaY, double tol = 1e-6,
                                    double tail_tolerance = 0, bool reversed = false) {
    detail::require_samples(trace, "sandwich_check");
    const auto& first = trace.front();
    const double c = sandwich_constant(laws, first.min_curvature, first.max_curvature);
    VerdictReport r;
    r.check_id = "sandwich";
    r.statement = "exp(-c) lambda_Y <= lambda_0 <= exp(c) lambda_Y";
    if (trace.status != FlowStatus::converged) {
        r.status = VerdictStatus::inconclusive;
        r.details.push_back("flow did not converge; comparison metric not reached");
        return r;
    }
    if (!(lambda0 > 0) || !(lambdaY > 0))
        throw std::invalid_argument("sandwich_check: eigenvalues must be positive");

    const double log_ratio = std::log(lambda0) - std::log(lambdaY);
    detail::SlackAccumulator acc;
    acc.add(c - log_ratio);
    acc.add(log_ratio + c);
    const double budget = 2.0 * (first.min_curvature / first.max_curvature - 1.0);
    const auto& last = trace.back();
    acc.add(budget - last.integral_plus + tail_tolerance);
    acc.add(budget + last.integral_minus + tail_tolerance);

    char buf[128];
    std::snprintf(buf, sizeof buf, "c = %g, log(lambda_0/lambda_Y) = %g", c, log_ratio);
    std::vector<std::string> details{buf};
    return detail::finish("sandwich", r.statement, acc, tol, reversed, std::move(details));
}

enum class ChainKind { liyau, ling };

/// Inputs of the chained closed-form lower bounds: dimension, the constant
/// curvature parameter kappa < 0 of the comparison metric, the sandwich
/// exponent c >= 0, and the diameter d > 0 of the initial metric.
struct ChainParams {
    int n = 3;
    double kappa = -1;
    double c = 0;
    double d = 1;
};

/// Closed-form chained lower bound for lambda_1 of the initial metric:
///   liyau: 1/((n-1) e^{nc/(n-1)} d^2) exp(-1 - sqrt(1 + 4(n-1)^2 e^{c/(n-1)} d^2 |kappa|))
///   ling : (n-1) kappa / (2 e^c) + pi^2 / (e^{nc/(n-1)} d^2)
inline double chained_lower_bound(const ChainParams& p, ChainKind kind) {
    if (p.n < 3) throw std::invalid_argument("chained_lower_bound: n must be >= 3");
    if (!(p.kappa < 0)) throw std::invalid_argument("chained_lower_bound: kappa must be < 0");
    if (!(p.c >= 0)) throw std::invalid_argument("chained_lower_bound: c must be >= 0");
    if (!(p.d > 0)) throw std::invalid_argument("chained_lower_bound: d must be > 0");
    const double n1 = p.n - 1.0;
    const double d2 = p.d * p.d;
    if (kind == ChainKind::liyau) {
        const double pre = 1.0 / (n1 * std::exp(p.n * p.c / n1) * d2);
        const double inner = 1.0 + 4.0 * n1 * n1 * std::exp(p.c / n1) * d2 * std::abs(p.kappa);
        return pre * std::exp(-1.0 - std::sqrt(inner));
    }
    return 0.5 * n1 * p.kappa / std::exp(p.c) +
           std::numbers::pi * std::numbers::pi / (std::exp(p.n * p.c / n1) * d2);
}

}  // namespace yamabe
