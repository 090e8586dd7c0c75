#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "yamabe/conformal.hpp"
#include "yamabe/spectral.hpp"

namespace yamabe {

enum class FlowMode { normalized, unnormalized };
enum class FlowStatus { converged, t_end_reached, aborted_positivity };

inline const char* to_string(FlowStatus s) {
    switch (s) {
        case FlowStatus::converged: return "converged";
        case FlowStatus::t_end_reached: return "t-end-reached";
        case FlowStatus::aborted_positivity: return "aborted-positivity";
    }
    return "?";
}

struct PositivityAbort : std::runtime_error {
    PositivityAbort() : std::runtime_error("flow_step: stage produced a nonpositive factor") {}
};

struct FlowConfig {
    FlowMode mode = FlowMode::normalized;
    double t_end = 1.0;
    double cfl = 0.5;
    double sample_dt = 0.05;
    double convergence_tol = 1e-7;  // sup|R - Rbar| threshold, normalized mode
    std::vector<OperatorDescriptor> tracked_ops;
    bool deterministic = true;
    int threads = 1;
    double eigen_tol = 1e-9;

    void validate() const {
        if (!(t_end > 0)) throw std::invalid_argument("FlowConfig: t_end must be > 0");
        if (!(cfl > 0) || cfl > 1) throw std::invalid_argument("FlowConfig: cfl must be in (0,1]");
        if (!(sample_dt > 0)) throw std::invalid_argument("FlowConfig: sample_dt must be > 0");
        if (!(convergence_tol > 0))
            throw std::invalid_argument("FlowConfig: convergence_tol must be > 0");
    }
};

struct TraceSample {
    double t = 0;
    std::vector<double> lambda;
    std::vector<double> gap;
    double min_curvature = 0;
    double max_curvature = 0;
    double avg_curvature = 0;
    double volume = 0;
    double diameter = 0;
    double integral_plus = 0;   // Int_0^t (max R - Rbar) ds
    double integral_minus = 0;  // Int_0^t (min R - Rbar) ds
    Eigen::VectorXd u;          // conformal factor at the sample (kept for checks)
};

struct FlowTrace {
    FlowMode mode = FlowMode::normalized;
    std::vector<std::string> op_ids;
    std::vector<TraceSample> samples;
    FlowStatus status = FlowStatus::t_end_reached;
    double final_sup_deviation = 0;  // sup|R - Rbar| at the final state

    const TraceSample& front() const { return samples.front(); }
    const TraceSample& back() const { return samples.back(); }
};

/// One explicit RK4 step of du/dt = -flow_speed (R - Rbar) u (normalized) or
/// -flow_speed R u (unnormalized), with curvature and average recomputed at
/// every stage.  Boundary backgrounds keep vanishing mean curvature through
/// the reflecting stencil of the background form; no extra boundary update is
/// applied.  Throws PositivityAbort (state untouched) if any stage leaves the
/// positive cone.
inline ConformalState flow_step(const Background& bg, const ConformalState& state, double dt,
                                FlowMode mode) {
    if (!(dt > 0)) throw std::invalid_argument("flow_step: dt must be > 0");
    require_positive(state.u);
    const double speed = bg.laws.flow_speed();

    auto rhs = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
        if ((u.array() <= 0).any() || !u.allFinite()) throw PositivityAbort();
        const CurvatureSummary s = analyze(bg, u);
        if (mode == FlowMode::normalized)
            return (-speed) * (s.curvature.array() - s.average) * u.array();
        return (-speed) * s.curvature.array() * u.array();
    };

    const Eigen::VectorXd k1 = rhs(state.u);
    const Eigen::VectorXd k2 = rhs(state.u + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(state.u + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(state.u + dt * k3);
    Eigen::VectorXd next = state.u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((next.array() <= 0).any() || !next.allFinite()) throw PositivityAbort();
    return ConformalState{std::move(next), state.time + dt};
}

struct FlowResult {
    ConformalState state;
    FlowTrace trace;
};

/// Runs the flow with the adaptive diffusive step
///   dt = cfl * h_eff^2 / (4 diffusion * max_i u_i^{-(volume_exponent - 2)}),
/// h_eff^2 the inverse of the largest background-Laplacian eigenvalue
/// estimate.  dt is clipped to land exactly on sample boundaries and halved
/// on positivity aborts; if halving drives dt below 1e-12 the run ends with
/// status aborted-positivity.  Normalized runs stop once sup|R - Rbar| falls
/// below convergence_tol; every sample records tracked eigenvalues (warm
/// started per operator), curvature extrema, volume, diameter, and the
/// trapezoid accumulators of (max R - Rbar) and (min R - Rbar).
inline FlowResult run_flow(const Background& bg, const Eigen::VectorXd& u0,
                           const FlowConfig& cfg) {
    cfg.validate();
    require_positive(u0);
    for (const auto& op : cfg.tracked_ops) detail::validate_descriptor(bg, op);

    const double h_eff2 = 1.0 / laplacian0_spectral_bound(bg);
    const double stiff_exp = bg.laws.volume_exponent() - 2.0;
    const double denom = 4.0 * bg.laws.diffusion();
    auto dt_base = [&](const Eigen::VectorXd& u) {
        return cfg.cfl * h_eff2 / denom * std::pow(u.minCoeff(), stiff_exp);
    };

    FlowResult out;
    out.state = ConformalState{u0, 0.0};
    out.trace.mode = cfg.mode;
    for (const auto& op : cfg.tracked_ops) out.trace.op_ids.push_back(op.id());

    std::vector<Eigen::VectorXd> warm(cfg.tracked_ops.size());
    double integral_plus = 0, integral_minus = 0;

    auto record = [&](const ConformalState& st, const CurvatureSummary& s) {
        TraceSample sample;
        sample.t = st.time;
        for (std::size_t k = 0; k < cfg.tracked_ops.size(); ++k) {
            SpectralResult r = first_eigen(bg, st.u, cfg.tracked_ops[k], cfg.eigen_tol, warm[k]);
            warm[k] = r.f;
            sample.lambda.push_back(r.lambda);
            sample.gap.push_back(r.gap);
        }
        sample.min_curvature = s.min_curvature;
        sample.max_curvature = s.max_curvature;
        sample.avg_curvature = s.average;
        sample.volume = s.volume;
        sample.diameter = weighted_diameter(bg, st.u, cfg.threads);
        sample.integral_plus = integral_plus;
        sample.integral_minus = integral_minus;
        sample.u = st.u;
        out.trace.samples.push_back(std::move(sample));
    };

    CurvatureSummary summary = out.state.summary(bg);
    record(out.state, summary);

    double next_sample = cfg.sample_dt;
    const double time_eps = 1e-9 * cfg.sample_dt;

    auto sup_deviation = [](const CurvatureSummary& s) {
        return std::max(std::abs(s.max_curvature - s.average),
                        std::abs(s.min_curvature - s.average));
    };

    while (true) {
        if (cfg.mode == FlowMode::normalized && sup_deviation(summary) < cfg.convergence_tol) {
            out.trace.status = FlowStatus::converged;
            break;
        }
        if (out.state.time >= cfg.t_end - time_eps) {
            out.trace.status = FlowStatus::t_end_reached;
            break;
        }

        double dt = std::min(dt_base(out.state.u), cfg.t_end - out.state.time);
        dt = std::min(dt, next_sample - out.state.time);
        ConformalState stepped;
        bool stepped_ok = false;
        while (!stepped_ok) {
            try {
                stepped = flow_step(bg, out.state, dt, cfg.mode);
                stepped_ok = true;
            } catch (const PositivityAbort&) {
                dt *= 0.5;
                if (dt < 1e-12) {
                    out.trace.status = FlowStatus::aborted_positivity;
                    break;
                }
            }
        }
        if (!stepped_ok) break;

        CurvatureSummary next_summary = analyze(bg, stepped.u);
        integral_plus += 0.5 * dt *
                         ((summary.max_curvature - summary.average) +
                          (next_summary.max_curvature - next_summary.average));
        integral_minus += 0.5 * dt *
                          ((summary.min_curvature - summary.average) +
                           (next_summary.min_curvature - next_summary.average));
        out.state = std::move(stepped);
        summary = std::move(next_summary);

        if (out.state.time >= next_sample - time_eps) {
            record(out.state, summary);
            next_sample += cfg.sample_dt;
        }
    }

    out.trace.final_sup_deviation = sup_deviation(summary);
    if (out.trace.samples.back().t < out.state.time - time_eps) record(out.state, summary);
    return out;
}

/// Pointwise residual of the sampled curvature evolution: centered-difference
/// dR/dt minus diffusion * lap_g R + R (R - Rbar) (normalized) or + R^2
/// (unnormalized), evaluated at the middle of three consecutive uniform-dt
/// states.  Discretization diagnostic, expected O(dt^2 + h^2).
inline Eigen::VectorXd curvature_evolution_residual(const Background& bg,
                                                    const ConformalState& s0,
                                                    const ConformalState& s1,
                                                    const ConformalState& s2, FlowMode mode) {
    const double dt01 = s1.time - s0.time;
    const double dt12 = s2.time - s1.time;
    if (!(dt01 > 0) || !(dt12 > 0) || std::abs(dt01 - dt12) > 1e-9 * dt01)
        throw std::invalid_argument("curvature_evolution_residual: states must be uniform in dt");
    const Eigen::VectorXd r0 = scalar_curvature(bg, s0.u);
    const CurvatureSummary mid = analyze(bg, s1.u);
    const Eigen::VectorXd r2 = scalar_curvature(bg, s2.u);

    const Eigen::VectorXd dRdt = (r2 - r0) / (s2.time - s0.time);
    Eigen::VectorXd rhs = bg.laws.diffusion() * conformal_laplacian(bg, s1.u, mid.curvature);
    if (mode == FlowMode::normalized)
        rhs.array() += mid.curvature.array() * (mid.curvature.array() - mid.average);
    else
        rhs.array() += mid.curvature.array().square();
    return dRdt - rhs;
}

struct YamabeSolution {
    Eigen::VectorXd u;
    double lambda = 0;      // constant curvature of the solved metric
    double residual = 0;    // final sup-norm residual
    int iterations = 0;
};

/// Solves the constant-curvature fixed-point problem
///   -curvature_coeff * lap0 u + R0 u = lambda u^{curvature_exponent},  u > 0,
/// normalized so the conformal volume equals target_volume.  Negative case
/// only (max R0 < 0).  Newton iteration on the bordered (u, lambda) system
/// with a positivity-preserving line search.
inline YamabeSolution solve_yamabe(const Background& bg, double target_volume, double tol = 1e-11) {
    if (bg.background_curvature.maxCoeff() >= 0)
        throw std::invalid_argument("solve_yamabe: requires max R0 < 0 (negative case only)");
    if (!(target_volume > 0)) throw std::invalid_argument("solve_yamabe: target volume must be > 0");
    if (!(tol > 0)) throw std::invalid_argument("solve_yamabe: tol must be > 0");

    const int v = bg.vertex_count;
    const double cc = bg.laws.curvature_coeff();
    const double ce = bg.laws.curvature_exponent();
    const double ve = bg.laws.volume_exponent();
    const Eigen::VectorXd& vol = bg.vertex_volumes;
    const Eigen::VectorXd& r0 = bg.background_curvature;

    const double base_volume = vol.sum();
    const double c0 = std::pow(target_volume / base_volume, 1.0 / ve);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(v, c0);
    double lambda = std::pow(c0, -bg.laws.curvature_scaling()) * r0.dot(vol) / base_volume;

    auto pde_residual = [&](const Eigen::VectorXd& uu, double ll) -> Eigen::VectorXd {
        Eigen::VectorXd lap = laplacian0(bg, uu);
        Eigen::VectorXd f(v);
        for (int i = 0; i < v; ++i)
            f[i] = -cc * lap[i] + r0[i] * uu[i] - ll * std::pow(uu[i], ce);
        return f;
    };
    auto volume_residual = [&](const Eigen::VectorXd& uu) {
        return (uu.array().pow(ve) * vol.array()).sum() - target_volume;
    };
    auto total_residual = [&](const Eigen::VectorXd& uu, double ll) {
        return std::max(pde_residual(uu, ll).cwiseAbs().maxCoeff(),
                        std::abs(volume_residual(uu)) / target_volume);
    };

    double best = total_residual(u, lambda);
    constexpr int max_newton = 60;
    int iter = 0;
    for (; iter < max_newton && best > tol; ++iter) {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(bg.edges.size() * 4 + 3 * v + 1);
        for (const Edge& e : bg.edges) {
            const double wi = cc * e.weight / vol[e.i];
            const double wj = cc * e.weight / vol[e.j];
            trips.emplace_back(e.i, e.i, wi);
            trips.emplace_back(e.i, e.j, -wi);
            trips.emplace_back(e.j, e.j, wj);
            trips.emplace_back(e.j, e.i, -wj);
        }
        for (int i = 0; i < v; ++i) {
            trips.emplace_back(i, i, r0[i] - lambda * ce * std::pow(u[i], ce - 1.0));
            trips.emplace_back(i, v, -std::pow(u[i], ce));
            trips.emplace_back(v, i, ve * vol[i] * std::pow(u[i], ve - 1.0));
        }
        Eigen::SparseMatrix<double> jac(v + 1, v + 1);
        jac.setFromTriplets(trips.begin(), trips.end());

        Eigen::VectorXd rhs(v + 1);
        rhs.head(v) = -pde_residual(u, lambda);
        rhs[v] = -volume_residual(u);

        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(jac);
        if (lu.info() != Eigen::Success)
            throw SolverError("solve_yamabe: singular Newton system", best);
        Eigen::VectorXd delta = lu.solve(rhs);

        double step = 1.0;
        for (int i = 0; i < v; ++i)
            if (delta[i] < 0) step = std::min(step, -0.9 * u[i] / delta[i]);
        double accepted = -1;
        for (int halving = 0; halving < 30; ++halving) {
            Eigen::VectorXd trial = u + step * delta.head(v);
            const double trial_lambda = lambda + step * delta[v];
            if ((trial.array() > 0).all()) {
                const double res = total_residual(trial, trial_lambda);
                if (res < best) {
                    u = std::move(trial);
                    lambda = trial_lambda;
                    accepted = res;
                    break;
                }
            }
            step *= 0.5;
        }
        if (accepted < 0) throw SolverError("solve_yamabe: Newton stagnation", best);
        best = accepted;
    }
    if (best > tol) throw SolverError("solve_yamabe: did not reach tolerance", best);

    YamabeSolution out;
    out.u = std::move(u);
    out.lambda = lambda;
    out.residual = best;
    out.iterations = iter;
    return out;
}

}  // namespace yamabe
