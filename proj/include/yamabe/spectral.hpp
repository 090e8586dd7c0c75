#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "yamabe/conformal.hpp"

namespace yamabe {

enum class OperatorKind { laplacian, schrodinger };
enum class BoundaryCondition { closed, dirichlet, neumann };

/// Tracked operator: the Laplacian pencil of the conformal metric, or the
/// Schrodinger operator -lap_g + a R_g, under closed/Dirichlet/Neumann
/// conditions.  `a` is ignored for the plain Laplacian.
struct OperatorDescriptor {
    OperatorKind kind = OperatorKind::laplacian;
    double a = 0;
    BoundaryCondition bc = BoundaryCondition::closed;

    std::string id() const {
        std::string s = kind == OperatorKind::laplacian ? "lap" : "schrod";
        if (kind == OperatorKind::schrodinger) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "-a%g", a);
            s += buf;
        }
        switch (bc) {
            case BoundaryCondition::closed: s += "-closed"; break;
            case BoundaryCondition::dirichlet: s += "-dirichlet"; break;
            case BoundaryCondition::neumann: s += "-neumann"; break;
        }
        return s;
    }
};

struct SpectralResult {
    double lambda = 0;
    Eigen::VectorXd f;          // full-size eigenfunction (zero on Dirichlet boundary)
    double residual = 0;        // |A f - lambda M f| over |f| in the mass norms
    double normalization = 0;   // f' diag(M) f, unit by construction
    double gap = 0;             // estimated distance to the next eigenvalue
    int iterations = 0;
};

struct SolverError : std::runtime_error {
    double best_residual;
    explicit SolverError(const std::string& msg, double res)
        : std::runtime_error(msg), best_residual(res) {}
};

namespace detail {

struct Pencil {
    Eigen::SparseMatrix<double> A;  // restricted energy (+ potential) operator
    Eigen::VectorXd M;              // restricted mass weights
    std::vector<std::int32_t> active;  // active vertex ids
    bool deflate_constants = false;
    double lower_bound = 0;  // certified lower bound for the pencil spectrum
    double span = 0;         // certified upper bound minus lower bound
};

inline void validate_descriptor(const Background& bg, const OperatorDescriptor& op) {
    const bool needs_boundary = op.bc != BoundaryCondition::closed;
    if (needs_boundary && !bg.has_boundary())
        throw std::invalid_argument("OperatorDescriptor: " + op.id() +
                                    " requires a background with boundary");
    if (!needs_boundary && bg.has_boundary())
        throw std::invalid_argument(
            "OperatorDescriptor: closed condition on a background with boundary");
    if (op.kind == OperatorKind::schrodinger && !std::isfinite(op.a))
        throw std::invalid_argument("OperatorDescriptor: coefficient a must be finite");
}

inline Pencil assemble_pencil(const Background& bg, const Eigen::VectorXd& u,
                              const OperatorDescriptor& op) {
    validate_descriptor(bg, op);
    require_positive(u);
    const int v = bg.vertex_count;
    const Eigen::VectorXd mass = volume_element(bg, u).per_vertex;

    Pencil p;
    const bool restrict_interior = op.bc == BoundaryCondition::dirichlet;
    std::vector<std::int32_t> to_active(v, -1);
    for (int i = 0; i < v; ++i)
        if (!restrict_interior || !bg.on_boundary[i]) {
            to_active[i] = static_cast<std::int32_t>(p.active.size());
            p.active.push_back(i);
        }
    const int na = static_cast<int>(p.active.size());
    if (na == 0) throw std::invalid_argument("OperatorDescriptor: no interior vertices");

    Eigen::VectorXd r;
    if (op.kind == OperatorKind::schrodinger) r = scalar_curvature(bg, u);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(bg.edges.size() * 4 + na);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(na);
    for (const Edge& e : bg.edges) {
        const double w = e.weight * 0.5 * (u[e.i] * u[e.i] + u[e.j] * u[e.j]);
        const int ai = to_active[e.i];
        const int aj = to_active[e.j];
        if (ai >= 0) diag[ai] += w;
        if (aj >= 0) diag[aj] += w;
        if (ai >= 0 && aj >= 0) {
            trips.emplace_back(ai, aj, -w);
            trips.emplace_back(aj, ai, -w);
        }
    }
    double lb = 0;
    for (int k = 0; k < na; ++k) {
        const int i = p.active[k];
        if (op.kind == OperatorKind::schrodinger) {
            diag[k] += op.a * r[i] * mass[i];
            lb = std::min(lb, op.a * r[i]);
        }
        trips.emplace_back(k, k, diag[k]);
    }
    p.A.resize(na, na);
    p.A.setFromTriplets(trips.begin(), trips.end());
    p.M.resize(na);
    for (int k = 0; k < na; ++k) p.M[k] = mass[p.active[k]];
    p.deflate_constants = op.kind == OperatorKind::laplacian && op.bc == BoundaryCondition::closed;
    p.lower_bound = lb;

    // Gershgorin bound of M^{-1/2} A M^{-1/2} gives a certified spectral span
    Eigen::VectorXd row_bound = Eigen::VectorXd::Zero(na);
    for (int col = 0; col < p.A.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, col); it; ++it) {
            const double b = it.value() / std::sqrt(p.M[it.row()] * p.M[it.col()]);
            row_bound[it.row()] += it.row() == it.col() ? b : std::abs(b);
        }
    p.span = std::max(row_bound.maxCoeff() - lb, 0.0);
    return p;
}

inline void deflate(const Pencil& p, Eigen::VectorXd& s) {
    if (!p.deflate_constants) return;
    const double c = p.M.dot(s) / p.M.sum();
    s.array() -= c;
}

inline double mass_norm(const Pencil& p, const Eigen::VectorXd& s) {
    return std::sqrt((s.array().square() * p.M.array()).sum());
}

inline Eigen::VectorXd seed_vector(int n, unsigned salt) {
    std::mt19937 rng(0x9e3779b9u + salt);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = uni(rng);
    return s;
}

}  // namespace detail

/// Smallest eigenvalue of the symmetric pencil (A_op, diag(M)) on the
/// admissible subspace: constants are deflated by explicit M-orthogonal
/// projection for the closed Laplacian (first nonzero eigenvalue); Dirichlet
/// restricts to interior vertices; Neumann and closed Schrodinger use the
/// full space.  Shift-invert block iteration with inertia-certified shifts:
/// every shift update is accepted only if the LDLT pivot signs prove it lies
/// below the target eigenvalue, which keeps clustered first eigenvalues from
/// stalling the iteration.  Deterministic start (or warm start from a
/// previous eigenvector); converges when the mass-norm residual drops below
/// tol * max(|lambda|, 1e-3 * spectral span), within a budget of 10 V
/// operator applications.
inline SpectralResult first_eigen(const Background& bg, const Eigen::VectorXd& u,
                                  const OperatorDescriptor& op, double tol = 1e-9,
                                  const Eigen::VectorXd& warm_start = Eigen::VectorXd()) {
    detail::Pencil p = detail::assemble_pencil(bg, u, op);
    const int na = static_cast<int>(p.active.size());

    if (na == 1) {
        SpectralResult out;
        out.lambda = p.A.coeff(0, 0) / p.M[0];
        out.gap = std::numeric_limits<double>::infinity();
        out.f = Eigen::VectorXd::Zero(bg.vertex_count);
        out.f[p.active[0]] = 1.0 / std::sqrt(p.M[0]);
        out.normalization = 1.0;
        out.iterations = 0;
        return out;
    }

    const long budget = std::max<long>(200, 10L * bg.vertex_count);
    long applications = 0;

    const int below_target = p.deflate_constants ? 1 : 0;  // deflated constant mode
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    {
        Eigen::SparseMatrix<double> pattern = p.A;
        solver.analyzePattern(pattern);
    }
    // factorize A - sigma M and count eigenvalues below sigma via pivot signs
    auto factorize = [&](double s, int& below) -> bool {
        Eigen::SparseMatrix<double> shifted = p.A;
        for (int k = 0; k < na; ++k) shifted.coeffRef(k, k) -= s * p.M[k];
        solver.factorize(shifted);
        applications += 3;
        if (solver.info() != Eigen::Success) return false;
        const auto d = solver.vectorD();
        if (!d.allFinite()) return false;
        below = 0;
        for (int k = 0; k < na; ++k)
            if (d[k] < 0) ++below;
        return true;
    };

    const double tiny = std::max(1e-13 * p.span, 1e-300);
    double sigma = p.lower_bound - std::max(1e-4 * p.span, tiny);
    {
        int below = 0;
        if (!factorize(sigma, below) || below > below_target)
            throw SolverError("first_eigen: factorization below the spectrum failed", -1.0);
    }
    // raises the shift toward target while the pivot count certifies it
    auto raise_shift = [&](double target) {
        if (!(target > sigma + tiny)) return;
        double lo = sigma;
        double t = target;
        bool moved = false;
        for (int tries = 0; tries < 40 && t > lo + tiny; ++tries) {
            int below = 0;
            if (factorize(t, below) && below <= below_target) {
                sigma = t;
                moved = true;
                break;
            }
            t = 0.5 * (t + lo);
        }
        if (!moved) {
            int below = 0;
            factorize(lo, below);  // restore a valid factorization
        }
    };

    const int block = std::min(4, na);
    Eigen::MatrixXd S(na, block);
    if (warm_start.size() == bg.vertex_count) {
        for (int k = 0; k < na; ++k) S(k, 0) = warm_start[p.active[k]];
    } else {
        S.col(0) = detail::seed_vector(na, 1);
    }
    for (int c = 1; c < block; ++c) S.col(c) = detail::seed_vector(na, 1 + c);

    auto orthonormalize = [&](Eigen::MatrixXd& B) {
        for (int c = 0; c < B.cols(); ++c) {
            Eigen::VectorXd col = B.col(c);
            detail::deflate(p, col);
            for (int d = 0; d < c; ++d) {
                const double proj = (col.array() * B.col(d).array() * p.M.array()).sum();
                col -= proj * B.col(d);
            }
            double nrm = detail::mass_norm(p, col);
            if (!(nrm > 1e-300) || !col.allFinite()) {
                col = detail::seed_vector(na, 40 + c);
                detail::deflate(p, col);
                for (int d = 0; d < c; ++d) {
                    const double proj = (col.array() * B.col(d).array() * p.M.array()).sum();
                    col -= proj * B.col(d);
                }
                nrm = detail::mass_norm(p, col);
            }
            B.col(c) = col / nrm;
        }
    };

    orthonormalize(S);

    double best_residual = std::numeric_limits<double>::infinity();
    double theta1 = 0, theta2 = 0;
    Eigen::VectorXd y;
    int iterations = 0;
    double final_residual = 0;

    while (true) {
        ++iterations;
        Eigen::MatrixXd T(na, block);
        for (int c = 0; c < block; ++c) {
            T.col(c) = solver.solve(p.M.asDiagonal() * S.col(c));
            ++applications;
        }
        if (!T.allFinite()) T = S;  // shift landed on an eigenvalue; keep the subspace
        orthonormalize(T);

        Eigen::MatrixXd AT(na, block);
        for (int c = 0; c < block; ++c) {
            AT.col(c) = p.A * T.col(c);
            ++applications;
        }
        Eigen::MatrixXd ritz = T.transpose() * AT;
        ritz = 0.5 * (ritz + ritz.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(ritz);
        theta1 = small.eigenvalues()[0];
        theta2 = block > 1 ? small.eigenvalues()[1] : theta1;
        S = T * small.eigenvectors();

        y = S.col(0);
        Eigen::VectorXd resid = p.A * y - theta1 * (p.M.asDiagonal() * y);
        ++applications;
        const double res = std::sqrt((resid.array().square() / p.M.array()).sum());
        best_residual = std::min(best_residual, res);
        const double scale = std::max({std::abs(theta1), 1e-3 * p.span, 1e-300});
        if (res <= tol * scale) {
            final_residual = res;
            break;
        }
        if (applications >= budget)
            throw SolverError("first_eigen: iteration budget exhausted for " + op.id(),
                              best_residual);
        if (iterations % 3 == 0) raise_shift(theta1 - std::max(res, tiny));
    }

    // certify minimality: no admissible eigenvalue lies below the result
    {
        const double margin = std::max(4.0 * final_residual, 10.0 * tiny);
        const double check = theta1 - margin;
        if (check > sigma) {
            int below = 0;
            if (factorize(check, below) && below > below_target)
                throw SolverError("first_eigen: converged to a non-minimal eigenvalue",
                                  final_residual);
        }
    }

    SpectralResult out;
    out.lambda = theta1;
    out.gap = block > 1 ? theta2 - theta1 : std::numeric_limits<double>::infinity();
    out.iterations = iterations;
    out.residual = final_residual;
    out.normalization = (y.array().square() * p.M.array()).sum();
    // deterministic sign: largest-magnitude entry positive
    int imax = 0;
    y.cwiseAbs().maxCoeff(&imax);
    if (y[imax] < 0) y = -y;
    out.f = Eigen::VectorXd::Zero(bg.vertex_count);
    for (int k = 0; k < na; ++k) out.f[p.active[k]] = y[k];
    return out;
}

/// Full dense symmetric generalized eigen-decomposition of the pencil with
/// the descriptor's boundary restriction applied (no constant deflation);
/// returns the k smallest eigenvalues ascending.  Test oracle only.
inline std::vector<double> dense_oracle(const Background& bg, const Eigen::VectorXd& u,
                                        const OperatorDescriptor& op, int k) {
    if (bg.vertex_count > 4096)
        throw std::invalid_argument("dense_oracle: refusing dense solve with V > 4096");
    detail::Pencil p = detail::assemble_pencil(bg, u, op);
    const int na = static_cast<int>(p.active.size());
    Eigen::MatrixXd A = Eigen::MatrixXd(p.A);
    Eigen::MatrixXd M = p.M.asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, M,
                                                                     Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw SolverError("dense_oracle: dense decomposition failed", -1.0);
    const int count = std::min<int>(k, na);
    std::vector<double> out(count);
    for (int i = 0; i < count; ++i) out[i] = solver.eigenvalues()[i];
    return out;
}

/// Index of the first admissible eigenvalue in the dense oracle's ascending
/// list: 1 for the closed Laplacian (skips the constant mode), 0 otherwise.
inline int admissible_index(const OperatorDescriptor& op) {
    return (op.kind == OperatorKind::laplacian && op.bc == BoundaryCondition::closed) ? 1 : 0;
}

}  // namespace yamabe
