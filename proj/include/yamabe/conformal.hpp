#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "yamabe/background.hpp"

namespace yamabe {

inline void require_positive(const Eigen::VectorXd& u, const char* what = "conformal factor") {
    if ((u.array() <= 0).any() || !u.allFinite())
        throw std::domain_error(std::string(what) + " must be strictly positive and finite");
}

/// Curvature of the conformal metric: R_i = u_i^{-ce} (-cc * lap0 u(i) + R0_i u_i)
/// with ce/cc from the background's law family.
inline Eigen::VectorXd scalar_curvature(const Background& bg, const Eigen::VectorXd& u) {
    require_positive(u);
    const double cc = bg.laws.curvature_coeff();
    const double ce = bg.laws.curvature_exponent();
    Eigen::VectorXd lap = laplacian0(bg, u);
    Eigen::VectorXd r(bg.vertex_count);
    for (int i = 0; i < bg.vertex_count; ++i)
        r[i] = std::pow(u[i], -ce) * (-cc * lap[i] + bg.background_curvature[i] * u[i]);
    return r;
}

struct VolumeElement {
    Eigen::VectorXd per_vertex;
    double total = 0;
};

/// dV_i = u_i^{volume_exponent} v_i and its total.
inline VolumeElement volume_element(const Background& bg, const Eigen::VectorXd& u) {
    require_positive(u);
    const double ve = bg.laws.volume_exponent();
    VolumeElement out;
    out.per_vertex = u.array().pow(ve) * bg.vertex_volumes.array();
    out.total = out.per_vertex.sum();
    return out;
}

inline double average_scalar_curvature(const Background& bg, const Eigen::VectorXd& u) {
    const Eigen::VectorXd r = scalar_curvature(bg, u);
    const VolumeElement dv = volume_element(bg, u);
    return r.dot(dv.per_vertex) / dv.total;
}

/// Energy operator and mass weights of the conformal metric.  The operator
/// has edge weights w_ij (u_i^2 + u_j^2)/2, so f' A f is the conformal
/// Dirichlet energy; the mass weights are the conformal volume elements.
struct ConformalForms {
    Eigen::SparseMatrix<double> energy;
    Eigen::VectorXd mass;
};

inline ConformalForms conformal_forms(const Background& bg, const Eigen::VectorXd& u) {
    require_positive(u);
    const int v = bg.vertex_count;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(bg.edges.size() * 4 + v);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(v);
    for (const Edge& e : bg.edges) {
        const double w = e.weight * 0.5 * (u[e.i] * u[e.i] + u[e.j] * u[e.j]);
        diag[e.i] += w;
        diag[e.j] += w;
        trips.emplace_back(e.i, e.j, -w);
        trips.emplace_back(e.j, e.i, -w);
    }
    for (int i = 0; i < v; ++i) trips.emplace_back(i, i, diag[i]);
    ConformalForms forms;
    forms.energy.resize(v, v);
    forms.energy.setFromTriplets(trips.begin(), trips.end());
    forms.mass = volume_element(bg, u).per_vertex;
    return forms;
}

/// f' A f without assembling the sparse operator.
inline double conformal_energy(const Background& bg, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& f) {
    double acc = 0;
    for (const Edge& e : bg.edges) {
        const double w = e.weight * 0.5 * (u[e.i] * u[e.i] + u[e.j] * u[e.j]);
        const double d = f[e.i] - f[e.j];
        acc += w * d * d;
    }
    return acc;
}

/// lap_g f = -M^{-1} A f for the pencil (A, M) of conformal_forms.
inline Eigen::VectorXd conformal_laplacian(const Background& bg, const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& f) {
    require_positive(u);
    const int v = bg.vertex_count;
    const Eigen::VectorXd mass = volume_element(bg, u).per_vertex;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v);
    for (int i = 0; i < v; ++i) {
        double acc = 0;
        for (int k = bg.adj_start[i]; k < bg.adj_start[i + 1]; ++k) {
            const int j = bg.adj_vertex[k];
            const double w = bg.adj_weight[k] * 0.5 * (u[i] * u[i] + u[j] * u[j]);
            acc += w * (f[i] - f[j]);
        }
        out[i] = -acc / mass[i];
    }
    return out;
}

/// Weighted edge-sum discretization of Int R |grad_g f|^2 dV_g: each edge
/// carries w_ij (R_i u_i^2 + R_j u_j^2)/2, which is the exact derivative
/// pairing of the conformal energy under pointwise changes of u^2.
inline double curvature_weighted_energy(const Background& bg, const Eigen::VectorXd& u,
                                        const Eigen::VectorXd& r, const Eigen::VectorXd& f) {
    double acc = 0;
    for (const Edge& e : bg.edges) {
        const double w = e.weight * 0.5 * (r[e.i] * u[e.i] * u[e.i] + r[e.j] * u[e.j] * u[e.j]);
        const double d = f[e.i] - f[e.j];
        acc += w * d * d;
    }
    return acc;
}

namespace detail {

inline double dijkstra_eccentricity(const Background& bg, const std::vector<double>& edge_len,
                                    int source, std::vector<double>& dist) {
    const int v = bg.vertex_count;
    dist.assign(v, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist[source] = 0;
    heap.push({0.0, source});
    double ecc = 0;
    while (!heap.empty()) {
        auto [d, i] = heap.top();
        heap.pop();
        if (d > dist[i]) continue;
        ecc = std::max(ecc, d);
        for (int k = bg.adj_start[i]; k < bg.adj_start[i + 1]; ++k) {
            const int j = bg.adj_vertex[k];
            const double nd = d + edge_len[k];
            if (nd < dist[j]) {
                dist[j] = nd;
                heap.push({nd, j});
            }
        }
    }
    return ecc;
}

}  // namespace detail

/// All-pairs shortest-path diameter with conformal edge lengths
/// l_ij (u_i^le + u_j^le)/2, le the law family's length exponent.
/// The reduction is an exact max, so the result is thread-count independent.
inline double weighted_diameter(const Background& bg, const Eigen::VectorXd& u, int threads = 1) {
    require_positive(u);
    const int v = bg.vertex_count;
    const double le = bg.laws.length_exponent();
    Eigen::VectorXd phi = u.array().pow(le);
    std::vector<double> edge_len(bg.adj_vertex.size());
    for (int i = 0; i < v; ++i)
        for (int k = bg.adj_start[i]; k < bg.adj_start[i + 1]; ++k)
            edge_len[k] = bg.adj_length[k] * 0.5 * (phi[i] + phi[bg.adj_vertex[k]]);

    threads = std::max(1, std::min(threads, v));
    if (threads == 1) {
        std::vector<double> dist;
        double diam = 0;
        for (int s = 0; s < v; ++s)
            diam = std::max(diam, detail::dijkstra_eccentricity(bg, edge_len, s, dist));
        return diam;
    }
    std::vector<double> partial(threads, 0.0);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            std::vector<double> dist;
            double local = 0;
            for (int s = t; s < v; s += threads)
                local = std::max(local, detail::dijkstra_eccentricity(bg, edge_len, s, dist));
            partial[t] = local;
        });
    for (auto& th : pool) th.join();
    return *std::max_element(partial.begin(), partial.end());
}

/// One-pass summary of the conformal geometry at a given factor u.
struct CurvatureSummary {
    Eigen::VectorXd curvature;
    Eigen::VectorXd volume_form;
    double volume = 0;
    double average = 0;
    double min_curvature = 0;
    double max_curvature = 0;
};

inline CurvatureSummary analyze(const Background& bg, const Eigen::VectorXd& u) {
    CurvatureSummary s;
    s.curvature = scalar_curvature(bg, u);
    VolumeElement dv = volume_element(bg, u);
    s.volume_form = std::move(dv.per_vertex);
    s.volume = dv.total;
    s.average = s.curvature.dot(s.volume_form) / s.volume;
    s.min_curvature = s.curvature.minCoeff();
    s.max_curvature = s.curvature.maxCoeff();
    return s;
}

/// Positive conformal factor with its flow time.  Derived quantities are
/// recomputed on read; nothing is cached across mutations.
struct ConformalState {
    Eigen::VectorXd u;
    double time = 0;

    CurvatureSummary summary(const Background& bg) const { return analyze(bg, u); }
};

}  // namespace yamabe
