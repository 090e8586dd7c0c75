#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace yamabe {

enum class Family { riemannian, cr };

/// Coefficient family of a conformal curvature law.  The Riemannian family
/// covers metrics g = u^{4/(n-2)} g0 in dimension n >= 3; the CR family
/// covers contact forms theta = u^{2/n} theta0 on a (2n+1)-dimensional
/// nilmanifold.  Every flow, band, and derivative coefficient used elsewhere
/// is derived from these two cases.
struct ConformalLaws {
    Family family = Family::riemannian;
    int n = 3;

    static ConformalLaws riemannian(int n) {
        if (n < 3) throw std::invalid_argument("ConformalLaws: dimension n must be >= 3");
        return {Family::riemannian, n};
    }
    static ConformalLaws cr(int n) {
        if (n < 1) throw std::invalid_argument("ConformalLaws: CR dimension must be >= 1");
        return {Family::cr, n};
    }

    bool is_cr() const { return family == Family::cr; }
    double nd() const { return static_cast<double>(n); }

    // R = u^{-curvature_exponent} (-curvature_coeff * lap0 u + R0 u)
    double curvature_coeff() const {
        return is_cr() ? 2.0 + 2.0 / nd() : 4.0 * (nd() - 1.0) / (nd() - 2.0);
    }
    double curvature_exponent() const {
        return is_cr() ? 1.0 + 2.0 / nd() : (nd() + 2.0) / (nd() - 2.0);
    }
    // R(k u) = k^{-curvature_scaling} R(u)
    double curvature_scaling() const { return curvature_exponent() - 1.0; }
    // dV = u^{volume_exponent} v
    double volume_exponent() const {
        return is_cr() ? (2.0 * nd() + 2.0) / nd() : 2.0 * nd() / (nd() - 2.0);
    }
    // conformal edge length factor u^{length_exponent}
    double length_exponent() const { return is_cr() ? 1.0 / nd() : 2.0 / (nd() - 2.0); }
    // du/dt = -flow_speed * (R - Rbar) u  (normalized), -flow_speed * R u (unnormalized)
    double flow_speed() const { return is_cr() ? nd() / 2.0 : (nd() - 2.0) / 4.0; }
    // dR/dt = diffusion * lap_g R + R (R - Rbar)   (+ R^2 unnormalized)
    double diffusion() const { return is_cr() ? nd() + 1.0 : nd() - 1.0; }
    // d(dV)/dt = -volume_rate * (R - Rbar) dV
    double volume_rate() const { return is_cr() ? nd() + 1.0 : nd() / 2.0; }

    // log-eigenvalue band:
    //   -grad_band*(max R - Rbar) + mass_band*(min R - Rbar)
    //     <= d/dt log lambda_1 <=
    //   -grad_band*(min R - Rbar) + mass_band*(max R - Rbar)
    double grad_band() const { return is_cr() ? nd() : (nd() - 2.0) / 2.0; }
    double mass_band() const { return is_cr() ? nd() + 1.0 : nd() / 2.0; }

    // c = sandwich_coeff * (min R0 / max R0 - 1), the exponent of the
    // two-sided eigenvalue comparison against the constant-curvature metric.
    double sandwich_coeff() const { return is_cr() ? 2.0 * (2.0 * nd() + 1.0) : 2.0 * (nd() - 1.0); }

    // monotonicity regimes for -lap_g + a R under the unnormalized flow
    double borderline_a() const {
        return is_cr() ? nd() / (2.0 * nd() + 2.0) : (nd() - 2.0) / (4.0 * (nd() - 1.0));
    }
    double regime_ratio() const { return is_cr() ? nd() / (nd() + 1.0) : (nd() - 2.0) / nd(); }

    // d lambda_1/dt = deriv_energy_coeff(a) * Int R (|grad f|^2 + a R f^2) dV
    //               - deriv_mass_coeff(a) * lambda_1 * Int R f^2 dV
    double deriv_energy_coeff(double a) const { return 2.0 * diffusion() * a - grad_band(); }
    double deriv_mass_coeff(double a) const { return 2.0 * diffusion() * a - mass_band(); }
};

enum class BackgroundKind { flat_torus, box_with_boundary, synthetic, heisenberg };

inline const char* to_string(BackgroundKind k) {
    switch (k) {
        case BackgroundKind::flat_torus: return "flat-torus";
        case BackgroundKind::box_with_boundary: return "box-with-boundary";
        case BackgroundKind::synthetic: return "synthetic";
        case BackgroundKind::heisenberg: return "heisenberg";
    }
    return "?";
}

struct Edge {
    std::int32_t i = 0;
    std::int32_t j = 0;
    double weight = 0;  // Dirichlet-form weight, > 0
    double length = 0;  // background edge length, > 0
};

/// Weighted-graph discretization of a compact background: Dirichlet-form
/// weights, vertex volumes, a curvature field, and an optional boundary set.
/// The background Laplacian is lap0 f(i) = -(1/v_i) sum_j w_ij (f_i - f_j),
/// so that -sum_i v_i f_i lap0 f(i) = sum_edges w_ij (f_i - f_j)^2 exactly.
struct Background {
    BackgroundKind kind = BackgroundKind::flat_torus;
    ConformalLaws laws;
    int vertex_count = 0;
    std::vector<Edge> edges;
    Eigen::VectorXd vertex_volumes;
    Eigen::VectorXd background_curvature;
    std::vector<std::int32_t> boundary;  // sorted vertex ids, possibly empty
    std::vector<char> on_boundary;       // size vertex_count
    double mesh_spacing = 0;             // grid spacing h (0 for hand-built graphs)

    // CSR adjacency, built by finalize()
    std::vector<std::int32_t> adj_start;
    std::vector<std::int32_t> adj_vertex;
    std::vector<double> adj_weight;
    std::vector<double> adj_length;

    bool has_boundary() const { return !boundary.empty(); }
};

struct BumpSpec {
    double amplitude = 0;
    std::array<double, 3> center{0.5, 0.5, 0.5};  // fractions of the period
    double width = 0.2;                           // fraction of the period
};

/// Per-vertex scalar field: constant + optional gaussian bump + optional
/// uniform random perturbation (seeded, deterministic).
struct FieldSpec {
    double constant = 0;
    std::optional<BumpSpec> bump;
    double random_amplitude = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline double periodic_frac_dist(double a, double b) {
    double d = std::abs(a - b);
    return std::min(d, 1.0 - d);
}

// index helpers for axis-aligned grids, x fastest
struct GridIndex {
    int dim;
    int size;
    int total() const {
        int t = 1;
        for (int a = 0; a < dim; ++a) t *= size;
        return t;
    }
    int flat(const std::array<int, 3>& c) const {
        int idx = 0;
        for (int a = dim - 1; a >= 0; --a) idx = idx * size + c[a];
        return idx;
    }
    std::array<int, 3> coords(int idx) const {
        std::array<int, 3> c{0, 0, 0};
        for (int a = 0; a < dim; ++a) {
            c[a] = idx % size;
            idx /= size;
        }
        return c;
    }
};

inline Eigen::VectorXd evaluate_field(const FieldSpec& spec, const GridIndex& grid, bool periodic) {
    const int v = grid.total();
    Eigen::VectorXd field = Eigen::VectorXd::Constant(v, spec.constant);
    if (spec.bump && spec.bump->amplitude != 0.0) {
        const BumpSpec& b = *spec.bump;
        if (!(b.width > 0)) throw std::invalid_argument("FieldSpec: bump width must be > 0");
        const double two_pi = 2.0 * std::numbers::pi;
        for (int i = 0; i < v; ++i) {
            auto c = grid.coords(i);
            double expo = 0;
            for (int a = 0; a < grid.dim; ++a) {
                // vertex positions: grids at N and 2N share sample points
                double x = periodic ? static_cast<double>(c[a]) / grid.size
                                    : static_cast<double>(c[a]) / (grid.size - 1);
                if (periodic) {
                    // smooth periodic kernel; matches the gaussian for small offsets
                    expo += (std::cos(two_pi * (x - b.center[a])) - 1.0) /
                            (4.0 * std::numbers::pi * std::numbers::pi * b.width * b.width);
                } else {
                    const double d = x - b.center[a];
                    expo += -d * d / (2.0 * b.width * b.width);
                }
            }
            field[i] += b.amplitude * std::exp(expo);
        }
    }
    if (spec.random_amplitude != 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> uni(-1.0, 1.0);
        for (int i = 0; i < v; ++i) field[i] += spec.random_amplitude * uni(rng);
    }
    if (!field.allFinite()) throw std::invalid_argument("FieldSpec: field values must be finite");
    return field;
}

}  // namespace detail

/// Validates edges/volumes, builds CSR adjacency, and checks connectivity.
/// Throws std::invalid_argument naming the offending piece.
inline void finalize(Background& bg) {
    const int v = bg.vertex_count;
    if (v < 2) throw std::invalid_argument("Background: vertex_count must be >= 2");
    if (bg.vertex_volumes.size() != v || (bg.vertex_volumes.array() <= 0).any())
        throw std::invalid_argument("Background: vertex_volumes must be positive of size V");
    if (bg.background_curvature.size() != v || !bg.background_curvature.allFinite())
        throw std::invalid_argument("Background: background_curvature must be finite of size V");
    for (const Edge& e : bg.edges) {
        if (e.i < 0 || e.i >= v || e.j < 0 || e.j >= v || e.i == e.j)
            throw std::invalid_argument("Background: edge endpoints out of range");
        if (!(e.weight > 0) || !(e.length > 0))
            throw std::invalid_argument("Background: edge weight and length must be > 0");
    }
    bg.on_boundary.assign(v, 0);
    for (auto b : bg.boundary) {
        if (b < 0 || b >= v) throw std::invalid_argument("Background: boundary vertex out of range");
        bg.on_boundary[b] = 1;
    }

    std::vector<std::int32_t> degree(v, 0);
    for (const Edge& e : bg.edges) {
        ++degree[e.i];
        ++degree[e.j];
    }
    bg.adj_start.assign(v + 1, 0);
    for (int i = 0; i < v; ++i) bg.adj_start[i + 1] = bg.adj_start[i] + degree[i];
    const std::size_t half_edges = bg.adj_start[v];
    bg.adj_vertex.assign(half_edges, 0);
    bg.adj_weight.assign(half_edges, 0);
    bg.adj_length.assign(half_edges, 0);
    std::vector<std::int32_t> fill(bg.adj_start.begin(), bg.adj_start.end() - 1);
    for (const Edge& e : bg.edges) {
        bg.adj_vertex[fill[e.i]] = e.j;
        bg.adj_weight[fill[e.i]] = e.weight;
        bg.adj_length[fill[e.i]] = e.length;
        ++fill[e.i];
        bg.adj_vertex[fill[e.j]] = e.i;
        bg.adj_weight[fill[e.j]] = e.weight;
        bg.adj_length[fill[e.j]] = e.length;
        ++fill[e.j];
    }

    // connectivity (BFS)
    std::vector<char> seen(v, 0);
    std::vector<std::int32_t> queue{0};
    seen[0] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        int i = queue[head];
        for (int k = bg.adj_start[i]; k < bg.adj_start[i + 1]; ++k) {
            int j = bg.adj_vertex[k];
            if (!seen[j]) {
                seen[j] = 1;
                queue.push_back(j);
            }
        }
    }
    if (static_cast<int>(queue.size()) != v)
        throw std::invalid_argument("Background: graph is disconnected");
}

/// lap0 f(i) = -(1/v_i) sum_j w_ij (f_i - f_j)
inline Eigen::VectorXd laplacian0(const Background& bg, const Eigen::VectorXd& f) {
    const int v = bg.vertex_count;
    Eigen::VectorXd out(v);
    for (int i = 0; i < v; ++i) {
        double acc = 0;
        for (int k = bg.adj_start[i]; k < bg.adj_start[i + 1]; ++k)
            acc += bg.adj_weight[k] * (f[i] - f[bg.adj_vertex[k]]);
        out[i] = -acc / bg.vertex_volumes[i];
    }
    return out;
}

/// sum_edges w_ij (f_i - f_j)^2
inline double dirichlet_energy(const Background& bg, const Eigen::VectorXd& f) {
    double acc = 0;
    for (const Edge& e : bg.edges) {
        const double d = f[e.i] - f[e.j];
        acc += e.weight * d * d;
    }
    return acc;
}

/// Upper estimate of the largest eigenvalue of -lap0 in the volume-weighted
/// inner product (power iteration with a 5% safety margin).
inline double laplacian0_spectral_bound(const Background& bg) {
    const int v = bg.vertex_count;
    Eigen::VectorXd f(v);
    for (int i = 0; i < v; ++i) f[i] = (i % 2 == 0 ? 1.0 : -1.0) + 0.01 * std::cos(1.7 * i);
    double lambda = 0;
    for (int iter = 0; iter < 60; ++iter) {
        Eigen::VectorXd g = -laplacian0(bg, f);
        double num = 0, den = 0;
        for (int i = 0; i < v; ++i) {
            num += bg.vertex_volumes[i] * f[i] * g[i];
            den += bg.vertex_volumes[i] * f[i] * f[i];
        }
        double next = num / den;
        double nrm = std::sqrt((g.array().square() * bg.vertex_volumes.array()).sum());
        if (nrm == 0) break;
        f = g / nrm;
        if (iter > 4 && std::abs(next - lambda) <= 1e-6 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return 1.05 * lambda;
}

struct BackgroundSpec {
    BackgroundKind kind = BackgroundKind::flat_torus;
    int n = 3;         // conformal dimension (Riemannian kinds)
    int grid_dim = 3;  // d, axes of the grid
    int size = 4;      // N vertices per axis
    double length = 2.0 * std::numbers::pi;
    FieldSpec r0;  // synthetic / heisenberg curvature; optional override for box
    int cr_n = 1;  // CR dimension (heisenberg kind)
};

namespace detail {

inline void validate_grid_spec(const BackgroundSpec& spec) {
    if (spec.kind != BackgroundKind::heisenberg && spec.n < 3)
        throw std::invalid_argument("BackgroundSpec: n must be >= 3");
    if (spec.grid_dim < 1 || spec.grid_dim > 3)
        throw std::invalid_argument("BackgroundSpec: grid_dim must be 1, 2, or 3");
    if (spec.size < 3) throw std::invalid_argument("BackgroundSpec: size must be >= 3 per axis");
    if (!(spec.length > 0)) throw std::invalid_argument("BackgroundSpec: length must be > 0");
}

inline Background build_grid(const BackgroundSpec& spec, bool periodic) {
    validate_grid_spec(spec);
    const int d = spec.grid_dim;
    const int N = spec.size;
    const GridIndex grid{d, N};
    const int V = grid.total();
    const double h = periodic ? spec.length / N : spec.length / (N - 1);
    const double w = std::pow(h, d - 2);
    const double vol = std::pow(h, d);

    Background bg;
    bg.kind = spec.kind;
    bg.laws = ConformalLaws::riemannian(spec.n);
    bg.vertex_count = V;
    bg.mesh_spacing = h;
    bg.vertex_volumes = Eigen::VectorXd::Constant(V, vol);

    for (int i = 0; i < V; ++i) {
        auto c = grid.coords(i);
        for (int a = 0; a < d; ++a) {
            auto cj = c;
            cj[a] = c[a] + 1;
            if (cj[a] == N) {
                if (!periodic) continue;
                cj[a] = 0;
            }
            bg.edges.push_back({static_cast<std::int32_t>(i),
                                static_cast<std::int32_t>(grid.flat(cj)), w, h});
        }
    }

    if (!periodic) {
        for (int i = 0; i < V; ++i) {
            auto c = grid.coords(i);
            for (int a = 0; a < d; ++a)
                if (c[a] == 0 || c[a] == N - 1) {
                    bg.boundary.push_back(i);
                    break;
                }
        }
    }

    if (spec.kind == BackgroundKind::flat_torus) {
        bg.background_curvature = Eigen::VectorXd::Zero(V);
    } else {
        bg.background_curvature = evaluate_field(spec.r0, grid, periodic);
    }

    finalize(bg);
    return bg;
}

}  // namespace detail

/// Polarized Heisenberg nilmanifold on an N^3 grid.  Horizontal generators
/// step off the grid along group translations: the y-step from (x, y, t)
/// lands at (x, y+1, t+x) so the twist of the group law is carried by the
/// stencil with integer shifts only.  The Dirichlet form has x- and y-edges
/// only (sub-Laplacian); the t-direction is reached through commutators.
inline Background build_heisenberg(const BackgroundSpec& spec) {
    if (spec.cr_n != 1)
        throw std::invalid_argument("BackgroundSpec: heisenberg grids support cr_n = 1 only");
    if (spec.size < 3) throw std::invalid_argument("BackgroundSpec: size must be >= 3 per axis");
    const int N = spec.size;
    const int V = N * N * N;
    const double h = 1.0 / N;

    Background bg;
    bg.kind = BackgroundKind::heisenberg;
    bg.laws = ConformalLaws::cr(spec.cr_n);
    bg.vertex_count = V;
    bg.mesh_spacing = h;
    bg.vertex_volumes = Eigen::VectorXd::Constant(V, h * h * h);

    auto flat = [N](int x, int y, int t) { return (t * N + y) * N + x; };
    for (int t = 0; t < N; ++t)
        for (int y = 0; y < N; ++y)
            for (int x = 0; x < N; ++x) {
                const int i = flat(x, y, t);
                // x-step: (x, y, t) -> (x+1, y, t)
                bg.edges.push_back({static_cast<std::int32_t>(i),
                                    static_cast<std::int32_t>(flat((x + 1) % N, y, t)), h, h});
                // y-step: (x, y, t) -> (x, y+1, t+x)
                bg.edges.push_back({static_cast<std::int32_t>(i),
                                    static_cast<std::int32_t>(flat(x, (y + 1) % N, (t + x) % N)),
                                    h, h});
            }

    const detail::GridIndex grid{3, N};
    bg.background_curvature = detail::evaluate_field(spec.r0, grid, true);

    finalize(bg);
    return bg;
}

/// Builds a discrete background from a descriptor.  flat-torus: periodic
/// grid with R0 = 0; box-with-boundary: non-periodic grid with face vertices
/// flagged (R0 = 0 unless overridden); synthetic: torus grid carrying a
/// prescribed curvature field; heisenberg: see build_heisenberg.
inline Background build_background(const BackgroundSpec& spec) {
    switch (spec.kind) {
        case BackgroundKind::flat_torus:
        case BackgroundKind::synthetic:
            return detail::build_grid(spec, true);
        case BackgroundKind::box_with_boundary:
            return detail::build_grid(spec, false);
        case BackgroundKind::heisenberg:
            return build_heisenberg(spec);
    }
    throw std::invalid_argument("BackgroundSpec: unknown kind");
}

/// Hand-built background from raw parts (tests, toy graphs).
inline Background background_from_parts(ConformalLaws laws, int vertex_count,
                                        std::vector<Edge> edges, Eigen::VectorXd volumes,
                                        Eigen::VectorXd r0,
                                        std::vector<std::int32_t> boundary = {}) {
    Background bg;
    bg.kind = BackgroundKind::synthetic;
    bg.laws = laws;
    bg.vertex_count = vertex_count;
    bg.edges = std::move(edges);
    bg.vertex_volumes = std::move(volumes);
    bg.background_curvature = std::move(r0);
    bg.boundary = std::move(boundary);
    finalize(bg);
    return bg;
}

}  // namespace yamabe
