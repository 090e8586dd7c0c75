#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "yamabe/conformal.hpp"

using namespace yamabe;

namespace {

constexpr double kPi = std::numbers::pi;

BackgroundSpec torus_spec(int n, int d, int size, double length = 2 * kPi) {
    BackgroundSpec s;
    s.kind = BackgroundKind::flat_torus;
    s.n = n;
    s.grid_dim = d;
    s.size = size;
    s.length = length;
    return s;
}

Eigen::VectorXd random_field(int v, unsigned seed, double lo = -1, double hi = 1) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    Eigen::VectorXd f(v);
    for (int i = 0; i < v; ++i) f[i] = uni(rng);
    return f;
}

Eigen::VectorXd random_positive(int v, unsigned seed, double spread = 0.4) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> uni(-spread, spread);
    Eigen::VectorXd u(v);
    for (int i = 0; i < v; ++i) u[i] = std::exp(uni(rng));
    return u;
}

// dense brute-force background Laplacian, independent of the CSR apply path
Eigen::MatrixXd dense_laplacian0(const Background& bg) {
    const int v = bg.vertex_count;
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(v, v);
    for (const Edge& e : bg.edges) {
        lap(e.i, e.i) -= e.weight;
        lap(e.i, e.j) += e.weight;
        lap(e.j, e.j) -= e.weight;
        lap(e.j, e.i) += e.weight;
    }
    for (int i = 0; i < v; ++i) lap.row(i) /= bg.vertex_volumes[i];
    return lap;
}

}  // namespace

TEST_CASE("flat torus grid structure") {
    Background bg = build_background(torus_spec(3, 3, 4));
    REQUIRE(bg.vertex_count == 64);
    REQUIRE(bg.edges.size() == 3u * 64u);
    REQUIRE(bg.background_curvature.isZero(0.0));
    REQUIRE(bg.boundary.empty());
    for (int i = 0; i < bg.vertex_count; ++i)
        REQUIRE(bg.adj_start[i + 1] - bg.adj_start[i] == 6);
    const double h = 2 * kPi / 4;
    REQUIRE(bg.vertex_volumes[0] == Catch::Approx(h * h * h));
    for (const Edge& e : bg.edges) REQUIRE(e.weight == Catch::Approx(h));
}

TEST_CASE("synthetic background overrides curvature") {
    BackgroundSpec s = torus_spec(3, 3, 4);
    s.kind = BackgroundKind::synthetic;
    s.r0.constant = -6;
    Background bg = build_background(s);
    REQUIRE(bg.vertex_count == 64);
    for (int i = 0; i < bg.vertex_count; ++i) REQUIRE(bg.background_curvature[i] == -6.0);
}

TEST_CASE("box grid flags face vertices") {
    BackgroundSpec s;
    s.kind = BackgroundKind::box_with_boundary;
    s.n = 3;
    s.grid_dim = 3;
    s.size = 5;
    s.length = 1.0;
    Background bg = build_background(s);
    REQUIRE(bg.vertex_count == 125);

    // enumerate the faces of the 5^3 lattice independently
    int expected = 0;
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x)
                if (x == 0 || x == 4 || y == 0 || y == 4 || z == 0 || z == 4) ++expected;
    REQUIRE(expected == 98);
    REQUIRE(static_cast<int>(bg.boundary.size()) == expected);
}

TEST_CASE("degenerate background specs are rejected") {
    BackgroundSpec s = torus_spec(3, 3, 4);
    s.size = 2;
    REQUIRE_THROWS_AS(build_background(s), std::invalid_argument);
    s = torus_spec(2, 3, 4);
    REQUIRE_THROWS_AS(build_background(s), std::invalid_argument);
    s = torus_spec(3, 3, 4, -1.0);
    REQUIRE_THROWS_AS(build_background(s), std::invalid_argument);
    s = torus_spec(3, 4, 4);
    REQUIRE_THROWS_AS(build_background(s), std::invalid_argument);
}

TEST_CASE("background Laplacian identities") {
    Background bg = build_background(torus_spec(3, 3, 4));
    const int v = bg.vertex_count;

    SECTION("constants are annihilated exactly") {
        Eigen::VectorXd ones = Eigen::VectorXd::Constant(v, 3.7);
        Eigen::VectorXd lap = laplacian0(bg, ones);
        REQUIRE(lap.cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("summation by parts matches the edge energy") {
        for (unsigned seed = 0; seed < 1000; ++seed) {
            Eigen::VectorXd f = random_field(v, seed);
            Eigen::VectorXd lap = laplacian0(bg, f);
            double lhs = 0;
            for (int i = 0; i < v; ++i) lhs -= bg.vertex_volumes[i] * f[i] * lap[i];
            const double rhs = dirichlet_energy(bg, f);
            REQUIRE(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST_CASE("scalar curvature under conformal change") {
    BackgroundSpec s = torus_spec(3, 3, 4);
    s.kind = BackgroundKind::synthetic;
    s.r0.constant = -6;
    s.r0.bump = BumpSpec{1.5, {0.5, 0.5, 0.5}, 0.2};
    Background bg = build_background(s);
    const int v = bg.vertex_count;

    SECTION("unit factor returns the background field") {
        Eigen::VectorXd u = Eigen::VectorXd::Ones(v);
        Eigen::VectorXd r = scalar_curvature(bg, u);
        for (int i = 0; i < v; ++i) REQUIRE(r[i] == bg.background_curvature[i]);
    }

    SECTION("constant factor scales by k^{-4/(n-2)}") {
        const double k = 2.5;
        Eigen::VectorXd u = Eigen::VectorXd::Constant(v, k);
        Eigen::VectorXd r = scalar_curvature(bg, u);
        const double scale = std::pow(k, -4.0 / (3 - 2));
        for (int i = 0; i < v; ++i)
            REQUIRE(r[i] == Catch::Approx(scale * bg.background_curvature[i]).epsilon(1e-13));
    }

    SECTION("bump factor matches a dense evaluation") {
        Eigen::VectorXd u = Eigen::VectorXd::Ones(v);
        for (int i = 0; i < v; ++i) u[i] += 0.3 * std::exp(-0.1 * ((i % 7) - 3) * ((i % 7) - 3));
        Eigen::MatrixXd lap = dense_laplacian0(bg);
        const double cn = 4.0 * (3 - 1) / (3 - 2);
        Eigen::VectorXd lap_u = lap * u;
        Eigen::VectorXd expected(v);
        for (int i = 0; i < v; ++i)
            expected[i] =
                std::pow(u[i], -5.0) * (-cn * lap_u[i] + bg.background_curvature[i] * u[i]);
        Eigen::VectorXd r = scalar_curvature(bg, u);
        for (int i = 0; i < v; ++i) REQUIRE(r[i] == Catch::Approx(expected[i]).epsilon(1e-12));
    }

    SECTION("nonpositive factor is a domain error") {
        Eigen::VectorXd u = Eigen::VectorXd::Ones(v);
        u[5] = 0;
        REQUIRE_THROWS_AS(scalar_curvature(bg, u), std::domain_error);
        u[5] = -1;
        REQUIRE_THROWS_AS(scalar_curvature(bg, u), std::domain_error);
    }
}

TEST_CASE("volume element") {
    Background bg = build_background(torus_spec(3, 3, 4));
    const int v = bg.vertex_count;

    SECTION("unit factor reproduces the background volumes") {
        VolumeElement dv = volume_element(bg, Eigen::VectorXd::Ones(v));
        REQUIRE(dv.total == Catch::Approx(bg.vertex_volumes.sum()));
        for (int i = 0; i < v; ++i) REQUIRE(dv.per_vertex[i] == bg.vertex_volumes[i]);
    }

    SECTION("constant factor scales the total by k^6 for n = 3") {
        const double k = 1.7;
        VolumeElement dv = volume_element(bg, Eigen::VectorXd::Constant(v, k));
        REQUIRE(dv.total ==
                Catch::Approx(std::pow(k, 6) * bg.vertex_volumes.sum()).epsilon(1e-13));
    }

    SECTION("random factor matches an extended-precision sum") {
        Eigen::VectorXd u = random_positive(v, 11);
        VolumeElement dv = volume_element(bg, u);
        long double acc = 0;
        for (int i = 0; i < v; ++i)
            acc += static_cast<long double>(std::pow(u[i], 6.0)) * bg.vertex_volumes[i];
        REQUIRE(dv.total == Catch::Approx(static_cast<double>(acc)).epsilon(1e-12));
    }
}

TEST_CASE("average scalar curvature") {
    SECTION("constant background gives its constant") {
        BackgroundSpec s = torus_spec(3, 3, 4);
        s.kind = BackgroundKind::synthetic;
        s.r0.constant = -6;
        Background bg = build_background(s);
        REQUIRE(average_scalar_curvature(bg, Eigen::VectorXd::Ones(bg.vertex_count)) ==
                Catch::Approx(-6.0).epsilon(1e-14));
    }

    SECTION("zero-mean background averages to zero") {
        BackgroundSpec s = torus_spec(3, 3, 4);
        s.kind = BackgroundKind::synthetic;
        Background bg = build_background(s);
        // alternating parity field has exact zero volume-weighted mean
        for (int i = 0; i < bg.vertex_count; ++i) {
            int x = i % 4, y = (i / 4) % 4, z = i / 16;
            bg.background_curvature[i] = ((x + y + z) % 2 == 0) ? 1.0 : -1.0;
        }
        REQUIRE(std::abs(average_scalar_curvature(bg, Eigen::VectorXd::Ones(bg.vertex_count))) <=
                1e-13);
    }

    SECTION("bump factor matches the brute-force quotient") {
        BackgroundSpec s = torus_spec(3, 3, 4);
        s.kind = BackgroundKind::synthetic;
        s.r0.constant = -4;
        s.r0.bump = BumpSpec{2.0, {0.3, 0.6, 0.5}, 0.25};
        Background bg = build_background(s);
        Eigen::VectorXd u = random_positive(bg.vertex_count, 3);
        Eigen::VectorXd r = scalar_curvature(bg, u);
        VolumeElement dv = volume_element(bg, u);
        long double num = 0, den = 0;
        for (int i = 0; i < bg.vertex_count; ++i) {
            num += static_cast<long double>(r[i]) * dv.per_vertex[i];
            den += dv.per_vertex[i];
        }
        REQUIRE(average_scalar_curvature(bg, u) ==
                Catch::Approx(static_cast<double>(num / den)).epsilon(1e-12));
    }
}

TEST_CASE("conformal forms") {
    SECTION("unit factor reduces to the background forms") {
        Background bg = build_background(torus_spec(3, 3, 4));
        const int v = bg.vertex_count;
        ConformalForms forms = conformal_forms(bg, Eigen::VectorXd::Ones(v));
        Eigen::VectorXd f = random_field(v, 21);
        const double energy = f.dot(forms.energy * f);
        REQUIRE(energy == Catch::Approx(dirichlet_energy(bg, f)).epsilon(1e-12));
        for (int i = 0; i < v; ++i) REQUIRE(forms.mass[i] == bg.vertex_volumes[i]);
    }

    SECTION("constant factor scales the energy by exactly k^2") {
        Background bg = build_background(torus_spec(3, 3, 4));
        const int v = bg.vertex_count;
        Eigen::VectorXd f = random_field(v, 22);
        const double k = 3.0;
        const double e1 = conformal_energy(bg, Eigen::VectorXd::Ones(v), f);
        const double e2 = conformal_energy(bg, Eigen::VectorXd::Constant(v, k), f);
        REQUIRE(e2 == Catch::Approx(k * k * e1).epsilon(1e-14));
    }

    SECTION("two-vertex toy edge weight by hand") {
        ConformalLaws laws = ConformalLaws::riemannian(3);
        std::vector<Edge> edges{{0, 1, 1.0, 1.0}};
        Background bg = background_from_parts(laws, 2, edges, Eigen::VectorXd::Ones(2),
                                              Eigen::VectorXd::Zero(2));
        Eigen::VectorXd u(2);
        u << 1.0, 2.0;
        ConformalForms forms = conformal_forms(bg, u);
        REQUIRE(forms.energy.coeff(0, 1) == Catch::Approx(-2.5));
        REQUIRE(forms.energy.coeff(0, 0) == Catch::Approx(2.5));
    }

    SECTION("Rayleigh quotient scales by k^{-4/(n-2)} under u -> k u") {
        Background bg = build_background(torus_spec(3, 3, 4));
        const int v = bg.vertex_count;
        Eigen::VectorXd u = random_positive(v, 23);
        Eigen::VectorXd f = random_field(v, 24);
        auto rayleigh = [&](const Eigen::VectorXd& uu) {
            ConformalForms forms = conformal_forms(bg, uu);
            return f.dot(forms.energy * f) / (f.array().square() * forms.mass.array()).sum();
        };
        for (double k : {0.5, 2.0, 10.0}) {
            const double scale = std::pow(k, -4.0);  // n = 3
            REQUIRE(rayleigh(k * u) == Catch::Approx(scale * rayleigh(u)).epsilon(1e-12));
        }
    }
}

TEST_CASE("weighted diameter") {
    SECTION("unit factor on the 4^3 torus of side 2 pi") {
        Background bg = build_background(torus_spec(3, 3, 4));
        const double d = weighted_diameter(bg, Eigen::VectorXd::Ones(bg.vertex_count));
        REQUIRE(d == Catch::Approx(3 * kPi).epsilon(1e-12));  // 3 axes * 2 hops * (2 pi / 4)
    }

    SECTION("path graph of three unit edges") {
        ConformalLaws laws = ConformalLaws::riemannian(3);
        std::vector<Edge> edges{{0, 1, 1, 1}, {1, 2, 1, 1}, {2, 3, 1, 1}};
        Background bg = background_from_parts(laws, 4, edges, Eigen::VectorXd::Ones(4),
                                              Eigen::VectorXd::Zero(4));
        REQUIRE(weighted_diameter(bg, Eigen::VectorXd::Ones(4)) == Catch::Approx(3.0));
    }

    SECTION("uniform scaling by k^{2/(n-2)}") {
        Background bg = build_background(torus_spec(3, 3, 4));
        Eigen::VectorXd u = random_positive(bg.vertex_count, 31);
        const double base = weighted_diameter(bg, u);
        for (double k : {0.5, 2.0, 10.0})
            REQUIRE(weighted_diameter(bg, k * u) ==
                    Catch::Approx(std::pow(k, 2.0) * base).epsilon(1e-12));
    }

    SECTION("threaded evaluation is exact") {
        Background bg = build_background(torus_spec(3, 3, 5));
        Eigen::VectorXd u = random_positive(bg.vertex_count, 32);
        REQUIRE(weighted_diameter(bg, u, 4) == weighted_diameter(bg, u, 1));
    }
}

TEST_CASE("integration by parts against constants on the flat torus") {
    Background bg = build_background(torus_spec(3, 3, 4));
    Eigen::VectorXd u = random_positive(bg.vertex_count, 41);
    Eigen::VectorXd r = scalar_curvature(bg, u);
    double acc = 0, scale = 0;
    for (int i = 0; i < bg.vertex_count; ++i) {
        const double term = r[i] * std::pow(u[i], 5.0) * bg.vertex_volumes[i];
        acc += term;
        scale += std::abs(term);
    }
    REQUIRE(std::abs(acc) <= 1e-12 * std::max(1.0, scale));
}

TEST_CASE("state summary recomputes on read") {
    BackgroundSpec s = torus_spec(3, 3, 4);
    s.kind = BackgroundKind::synthetic;
    s.r0.constant = -6;
    Background bg = build_background(s);
    ConformalState st{Eigen::VectorXd::Ones(bg.vertex_count), 0.0};
    REQUIRE(st.summary(bg).average == Catch::Approx(-6.0));
    st.u *= 2.0;
    REQUIRE(st.summary(bg).average == Catch::Approx(-6.0 / 16.0));
}
