#pragma once

#include <cmath>
#include <vector>

#include "discrete_operator.hpp"

namespace cellcycle {

/// The test model: g1 = g2 = 1, tau = 1, h(m) = m - 3, mP = 2, phi = 1 on
/// (2, inf). Its invariant density is beta e^{-beta m} with 1 - beta = e^{-2 beta}.
inline ModelSpec test_model(double m_max = 52.0) {
    ModelSpec s;
    s.g1 = ScalarFn::constant(1.0);
    s.g2 = ScalarFn::constant(1.0);
    s.phi = ScalarFn(fn::PiecewiseLinear{{{2.0, 0.0}, {2.0, 1.0}}});
    s.h = ScalarFn::linear(1.0, -3.0);
    s.tau = 1.0;
    s.mP = 2.0;
    s.mMax = m_max;
    s.phi_bounded = true;
    s.phi_eventually_positive = true;
    return s;
}

struct CounterexampleOptions {
    double m_max = 64.0;
    std::size_t grid_n = 8192; // step must divide 1 so that lambda maps nodes to nodes
    PowerIterationOptions iteration = {.polish = 1000};
};

struct Counterexample {
    ModelSpec spec;
    ModelSpec hazard_spec; // same Q and lambda with g1 = 1
    GridDensity f_star;    // invariant density of the common operator
};

/// A model whose generational operator is asymptotically stable while the
/// mean resting time is infinite.
///
/// Q and lambda are fixed first: g2 = 1, tau = 1, h(m) = m - 3, mP = 2 give
/// lambda(m) = m + 2; Q' ramps 0 -> 5.5 -> 1 on [2, 3] (so Q(3) = 3) and is 1
/// beyond, hence Q(m) = m for m >= 3 and alpha = 2 on the tail. The
/// invariant density depends only on Q and lambda, so it is computed with
/// g1 = 1; then g1(m) = f*(m - 2) and phi = Q' g1, giving phi = g1 = f*(m - 2)
/// for m >= 3 and a resting profile that is constant there.
inline Counterexample build_counterexample(const CounterexampleOptions& opt = {}) {
    const double dm = opt.m_max / static_cast<double>(opt.grid_n);
    const double per_unit = 1.0 / dm;
    if (std::abs(per_unit - std::round(per_unit)) > 1e-9)
        throw DomainError("counterexample: grid step must divide 1");

    Counterexample c;
    ModelSpec& a = c.hazard_spec;
    a.g1 = ScalarFn::constant(1.0);
    a.g2 = ScalarFn::constant(1.0);
    a.h = ScalarFn::linear(1.0, -3.0);
    a.tau = 1.0;
    a.mP = 2.0;
    a.mMax = opt.m_max;
    a.phi = ScalarFn(fn::PiecewiseLinear{{{2.0, 0.0}, {2.5, 5.5}, {3.0, 1.0}}});
    a.phi_bounded = true;

    const KernelMatrix K(std::make_shared<const FlowSolver>(a), UniformGrid{opt.m_max, opt.grid_n});
    const auto it = power_iterate(K, GridDensity::uniform(K.grid(), 0.0, opt.m_max), opt.iteration);
    if (!it.fixed_point) throw Error("counterexample: power iteration did not converge");
    c.f_star = *it.fixed_point;

    // table nodes x = m - 2 >= 1 are grid nodes of f*
    const std::size_t k1 = static_cast<std::size_t>(std::llround(per_unit));
    fn::ShiftedTable g1{2.0, {}, {}};
    fn::ShiftedTable phi{2.0, {0.0, 0.5}, {0.0, 5.5 * c.f_star.values[k1]}};
    for (std::size_t k = k1; k < c.f_star.values.size(); ++k) {
        const double x = c.f_star.grid[k];
        const double y = c.f_star.values[k];
        if (!(y > 0.0)) break; // keep the tables strictly positive
        g1.x.push_back(x);
        g1.y.push_back(y);
        phi.x.push_back(x);
        phi.y.push_back(y);
    }
    ModelSpec& s = c.spec;
    s = a;
    s.g1 = ScalarFn(g1);
    s.phi = ScalarFn(phi);
    s.phi_bounded = true;
    s.phi_eventually_positive = false;
    return c;
}

} // namespace cellcycle
