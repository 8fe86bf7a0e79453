#include "hybridsim/node_model.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "hybridsim/common.hpp"

namespace hybridsim {

double NodeSolution::total_delivered() const {
  double t = 0.0;
  for (const auto& row : delivered)
    for (double d : row) t += d;
  return t;
}

double NodeSolution::scale(std::size_t g, std::size_t r, const NodeProblem& p) const {
  const double d = p.demand[g][r];
  if (d <= 0.0) return 1.0;
  return std::clamp(delivered[g][r] / d, 0.0, 1.0);
}

namespace {

constexpr double kDemandFloor = 1e-12;
constexpr std::size_t kMaxPasses = 1000;

NodeSolution run(const NodeProblem& p, std::size_t max_passes, bool throw_on_limit) {
  const std::size_t G = p.num_groups();
  const std::size_t R = p.num_connections();
  const std::size_t H = p.num_downstream();

  NodeSolution sol;
  sol.delivered.assign(G, std::vector<double>(R, 0.0));
  sol.residual = p.demand;
  sol.connection_flow.assign(R, 0.0);
  sol.downstream_inflow.assign(H, 0.0);

  auto& d = sol.residual;
  std::vector<double> s = p.supply;
  std::vector<bool> blocked_h(H), blocked_r(R), blocked_g(G);
  std::vector<double> d_r(R), s_r(R), d_h(H), psi_h(H), psi_r(R), psi_g(G), delta_r(R);
  std::vector<std::vector<double>> mu(R, std::vector<double>(H, 0.0));

  auto is_closed = [&](std::size_t r) { return r < p.closed.size() && p.closed[r]; };

  while (true) {
    // NM 0
    ++sol.checks;
    for (std::size_t h = 0; h < H; ++h) blocked_h[h] = s[h] < kVehEps;
    for (std::size_t r = 0; r < R; ++r) {
      bool all = true;
      for (std::size_t h = 0; h < H; ++h)
        if (p.access[r][h] > 0.0 && !blocked_h[h]) all = false;
      blocked_r[r] = is_closed(r) || all;
    }
    bool stop = true;
    for (std::size_t g = 0; g < G; ++g) {
      bool any_demand = false;
      bool hits_blocked = false;
      for (std::size_t r = 0; r < R; ++r) {
        if (d[g][r] > kDemandFloor) {
          any_demand = true;
          if (blocked_r[r]) hits_blocked = true;
        }
      }
      blocked_g[g] = hits_blocked || !any_demand;
      if (!blocked_g[g]) stop = false;
    }
    if (stop) break;
    if (sol.iterations >= max_passes) {
      if (throw_on_limit)
        throw InvariantError(fmt::format("node model did not stop within {} iterations", max_passes));
      break;
    }

    // NM 1: demand and supply per road connection, apportionment.
    // Blocked upstream groups send nothing this pass and are left out of the demand.
    for (std::size_t r = 0; r < R; ++r) {
      d_r[r] = 0.0;
      for (std::size_t g = 0; g < G; ++g)
        if (!blocked_g[g] && d[g][r] > kDemandFloor) d_r[r] += d[g][r];
      s_r[r] = 0.0;
      if (!is_closed(r))
        for (std::size_t h = 0; h < H; ++h) s_r[r] += p.access[r][h] * s[h];
      for (std::size_t h = 0; h < H; ++h)
        mu[r][h] = (s_r[r] <= 0.0 || is_closed(r)) ? 0.0 : p.access[r][h] * s[h] / s_r[r];
    }
    // NM 2: demand on each downstream group and its excess factor.
    for (std::size_t h = 0; h < H; ++h) {
      d_h[h] = 0.0;
      for (std::size_t r = 0; r < R; ++r) d_h[h] += mu[r][h] * d_r[r];
      psi_h[h] = d_h[h] > 0.0 ? std::max(0.0, 1.0 - s[h] / d_h[h]) : 0.0;
    }
    // NM 3
    for (std::size_t r = 0; r < R; ++r) {
      if (blocked_r[r]) {
        psi_r[r] = 1.0;
        continue;
      }
      psi_r[r] = 0.0;
      for (std::size_t h = 0; h < H; ++h) psi_r[r] += mu[r][h] * psi_h[h];
      psi_r[r] = std::min(psi_r[r], 1.0);
    }
    // NM 4
    for (std::size_t g = 0; g < G; ++g) {
      if (blocked_g[g]) {
        psi_g[g] = 1.0;
        continue;
      }
      psi_g[g] = 0.0;
      for (std::size_t r = 0; r < R; ++r)
        if (d[g][r] > kDemandFloor) psi_g[g] = std::max(psi_g[g], psi_r[r]);
    }
    double moved = 0.0;
    std::fill(delta_r.begin(), delta_r.end(), 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      if (blocked_g[g]) continue;
      for (std::size_t r = 0; r < R; ++r) {
        if (!(d[g][r] > kDemandFloor)) continue;
        const double delta = d[g][r] * (1.0 - psi_g[g]);
        d[g][r] = psi_g[g] * d[g][r];
        sol.delivered[g][r] += delta;
        // NM 5
        delta_r[r] += delta;
        moved += delta;
      }
    }
    // NM 6
    for (std::size_t r = 0; r < R; ++r) sol.connection_flow[r] += delta_r[r];
    for (std::size_t h = 0; h < H; ++h) {
      double delta_h = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        if (mu[r][h] <= 0.0 || delta_r[r] <= 0.0) continue;
        const double factor = psi_r[r] >= 1.0 ? 0.0 : (1.0 - psi_h[h]) / (1.0 - psi_r[r]);
        delta_h += factor * mu[r][h] * delta_r[r];
      }
      sol.downstream_inflow[h] += delta_h;
      s[h] = std::max(0.0, s[h] - delta_h);
    }
    ++sol.iterations;
    if (moved < kVehEps) {
      ++sol.checks;
      break;
    }
  }
  return sol;
}

}  // namespace

NodeSolution solve(const NodeProblem& problem) { return run(problem, kMaxPasses, true); }

NodeSolution solve_unbounded(const NodeProblem& problem, std::size_t hard_limit) {
  return run(problem, hard_limit, false);
}

}  // namespace hybridsim
