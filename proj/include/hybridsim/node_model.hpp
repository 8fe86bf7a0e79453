#pragma once

#include <cstddef>
#include <vector>

namespace hybridsim {

/// Junction allocation problem in index form. Upstream lane groups g feed
/// road connections r, which feed downstream lane groups h.
struct NodeProblem {
  /// demand[g][r] ≥ 0; zero where r is not an exit of g.
  std::vector<std::vector<double>> demand;
  /// access[r][h] = λ^r_h ∈ (0,1] when h ∈ D_r, zero otherwise.
  std::vector<std::vector<double>> access;
  /// supply[h] ≥ 0.
  std::vector<double> supply;
  /// Road connections forced shut (signals, blocking actuators).
  std::vector<bool> closed;

  std::size_t num_groups() const { return demand.size(); }
  std::size_t num_connections() const { return access.size(); }
  std::size_t num_downstream() const { return supply.size(); }
};

struct NodeSolution {
  std::vector<std::vector<double>> delivered;  // Δ_gr
  std::vector<std::vector<double>> residual;   // undelivered d_gr
  std::vector<double> connection_flow;         // Δ_r
  std::vector<double> downstream_inflow;       // Δ_h
  /// Completed NM1–NM6 passes.
  std::size_t iterations = 0;
  /// Evaluations of the blocking flags, including the one that stopped the loop.
  std::size_t checks = 0;

  double total_delivered() const;
  /// Δ_gr / d_gr, or 1 when d_gr is zero.
  double scale(std::size_t g, std::size_t r, const NodeProblem& p) const;
};

/// Iterative allocation with FIFO blocking. Stops within |G| passes when
/// every connection enters a single downstream group; a connection spread
/// over several groups can need more. Throws InvariantError after 1000.
NodeSolution solve(const NodeProblem& problem);

/// As solve(), without the iteration bound; used to study termination.
NodeSolution solve_unbounded(const NodeProblem& problem, std::size_t hard_limit = 10000);

}  // namespace hybridsim
