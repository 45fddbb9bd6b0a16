// Generalized Skorohod problem dx + A(x)(dt) ∋ dm, x(0) = x0, on a time grid.
#pragma once

#include "mmfitz/fitzpatrick.hpp"
#include "mmfitz/operators.hpp"
#include "mmfitz/paths.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmfitz {

enum class GspScheme {
  catching_up,          ///< x_{i+1} = J_{dt}(x_i + dm_i)
  yosida_penalization,  ///< x_{i+1} = x_i + dm_i - dt A_eps(x_{i+1}), solved implicitly
  reflection_oracle,    ///< running-minimum formula on [0, inf)
};

std::string to_string(GspScheme scheme);
GspScheme gsp_scheme_from_string(const std::string& name);

struct GspOptions {
  GspScheme scheme = GspScheme::catching_up;
  double eps = 1e-2;  ///< penalization parameter, yosida_penalization only
  ResolventOptions resolvent;
  /// Used for the per-step gap of kinds without a closed-form Fitzpatrick function.
  std::optional<Sampling> sampling;
};

struct GspDiagnostics {
  double sup_norm = 0.0;
  double total_variation = 0.0;
  /// Largest per-step Fitzpatrick gap; empty when H is neither closed form nor sampled.
  std::optional<double> max_step_gap;
  bool gap_exact = true;
  double node_defect = 0.0;  ///< max_i |x_i + k_i - x0 - m_i|
  GspScheme scheme = GspScheme::catching_up;
  double eps = 0.0;
  double max_dt = 0.0;
};

struct GspSolution {
  GridPath x;
  BVPath k;
  GspDiagnostics diagnostics;
};

/// Gap mode matching the operator: homogeneous for normal cones, density otherwise.
GapMode natural_gap_mode(const OperatorSpec& op);

/// Requires m(0) = 0 and, for constrained domains, |x0 - J_{1e-8}(x0)| <= 1e-6.
GspSolution solve_gsp(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GspOptions& options = {});

/// Reflection on [0, inf) by k(t_i) = -max(0, max_{j<=i} -(x0 + m(t_j))).
GspSolution skorohod_1d_oracle(double x0, const GridPath& m);

/// Fills sup_norm, total_variation, node_defect and the step gaps of a candidate pair.
GspDiagnostics diagnose(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GridPath& x, const BVPath& k,
                        const std::optional<Sampling>& sampling = std::nullopt);

struct WindowWitness {
  std::size_t probe = 0;
  std::size_t first_step = 0;  ///< window covers steps [first_step, last_step)
  std::size_t last_step = 0;
  double value = 0.0;
};

struct GspVerification {
  double tolerance = 0.0;  ///< 1e-7 (1 + |m|_T + var k)
  double node_defect = 0.0;
  double domain_defect = 0.0;  ///< max distance of x_i to cl Dom(A)
  /// min over probes and windows s <= t of sum_{s<r<=t} <x_r - z, dk_r - z* dt_r>; 0 for empty windows.
  WindowWitness min_window;
  double path_gap = 0.0;
  bool path_gap_exact = true;

  bool node_ok = false;
  bool domain_ok = false;
  bool inequality_ok = false;
  bool gap_ok = false;
  bool passed() const { return node_ok && domain_ok && inequality_ok && gap_ok; }
};

/// Checks a candidate against the integral definition with the given probe pairs. Kinds without
/// a closed-form H use the probes themselves as the sample set for the path gap.
GspVerification verify_gsp(const OperatorSpec& op, const Vec& x0, const GridPath& m, const GridPath& x, const BVPath& k,
                           std::span<const GraphPair> probes);

struct GspCase {
  Vec x0;
  GridPath m;
};

struct ProbeEstimate {
  double c_apriori = 0.0;
  /// Empty when no pair of cases has a positive denominator.
  std::optional<double> c_holder;
  std::size_t pairs_used = 0;
};

/// Empirical constants of the a priori and Hölder estimates over a family solved by catching-up.
/// Requires a box or ball domain with nonempty interior and a shared grid.
ProbeEstimate estimate_probe(const OperatorSpec& op, std::span<const GspCase> cases);

}  // namespace mmfitz
