// Multivalued forward SDEs on a Wiener ensemble: additive noise through pathwise
// GSP, and stochastic variational inequalities through resolvent splitting.
#pragma once

#include "mmfitz/fitzpatrick.hpp"
#include "mmfitz/gsp.hpp"
#include "mmfitz/operators.hpp"
#include "mmfitz/paths.hpp"

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace mmfitz {

/// k-dimensional Brownian increments on a grid, regenerated per path from (seed, path).
class WienerEnsemble {
 public:
  WienerEnsemble(TimeGrid grid, Eigen::Index dims, std::size_t paths, std::uint64_t seed);

  const TimeGrid& grid() const noexcept { return grid_; }
  Eigen::Index dims() const noexcept { return dims_; }
  std::size_t paths() const noexcept { return paths_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// dims x steps matrix of N(0, dt_i I) increments.
  Mat increments(std::size_t path) const;
  /// Independent stream for the initial condition of a path.
  std::mt19937_64 initial_stream(std::size_t path) const;

 private:
  TimeGrid grid_;
  Eigen::Index dims_ = 1;
  std::size_t paths_ = 0;
  std::uint64_t seed_ = 0;
};

/// Diffusion coefficient along a path: (path, step, t_step) -> d x k matrix.
using MatrixPath = std::function<Mat(std::size_t path, std::size_t step, double t)>;
MatrixPath constant_matrix(Mat g);

/// Initial condition sampler: (path, stream) -> xi.
using XiSampler = std::function<Vec(std::size_t path, std::mt19937_64& rng)>;
XiSampler constant_xi(Vec xi);

struct FieldCoefficients {
  std::function<Vec(double t, const Vec& x)> F;
  std::function<Mat(double t, const Vec& x)> G;
  /// Demands 2<x-y, F(t,x)-F(t,y)> + |G(t,x)-G(t,y)|^2 <= 0; checked by sampling before use.
  bool dissipative = false;
};

/// max over n random (t, x, y) of 2<x-y, F(t,x)-F(t,y)> + |G(t,x)-G(t,y)|^2.
double dissipativity_defect(const FieldCoefficients& coeffs, double horizon, const SamplingBox& box, std::size_t n,
                            std::uint64_t seed);

struct SdeOptions {
  bool keep_paths = false;
  ResolventOptions resolvent;
  /// Used for path gaps of kinds without a closed-form H.
  std::optional<Sampling> sampling;
  /// Box and budget of the dissipativity check in solve_svi.
  double check_half_width = 10.0;
  std::size_t check_samples = 1000;
  std::uint64_t check_seed = 0;
};

struct PathSummary {
  Vec xi;
  Vec x_terminal;
  double sup_x = 0.0;
  double tv_k = 0.0;
  double fitz_gap = 0.0;  ///< total path gap in the operator's natural mode
  double node_defect = 0.0;
};

struct SdeEnsemble {
  TimeGrid grid;
  std::vector<PathSummary> paths;
  /// Filled only with keep_paths.
  std::vector<GridPath> x;
  std::vector<BVPath> k;
  MeanEstimate sup_x_squared;  ///< E sup_t |X_t|^2
  MeanEstimate tv_k;           ///< E var(K)
  double max_node_defect = 0.0;
  double max_fitz_gap = 0.0;
  bool gap_exact = true;
};

/// Per path: M = cumulative G dB, then catching-up GSP from xi. xi is clipped to cl Dom(A).
SdeEnsemble solve_sde_additive(const OperatorSpec& op, const XiSampler& xi, const MatrixPath& g,
                               const WienerEnsemble& noise, const SdeOptions& options = {});

struct PathPair {
  GridPath x;
  BVPath k;
};

/// One SVI path for given increments: X_{i+1} = J_dt(X_i + F dt + G dB), dK_i = X_i + F dt + G dB - X_{i+1}.
PathPair solve_svi_path(const OperatorSpec& phi, const FieldCoefficients& coeffs, const Vec& xi, const TimeGrid& grid,
                        const Mat& increments, const ResolventOptions& resolvent = {});

/// Requires a subdifferential kind; rejects coefficients flagged dissipative that fail the sampled check.
SdeEnsemble solve_svi(const OperatorSpec& phi, const FieldCoefficients& coeffs, const XiSampler& xi,
                      const WienerEnsemble& noise, const SdeOptions& options = {});

/// xi moved onto cl Dom(A) when it lies outside.
Vec clip_to_domain(const OperatorSpec& op, const Vec& xi);

struct SviVerification {
  double tolerance = 0.0;  ///< 1e-7 (1 + var K)
  /// min over probes and windows of sum <X_r - z, dK_r - z* dt_r>.
  WindowWitness min_window_a2;
  /// min over probe points z and windows of sum [phi(z) dt_r - phi(X_r) dt_r - <z - X_r, dK_r>].
  WindowWitness min_window_a1;
  double path_gap = 0.0;
  bool path_gap_exact = true;

  bool a1_ok = false;
  bool a2_ok = false;
  bool passed() const { return a1_ok && a2_ok; }
};

SviVerification verify_svi(const OperatorSpec& phi, const GridPath& x, const BVPath& k,
                           std::span<const GraphPair> probes);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// Asymptotic two-sample critical value c(alpha) sqrt((n + m) / (n m)).
double ks_critical_value(std::size_t n, std::size_t m, double alpha);

}  // namespace mmfitz
