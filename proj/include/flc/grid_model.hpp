#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace flc::grid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Complex = std::complex<double>;

/// Classical-model machine constants plus the local feedback gains.
///
/// Units are per-unit on the system base; inertia is in pu*s^2 so that
/// `inertia * d(omega)/dt` is a power.
struct GeneratorParams {
  double inertia = 1.0;     // M_i > 0
  double damping = 0.0;     // D_i >= 0
  double mech_power = 0.0;  // Pm_i, held constant (no governor)
  double emf = 1.0;         // |E_i| > 0
  double delta_star = 0.0;  // target angle for the local controllers
  double alpha = 0.5;       // frequency gain
  double beta = 0.005;      // phase gain
};

void validate(std::span<const GeneratorParams> params);

Vector emf_vector(std::span<const GeneratorParams> params);
Vector mech_power_vector(std::span<const GeneratorParams> params);
Vector delta_star_vector(std::span<const GeneratorParams> params);

/// Generator-only equivalent network: Y_red = G + jB.
struct ReducedNetwork {
  Matrix conductance;
  Matrix susceptance;

  std::size_t size() const { return static_cast<std::size_t>(conductance.rows()); }
};

/// Checks shapes and exact symmetry; throws DimensionMismatch.
void validate(const ReducedNetwork& net);

/// Non-fatal observations about a reduced network (negative off-diagonal
/// susceptance or conductance). Callers decide whether to print them.
std::vector<std::string> network_warnings(const ReducedNetwork& net);

/// A series branch between two buses. Indices are zero-based.
///
/// `tap` is an off-nominal real turns ratio at the from-side (1 for lines).
struct Line {
  int from = 0;
  int to = 0;
  Complex series{0.0, 0.0};
  double charging = 0.0;  // total line-charging susceptance
  double tap = 1.0;
};

/// Full bus model. The admittance matrix is kept as separate real and
/// imaginary parts; `generator_buses` lists the buses retained by Kron
/// reduction (the generator internal nodes), in generator order.
struct FullNetwork {
  std::size_t bus_count = 0;
  Matrix y_real;
  Matrix y_imag;
  std::vector<int> generator_buses;
  std::vector<Line> lines;
  std::vector<Complex> shunts;
};

/// Assembles Y from shunt and branch stamps.
FullNetwork build_network(std::size_t bus_count, std::vector<Line> lines,
                          std::vector<Complex> shunts, std::vector<int> generator_buses);

/// Same network with one branch between `a` and `b` removed (the first match
/// in line order). Throws InvalidScenario if no such branch exists.
FullNetwork without_line(const FullNetwork& full, int a, int b);

bool has_line(const FullNetwork& full, int a, int b);

struct KronOptions {
  /// Largest acceptable condition number (1 / rcond) of the interior block.
  double max_condition = 1e12;
};

/// Eliminates every non-generator bus: Y_gg - Y_gl * inv(Y_ll) * Y_lg.
ReducedNetwork kron_reduce(const FullNetwork& full, const KronOptions& opts = {});

/// Kron reduction after deleting `grounded_bus` (voltage pinned at zero).
ReducedNetwork kron_reduce_grounded(const FullNetwork& full, int grounded_bus,
                                    const KronOptions& opts = {});

/// Pe_i = sum_k E_i E_k (G_ik cos(d_i - d_k) + B_ik sin(d_i - d_k)).
Vector electrical_power(const Vector& delta, const ReducedNetwork& net, const Vector& emf);

/// Pa_i = Pm_i - Pe_i.
Vector accelerating_power(const Vector& delta, std::span<const GeneratorParams> params,
                          const ReducedNetwork& net);

/// Jacobian dPe/d(delta), N x N.
Matrix electrical_power_jacobian(const Vector& delta, const ReducedNetwork& net,
                                 const Vector& emf);

struct EquilibriumOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
};

/// Damped Gauss-Newton from the flat start with the last angle pinned at 0.
/// Throws NoConvergence (message carries the final residual).
Vector solve_equilibrium(std::span<const GeneratorParams> params, const ReducedNetwork& net,
                         const EquilibriumOptions& opts = {});

/// Mechanical powers that make `delta0` an exact equilibrium: Pm := Pe(delta0).
Vector manufacture_equilibrium(const Vector& delta0, const Vector& emf, const ReducedNetwork& net);

}  // namespace flc::grid
