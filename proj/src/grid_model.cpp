#include "flc/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flc/errors.hpp"

namespace flc::grid {

namespace {

using ComplexMatrix = Eigen::MatrixXcd;

void require_length(const Vector& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n) {
    std::ostringstream os;
    os << what << " has length " << v.size() << ", expected " << n;
    raise(ErrorKind::DimensionMismatch, os.str());
  }
}

ComplexMatrix admittance(const FullNetwork& full) {
  ComplexMatrix y(full.y_real.rows(), full.y_real.cols());
  y.real() = full.y_real;
  y.imag() = full.y_imag;
  return y;
}

void stamp(Matrix& re, Matrix& im, const Line& line, double sign) {
  const Complex y = line.series;
  const Complex half_charge{0.0, line.charging / 2.0};
  const double t = line.tap;
  const Complex yff = (y + half_charge) / (t * t);
  const Complex ytt = y + half_charge;
  const Complex yft = -y / t;
  re(line.from, line.from) += sign * yff.real();
  im(line.from, line.from) += sign * yff.imag();
  re(line.to, line.to) += sign * ytt.real();
  im(line.to, line.to) += sign * ytt.imag();
  re(line.from, line.to) += sign * yft.real();
  im(line.from, line.to) += sign * yft.imag();
  re(line.to, line.from) += sign * yft.real();
  im(line.to, line.from) += sign * yft.imag();
}

bool connects(const Line& line, int a, int b) {
  return (line.from == a && line.to == b) || (line.from == b && line.to == a);
}

ReducedNetwork reduce(const FullNetwork& full, int grounded_bus, const KronOptions& opts) {
  if (full.generator_buses.empty()) {
    raise(ErrorKind::EmptyGeneratorSet, "kron_reduce: no generator buses to retain");
  }
  const auto n = static_cast<int>(full.bus_count);
  std::vector<char> retained(full.bus_count, 0);
  for (int g : full.generator_buses) {
    if (g < 0 || g >= n) {
      raise(ErrorKind::DimensionMismatch, "kron_reduce: generator bus index out of range");
    }
    if (g == grounded_bus) {
      raise(ErrorKind::FaultOnGeneratorInternalNode,
            "cannot ground generator internal node " + std::to_string(g));
    }
    retained[static_cast<std::size_t>(g)] = 1;
  }
  std::vector<int> interior;
  for (int b = 0; b < n; ++b) {
    if (!retained[static_cast<std::size_t>(b)] && b != grounded_bus) interior.push_back(b);
  }

  const ComplexMatrix y = admittance(full);
  const auto& gens = full.generator_buses;
  const auto ng = static_cast<Eigen::Index>(gens.size());
  const auto nl = static_cast<Eigen::Index>(interior.size());

  ComplexMatrix ygg(ng, ng);
  for (Eigen::Index i = 0; i < ng; ++i)
    for (Eigen::Index k = 0; k < ng; ++k) ygg(i, k) = y(gens[i], gens[k]);

  ComplexMatrix reduced = ygg;
  if (nl > 0) {
    ComplexMatrix yll(nl, nl), ylg(nl, ng), ygl(ng, nl);
    for (Eigen::Index i = 0; i < nl; ++i)
      for (Eigen::Index k = 0; k < nl; ++k) yll(i, k) = y(interior[i], interior[k]);
    for (Eigen::Index i = 0; i < nl; ++i)
      for (Eigen::Index k = 0; k < ng; ++k) {
        ylg(i, k) = y(interior[i], gens[k]);
        ygl(k, i) = y(gens[k], interior[i]);
      }
    Eigen::PartialPivLU<ComplexMatrix> lu(yll);
    const double rcond = lu.rcond();
    if (!(rcond * opts.max_condition >= 1.0)) {
      std::ostringstream os;
      os << "kron_reduce: interior block is singular or ill-conditioned (rcond=" << rcond << ")";
      raise(ErrorKind::SingularInterior, os.str());
    }
    reduced = ygg - ygl * lu.solve(ylg);
  }

  ReducedNetwork out;
  out.conductance = 0.5 * (reduced.real() + reduced.real().transpose());
  out.susceptance = 0.5 * (reduced.imag() + reduced.imag().transpose());
  return out;
}

}  // namespace

void validate(std::span<const GeneratorParams> params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!(p.inertia > 0.0) || !(p.emf > 0.0) || p.alpha < 0.0 || p.beta < 0.0 || p.damping < 0.0) {
      raise(ErrorKind::ConfigError,
            "generator " + std::to_string(i + 1) + ": require M > 0, E > 0, D, alpha, beta >= 0");
    }
  }
}

Vector emf_vector(std::span<const GeneratorParams> params) {
  Vector v(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) v[static_cast<Eigen::Index>(i)] = params[i].emf;
  return v;
}

Vector mech_power_vector(std::span<const GeneratorParams> params) {
  Vector v(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = params[i].mech_power;
  return v;
}

Vector delta_star_vector(std::span<const GeneratorParams> params) {
  Vector v(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = params[i].delta_star;
  return v;
}

void validate(const ReducedNetwork& net) {
  const auto n = net.conductance.rows();
  if (net.conductance.cols() != n || net.susceptance.rows() != n || net.susceptance.cols() != n) {
    raise(ErrorKind::DimensionMismatch, "reduced network matrices must be square and equal-sized");
  }
  if (net.conductance != net.conductance.transpose() ||
      net.susceptance != net.susceptance.transpose()) {
    raise(ErrorKind::DimensionMismatch, "reduced network matrices must be symmetric");
  }
}

std::vector<std::string> network_warnings(const ReducedNetwork& net) {
  std::vector<std::string> out;
  const auto n = net.conductance.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = i + 1; k < n; ++k) {
      if (net.susceptance(i, k) < 0.0) {
        std::ostringstream os;
        os << "negative reduced susceptance B[" << i + 1 << "][" << k + 1
           << "] = " << net.susceptance(i, k);
        out.push_back(os.str());
      }
      if (net.conductance(i, k) < 0.0) {
        std::ostringstream os;
        os << "negative reduced conductance G[" << i + 1 << "][" << k + 1
           << "] = " << net.conductance(i, k);
        out.push_back(os.str());
      }
    }
  }
  return out;
}

FullNetwork build_network(std::size_t bus_count, std::vector<Line> lines,
                          std::vector<Complex> shunts, std::vector<int> generator_buses) {
  const auto n = static_cast<Eigen::Index>(bus_count);
  if (shunts.size() != bus_count) {
    raise(ErrorKind::DimensionMismatch, "build_network: shunt list length != bus count");
  }
  FullNetwork full;
  full.bus_count = bus_count;
  full.y_real = Matrix::Zero(n, n);
  full.y_imag = Matrix::Zero(n, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    full.y_real(b, b) += shunts[static_cast<std::size_t>(b)].real();
    full.y_imag(b, b) += shunts[static_cast<std::size_t>(b)].imag();
  }
  for (const auto& line : lines) {
    if (line.from < 0 || line.to < 0 || line.from >= n || line.to >= n || line.from == line.to) {
      raise(ErrorKind::DimensionMismatch, "build_network: branch endpoints out of range");
    }
    if (!(line.tap > 0.0)) raise(ErrorKind::ConfigError, "build_network: tap ratio must be > 0");
    stamp(full.y_real, full.y_imag, line, 1.0);
  }
  std::vector<int> sorted = generator_buses;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    raise(ErrorKind::DimensionMismatch, "build_network: duplicate generator bus");
  }
  for (int g : generator_buses) {
    if (g < 0 || g >= n) raise(ErrorKind::DimensionMismatch, "build_network: generator bus out of range");
  }
  full.lines = std::move(lines);
  full.shunts = std::move(shunts);
  full.generator_buses = std::move(generator_buses);
  return full;
}

bool has_line(const FullNetwork& full, int a, int b) {
  return std::any_of(full.lines.begin(), full.lines.end(),
                     [&](const Line& l) { return connects(l, a, b); });
}

FullNetwork without_line(const FullNetwork& full, int a, int b) {
  auto it = std::find_if(full.lines.begin(), full.lines.end(),
                         [&](const Line& l) { return connects(l, a, b); });
  if (it == full.lines.end()) {
    raise(ErrorKind::InvalidScenario,
          "no branch between buses " + std::to_string(a) + " and " + std::to_string(b));
  }
  FullNetwork out = full;
  stamp(out.y_real, out.y_imag, *it, -1.0);
  out.lines.erase(out.lines.begin() + (it - full.lines.begin()));
  return out;
}

ReducedNetwork kron_reduce(const FullNetwork& full, const KronOptions& opts) {
  return reduce(full, -1, opts);
}

ReducedNetwork kron_reduce_grounded(const FullNetwork& full, int grounded_bus,
                                    const KronOptions& opts) {
  if (grounded_bus < 0 || static_cast<std::size_t>(grounded_bus) >= full.bus_count) {
    raise(ErrorKind::InvalidScenario, "faulted bus out of range");
  }
  return reduce(full, grounded_bus, opts);
}

Vector electrical_power(const Vector& delta, const ReducedNetwork& net, const Vector& emf) {
  const auto n = net.size();
  require_length(delta, n, "delta");
  require_length(emf, n, "emf");
  Vector pe = Vector::Zero(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < pe.size(); ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < pe.size(); ++k) {
      const double diff = delta[i] - delta[k];
      acc += emf[i] * emf[k] *
             (net.conductance(i, k) * std::cos(diff) + net.susceptance(i, k) * std::sin(diff));
    }
    pe[i] = acc;
  }
  return pe;
}

Vector accelerating_power(const Vector& delta, std::span<const GeneratorParams> params,
                          const ReducedNetwork& net) {
  if (params.size() != net.size()) {
    raise(ErrorKind::DimensionMismatch, "generator count differs from network size");
  }
  return mech_power_vector(params) - electrical_power(delta, net, emf_vector(params));
}

Matrix electrical_power_jacobian(const Vector& delta, const ReducedNetwork& net,
                                 const Vector& emf) {
  const auto n = static_cast<Eigen::Index>(net.size());
  require_length(delta, net.size(), "delta");
  Matrix jac = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (k == i) continue;
      const double diff = delta[i] - delta[k];
      const double term = emf[i] * emf[k] *
                          (-net.conductance(i, k) * std::sin(diff) +
                           net.susceptance(i, k) * std::cos(diff));
      jac(i, i) += term;
      jac(i, k) -= term;
    }
  }
  return jac;
}

Vector solve_equilibrium(std::span<const GeneratorParams> params, const ReducedNetwork& net,
                         const EquilibriumOptions& opts) {
  const auto n = static_cast<Eigen::Index>(net.size());
  if (static_cast<std::size_t>(n) != params.size()) {
    raise(ErrorKind::DimensionMismatch, "generator count differs from network size");
  }
  const Vector emf = emf_vector(params);
  Vector delta = Vector::Zero(n);
  Vector residual = accelerating_power(delta, params, net);
  double norm = residual.lpNorm<Eigen::Infinity>();

  for (int iter = 0; iter < opts.max_iterations && norm > opts.tolerance; ++iter) {
    if (n < 2) break;
    // d(Pa)/d(delta) = -d(Pe)/d(delta); the last angle is the reference.
    const Matrix jac = -electrical_power_jacobian(delta, net, emf).leftCols(n - 1);
    const Vector step = jac.colPivHouseholderQr().solve(-residual);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 30; ++halving, scale *= 0.5) {
      Vector trial = delta;
      trial.head(n - 1) += scale * step;
      const Vector r = accelerating_power(trial, params, net);
      const double rn = r.lpNorm<Eigen::Infinity>();
      if (std::isfinite(rn) && rn < norm) {
        delta = trial;
        residual = r;
        norm = rn;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }

  if (!(norm <= opts.tolerance)) {
    std::ostringstream os;
    os << "equilibrium solve did not converge; final residual " << norm;
    raise(ErrorKind::NoConvergence, os.str());
  }
  return delta;
}

Vector manufacture_equilibrium(const Vector& delta0, const Vector& emf, const ReducedNetwork& net) {
  return electrical_power(delta0, net, emf);
}

}  // namespace flc::grid
