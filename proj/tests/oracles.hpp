#pragma once

// Independent reference implementations used by the tests. Nothing here
// calls into the library's numerics.

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flc/grid_model.hpp"
#include "flc/neural_kan.hpp"

namespace oracle {

using cd = std::complex<double>;
using CMat = std::vector<std::vector<cd>>;

// Gaussian elimination with partial pivoting.
inline std::vector<cd> solve(CMat a, std::vector<cd> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (std::abs(a[p][c]) == 0.0) throw std::runtime_error("oracle: singular");
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const cd f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<cd> x(n);
  for (std::size_t r = n; r-- > 0;) {
    cd s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

// Pi-model stamping straight from the textbook branch equations.
inline CMat admittance(std::size_t n, const std::vector<flc::grid::Line>& lines,
                       const std::vector<cd>& shunts) {
  CMat y(n, std::vector<cd>(n, 0.0));
  for (std::size_t b = 0; b < n; ++b) y[b][b] += shunts[b];
  for (const auto& l : lines) {
    const cd half{0.0, l.charging / 2.0};
    const double t = l.tap;
    y[l.from][l.from] += (l.series + half) / (t * t);
    y[l.to][l.to] += l.series + half;
    y[l.from][l.to] -= l.series / t;
    y[l.to][l.from] -= l.series / t;
  }
  return y;
}

inline CMat from_full(const flc::grid::FullNetwork& full) {
  const std::size_t n = full.bus_count;
  CMat y(n, std::vector<cd>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      y[r][c] = {full.y_real(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)),
                 full.y_imag(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))};
  return y;
}

// Voltages at every bus for current injections `ig` at the generator buses
// and zero injection elsewhere.
inline std::vector<cd> full_solve(const flc::grid::FullNetwork& full, const std::vector<cd>& ig) {
  std::vector<cd> rhs(full.bus_count, 0.0);
  for (std::size_t g = 0; g < ig.size(); ++g) rhs[static_cast<std::size_t>(full.generator_buses[g])] = ig[g];
  return solve(from_full(full), rhs);
}

inline std::vector<double> pe(const std::vector<double>& d, const std::vector<std::vector<double>>& g,
                              const std::vector<std::vector<double>>& b, const std::vector<double>& e) {
  std::vector<double> out(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < d.size(); ++k)
      out[i] += e[i] * e[k] * (g[i][k] * std::cos(d[i] - d[k]) + b[i][k] * std::sin(d[i] - d[k]));
  return out;
}

inline double cheb(std::size_t n, double x) { return std::cos(static_cast<double>(n) * std::acos(x)); }

// Straight-line evaluator: T_n via the trigonometric identity.
inline std::vector<double> forward(const flc::kan::ChebyKanModel& model, std::vector<double> x) {
  for (const auto& layer : model.layers()) {
    std::vector<double> y(layer.out_dim(), 0.0);
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
      const double z = std::tanh(x[i]);
      for (std::size_t o = 0; o < layer.out_dim(); ++o)
        for (std::size_t n = 0; n <= layer.degree(); ++n) y[o] += layer.coeff(i, o, n) * cheb(n, z);
    }
    x = std::move(y);
  }
  return x;
}

// Random connected network. Every bus gets a small shunt to ground so the
// full admittance matrix is invertible.
struct RandomNetwork {
  std::size_t buses;
  std::vector<flc::grid::Line> lines;
  std::vector<cd> shunts;
  std::vector<int> generators;
};

inline RandomNetwork random_network(std::mt19937_64& rng, std::size_t buses, std::size_t gens) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomNetwork net;
  net.buses = buses;
  const auto branch = [&](int a, int b) {
    const cd z{0.005 + 0.05 * u(rng), 0.02 + 0.3 * u(rng)};
    flc::grid::Line l;
    l.from = a;
    l.to = b;
    l.series = 1.0 / z;
    l.charging = 0.2 * u(rng);
    l.tap = u(rng) < 0.2 ? 0.9 + 0.2 * u(rng) : 1.0;
    net.lines.push_back(l);
  };
  for (std::size_t b = 1; b < buses; ++b) branch(static_cast<int>(rng() % b), static_cast<int>(b));
  for (std::size_t extra = 0; extra < buses / 2; ++extra) {
    const int a = static_cast<int>(rng() % buses);
    const int b = static_cast<int>(rng() % buses);
    if (a != b) branch(a, b);
  }
  for (std::size_t b = 0; b < buses; ++b) net.shunts.emplace_back(0.05 + 0.5 * u(rng), -0.3 * u(rng));
  std::vector<int> all(buses);
  for (std::size_t b = 0; b < buses; ++b) all[b] = static_cast<int>(b);
  std::shuffle(all.begin(), all.end(), rng);
  net.generators.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(gens));
  return net;
}

}  // namespace oracle
