#include "flc/neural_kan.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "flc/errors.hpp"
#include "flc/seeding.hpp"

namespace flc::kan {

namespace {

// Forward activations for one sample, reused across samples.
struct LayerCache {
  std::vector<double> z;      // tanh(input), in_dim
  std::vector<double> basis;  // in_dim x (degree + 1)
  std::vector<double> out;    // out_dim
};

struct Workspace {
  std::vector<LayerCache> layers;
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  std::vector<double> dbasis;

  explicit Workspace(const ChebyKanModel& model) {
    std::size_t widest = 0;
    for (const auto& layer : model.layers()) {
      LayerCache c;
      c.z.resize(layer.in_dim());
      c.basis.resize(layer.in_dim() * (layer.degree() + 1));
      c.out.resize(layer.out_dim());
      layers.push_back(std::move(c));
      widest = std::max({widest, layer.in_dim(), layer.out_dim()});
      dbasis.resize(std::max(dbasis.size(), layer.degree() + 1));
    }
    grad_a.resize(widest);
    grad_b.resize(widest);
  }
};

void forward_layer(const ChebyKanLayer& layer, std::span<const double> input, LayerCache& cache) {
  const std::size_t width = layer.degree() + 1;
  for (std::size_t i = 0; i < layer.in_dim(); ++i) {
    cache.z[i] = std::tanh(input[i]);
    chebyshev_basis(cache.z[i], std::span<double>(cache.basis).subspan(i * width, width));
  }
  std::fill(cache.out.begin(), cache.out.end(), 0.0);
  const auto coeffs = layer.coefficients();
  for (std::size_t i = 0; i < layer.in_dim(); ++i) {
    const double* t = cache.basis.data() + i * width;
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double* c = coeffs.data() + layer.index(i, o, 0);
      double acc = 0.0;
      for (std::size_t n = 0; n < width; ++n) acc += c[n] * t[n];
      cache.out[o] += acc;
    }
  }
}

std::span<const double> forward_cached(const ChebyKanModel& model, std::span<const double> input,
                                       Workspace& ws) {
  std::span<const double> x = input;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    forward_layer(model.layers()[l], x, ws.layers[l]);
    x = ws.layers[l].out;
  }
  return x;
}

// T_n'(z) = n U_{n-1}(z), U by the second-kind recurrence.
void chebyshev_derivative(double z, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 0.0;
  double u_prev = 0.0;
  double u_curr = 1.0;  // U_0
  for (std::size_t n = 1; n < out.size(); ++n) {
    out[n] = static_cast<double>(n) * u_curr;
    const double u_next = (n == 1) ? 2.0 * z : 2.0 * z * u_curr - u_prev;
    u_prev = u_curr;
    u_curr = u_next;
  }
}

void check_sample(const ChebyKanModel& model, const TrainingSample& s) {
  if (s.input.size() != model.input_dim() || s.target.size() != model.output_dim()) {
    raise(ErrorKind::DimensionMismatch, "training sample does not match model arity");
  }
}

// Accumulates the sample's loss gradient into `grad`; returns squared error.
double accumulate_sample(const ChebyKanModel& model, const TrainingSample& s, double weight,
                         Workspace& ws, Gradient& grad) {
  const auto out = forward_cached(model, s.input, ws);
  double sq = 0.0;
  auto& upstream = ws.grad_a;
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double r = out[o] - s.target[o];
    sq += r * r;
    upstream[o] = 2.0 * r * weight;
  }

  for (std::size_t l = model.layers().size(); l-- > 0;) {
    const auto& layer = model.layers()[l];
    const auto& cache = ws.layers[l];
    const std::size_t width = layer.degree() + 1;
    auto& g = grad[l];
    auto& downstream = ws.grad_b;
    const auto coeffs = layer.coefficients();
    const auto dbasis = std::span<double>(ws.dbasis).first(width);
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
      const double* t = cache.basis.data() + i * width;
      chebyshev_derivative(cache.z[i], dbasis);
      double dz = 0.0;
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const std::size_t base = layer.index(i, o, 0);
        const double up = ws.grad_a[o];
        double edge_slope = 0.0;
        for (std::size_t n = 0; n < width; ++n) {
          g[base + n] += up * t[n];
          edge_slope += coeffs[base + n] * dbasis[n];
        }
        dz += up * edge_slope;
      }
      downstream[i] = dz * (1.0 - cache.z[i] * cache.z[i]);
    }
    std::swap(ws.grad_a, ws.grad_b);
  }
  return sq;
}

Gradient zero_gradient(const ChebyKanModel& model) {
  Gradient g;
  for (const auto& layer : model.layers()) g.emplace_back(layer.size(), 0.0);
  return g;
}

}  // namespace

ChebyKanLayer::ChebyKanLayer(std::size_t in_dim, std::size_t out_dim, std::size_t degree)
    : in_dim_(in_dim), out_dim_(out_dim), degree_(degree), coeffs_(in_dim * out_dim * (degree + 1), 0.0) {
  if (in_dim == 0 || out_dim == 0) {
    raise(ErrorKind::DimensionMismatch, "layer dimensions must be >= 1");
  }
}

Architecture uniform_architecture(std::vector<std::size_t> dims, std::size_t degree) {
  Architecture arch;
  arch.degrees.assign(dims.size() > 0 ? dims.size() - 1 : 0, degree);
  arch.dims = std::move(dims);
  return arch;
}

ChebyKanModel::ChebyKanModel(std::vector<ChebyKanLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
    if (layers_[k].out_dim() != layers_[k + 1].in_dim()) {
      raise(ErrorKind::DimensionMismatch, "adjacent layer dimensions do not chain");
    }
  }
}

ChebyKanModel ChebyKanModel::zeros(const Architecture& arch) {
  if (arch.dims.size() != arch.degrees.size() + 1 && !(arch.dims.empty() && arch.degrees.empty())) {
    raise(ErrorKind::DimensionMismatch, "architecture needs one degree per layer");
  }
  std::vector<ChebyKanLayer> layers;
  for (std::size_t k = 0; k < arch.degrees.size(); ++k) {
    layers.emplace_back(arch.dims[k], arch.dims[k + 1], arch.degrees[k]);
  }
  return ChebyKanModel(std::move(layers));
}

ChebyKanModel ChebyKanModel::random(const Architecture& arch, std::uint64_t seed) {
  ChebyKanModel model = zeros(arch);
  std::mt19937_64 rng(seed);
  for (auto& layer : model.layers_) {
    const double half_width = 1.0 / static_cast<double>(layer.in_dim() * (layer.degree() + 1));
    for (double& c : layer.coefficients()) c = half_width * (2.0 * unit_uniform(rng) - 1.0);
  }
  return model;
}

std::size_t ChebyKanModel::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in_dim();
}

std::size_t ChebyKanModel::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

Architecture ChebyKanModel::architecture() const {
  Architecture arch;
  if (layers_.empty()) return arch;
  arch.dims.push_back(layers_.front().in_dim());
  for (const auto& layer : layers_) {
    arch.dims.push_back(layer.out_dim());
    arch.degrees.push_back(layer.degree());
  }
  return arch;
}

std::vector<double> chebyshev_basis(double x, std::size_t degree) {
  std::vector<double> out(degree + 1);
  chebyshev_basis(x, out);
  return out;
}

void chebyshev_basis(double x, std::span<double> out) {
  if (out.empty()) return;
  out[0] = 1.0;
  if (out.size() > 1) out[1] = x;
  for (std::size_t n = 2; n < out.size(); ++n) out[n] = 2.0 * x * out[n - 1] - out[n - 2];
}

std::vector<double> layer_forward(const ChebyKanLayer& layer, std::span<const double> input) {
  if (input.size() != layer.in_dim()) {
    raise(ErrorKind::DimensionMismatch, "layer input length does not match in_dim");
  }
  LayerCache cache;
  cache.z.resize(layer.in_dim());
  cache.basis.resize(layer.in_dim() * (layer.degree() + 1));
  cache.out.resize(layer.out_dim());
  forward_layer(layer, input, cache);
  return cache.out;
}

std::vector<double> model_forward(const ChebyKanModel& model, std::span<const double> input) {
  if (model.layers().empty()) return std::vector<double>(input.begin(), input.end());
  if (input.size() != model.input_dim()) {
    raise(ErrorKind::DimensionMismatch, "model input length does not match input arity");
  }
  Workspace ws(model);
  const auto out = forward_cached(model, input, ws);
  return {out.begin(), out.end()};
}

double loss_mse(const ChebyKanModel& model, std::span<const TrainingSample> batch) {
  if (batch.empty()) raise(ErrorKind::EmptyBatch, "loss_mse: empty batch");
  Workspace ws(model);
  double total = 0.0;
  for (const auto& s : batch) {
    check_sample(model, s);
    const auto out = forward_cached(model, s.input, ws);
    for (std::size_t o = 0; o < out.size(); ++o) {
      const double r = out[o] - s.target[o];
      total += r * r;
    }
  }
  return total / static_cast<double>(batch.size());
}

LossGradient loss_and_gradient(const ChebyKanModel& model, std::span<const TrainingSample> batch) {
  if (batch.empty()) raise(ErrorKind::EmptyBatch, "backward: empty batch");
  Workspace ws(model);
  LossGradient result{0.0, zero_gradient(model)};
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    check_sample(model, s);
    result.loss += accumulate_sample(model, s, weight, ws, result.gradient);
  }
  result.loss *= weight;
  return result;
}

Gradient backward(const ChebyKanModel& model, std::span<const TrainingSample> batch) {
  return loss_and_gradient(model, batch).gradient;
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "adam") return Optimizer::Adam;
  raise(ErrorKind::ConfigError, "unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(Optimizer opt) { return opt == Optimizer::Sgd ? "sgd" : "adam"; }

TrainResult train_local(const ChebyKanModel& model, std::span<const TrainingSample> shard,
                        const TrainHyper& hyper) {
  if (shard.empty()) raise(ErrorKind::EmptyBatch, "train_local: empty shard");
  if (hyper.batch_size == 0) raise(ErrorKind::ConfigError, "train_local: batch_size must be >= 1");

  TrainResult result{model, 0.0};
  auto& layers = result.model.layers();

  Gradient m1, m2;
  if (hyper.optimizer == Optimizer::Adam) {
    m1 = zero_gradient(model);
    m2 = zero_gradient(model);
  }
  std::uint64_t step = 0;

  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(hyper.seed);
  std::vector<TrainingSample> batch;
  batch.reserve(std::min(hyper.batch_size, shard.size()));

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(shard[order[k]]);

      auto [loss, grad] = loss_and_gradient(result.model, batch);
      if (!std::isfinite(loss)) {
        raise(ErrorKind::DivergedLoss, "train_local: loss became non-finite");
      }
      epoch_sum += loss * static_cast<double>(batch.size());
      ++step;

      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto coeffs = layers[l].coefficients();
        const auto& g = grad[l];
        if (hyper.optimizer == Optimizer::Sgd) {
          for (std::size_t k = 0; k < coeffs.size(); ++k) coeffs[k] -= hyper.lr * g[k];
        } else {
          const double b1 = hyper.adam_beta1;
          const double b2 = hyper.adam_beta2;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
          for (std::size_t k = 0; k < coeffs.size(); ++k) {
            m1[l][k] = b1 * m1[l][k] + (1.0 - b1) * g[k];
            m2[l][k] = b2 * m2[l][k] + (1.0 - b2) * g[k] * g[k];
            const double mhat = m1[l][k] / c1;
            const double vhat = m2[l][k] / c2;
            coeffs[k] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.adam_eps);
          }
        }
      }
    }
    result.final_loss = epoch_sum / static_cast<double>(shard.size());
  }
  if (hyper.epochs == 0) result.final_loss = loss_mse(result.model, shard);
  return result;
}

std::size_t param_count(const Architecture& arch) {
  std::size_t total = 0;
  for (std::size_t k = 0; k < arch.degrees.size(); ++k) {
    total += arch.dims[k] * arch.dims[k + 1] * (arch.degrees[k] + 1);
  }
  return total;
}

std::size_t param_count(const ChebyKanModel& model) { return param_count(model.architecture()); }

std::size_t flop_count(const Architecture& arch) {
  std::size_t total = 0;
  for (std::size_t k = 0; k < arch.degrees.size(); ++k) {
    const std::size_t in = arch.dims[k];
    const std::size_t out = arch.dims[k + 1];
    const std::size_t d = arch.degrees[k];
    const std::size_t recurrence = d >= 2 ? 3 * (d - 1) : 0;
    total += in * recurrence + 2 * in * out * (d + 1);
  }
  return total;
}

std::size_t flop_count(const ChebyKanModel& model) { return flop_count(model.architecture()); }

std::vector<EdgeFunction> export_edges(const ChebyKanModel& model) {
  std::vector<EdgeFunction> edges;
  std::vector<double> z(kEdgeTabulationPoints);
  for (std::size_t p = 0; p < z.size(); ++p) {
    z[p] = -1.0 + 2.0 * static_cast<double>(p) / static_cast<double>(z.size() - 1);
  }
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    std::vector<double> basis(layer.degree() + 1);
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        EdgeFunction e;
        e.layer = l;
        e.input = i;
        e.output = o;
        const auto c = layer.coefficients().subspan(layer.index(i, o, 0), layer.degree() + 1);
        e.coefficients.assign(c.begin(), c.end());
        e.z = z;
        e.value.reserve(z.size());
        for (double zp : z) {
          chebyshev_basis(zp, basis);
          e.value.push_back(std::inner_product(c.begin(), c.end(), basis.begin(), 0.0));
        }
        edges.push_back(std::move(e));
      }
    }
  }
  return edges;
}

nlohmann::json edges_to_json(const std::vector<EdgeFunction>& edges) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : edges) {
    out.push_back({{"layer", e.layer},
                   {"input", e.input},
                   {"output", e.output},
                   {"coefficients", e.coefficients},
                   {"z", e.z},
                   {"value", e.value}});
  }
  return out;
}

nlohmann::json to_checkpoint(const ChebyKanModel& model, const TrainingMetadata& meta) {
  const Architecture arch = model.architecture();
  nlohmann::json coeffs = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    nlohmann::json lj = nlohmann::json::array();
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
      nlohmann::json ij = nlohmann::json::array();
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const auto c = layer.coefficients().subspan(layer.index(i, o, 0), layer.degree() + 1);
        ij.push_back(std::vector<double>(c.begin(), c.end()));
      }
      lj.push_back(std::move(ij));
    }
    coeffs.push_back(std::move(lj));
  }
  return {{"schema_version", kCheckpointSchemaVersion},
          {"dims", arch.dims},
          {"degrees", arch.degrees},
          {"coefficients", std::move(coeffs)},
          {"training",
           {{"seed", meta.seed},
            {"rounds", meta.rounds},
            {"final_loss", meta.final_loss},
            {"time_scale", meta.time_scale},
            {"config_hash", meta.config_hash}}}};
}

Checkpoint from_checkpoint(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      raise(ErrorKind::ConfigError, "unsupported checkpoint schema_version");
    }
    Architecture arch;
    arch.dims = doc.at("dims").get<std::vector<std::size_t>>();
    arch.degrees = doc.at("degrees").get<std::vector<std::size_t>>();
    if (arch.dims.size() != arch.degrees.size() + 1) {
      raise(ErrorKind::ConfigError, "checkpoint dims/degrees are inconsistent");
    }
    Checkpoint ck{ChebyKanModel::zeros(arch), {}};
    const auto& coeffs = doc.at("coefficients");
    if (coeffs.size() != arch.degrees.size()) {
      raise(ErrorKind::ConfigError, "checkpoint coefficient layer count mismatch");
    }
    for (std::size_t l = 0; l < arch.degrees.size(); ++l) {
      auto& layer = ck.model.layers()[l];
      const auto& lj = coeffs[l];
      if (lj.size() != layer.in_dim()) raise(ErrorKind::ConfigError, "checkpoint shape mismatch");
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        if (lj[i].size() != layer.out_dim()) raise(ErrorKind::ConfigError, "checkpoint shape mismatch");
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
          const auto c = lj[i][o].get<std::vector<double>>();
          if (c.size() != layer.degree() + 1) raise(ErrorKind::ConfigError, "checkpoint shape mismatch");
          for (std::size_t n = 0; n < c.size(); ++n) {
            if (!std::isfinite(c[n])) raise(ErrorKind::ConfigError, "non-finite checkpoint coefficient");
            layer.coeff(i, o, n) = c[n];
          }
        }
      }
    }
    const auto& t = doc.at("training");
    ck.meta.seed = t.at("seed").get<std::uint64_t>();
    ck.meta.rounds = t.at("rounds").get<std::size_t>();
    ck.meta.final_loss = t.at("final_loss").get<double>();
    ck.meta.time_scale = t.value("time_scale", 1.0);
    ck.meta.config_hash = t.value("config_hash", std::string{});
    return ck;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::ConfigError, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const ChebyKanModel& model,
                     const TrainingMetadata& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::IoError, "cannot write checkpoint " + path);
  out << to_checkpoint(model, meta).dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot read checkpoint " + path);
  try {
    return from_checkpoint(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    raise(ErrorKind::ConfigError, std::string("checkpoint is not valid JSON: ") + e.what());
  }
}

}  // namespace flc::kan
